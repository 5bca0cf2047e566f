"""A k-ary min-heap of links with decrease-key addressed by destination.

Entries are ordered by (weight, dst) so that ties are broken by the
lexical order of the destination node id and pop order is deterministic.
Infinite weights are represented with float('inf').
"""

import math

INF = float('inf')


class HeapError(Exception):
    """Misuse of the heap (duplicate push, empty pop, bad decrease-key)."""


class HeapEntry(object):
    """A link reaching `dst` from `src` with the total path weight."""

    __slots__ = ('src', 'dst', 'weight', 'link')

    def __init__(self, src, dst, weight, link=None):
        assert weight >= 0, "negative heap weight: %r" % weight
        self.src = src
        self.dst = dst
        self.weight = weight
        self.link = link

    def sort_key(self):
        return (self.weight, self.dst)

    def __repr__(self):
        return "HeapEntry(%s -> %s, w=%r)" % (self.src, self.dst, self.weight)


def heap_arity(node_count, link_count):
    """Returns k = max(2, floor(m / n))."""
    assert node_count >= 1, "heap needs at least one node"
    return max(2, link_count // node_count)


def new_heap(node_count, link_count):
    """Creates a heap sized for a graph with n nodes and m links."""
    return KHeap(heap_arity(node_count, link_count))


class KHeap(object):
    """k-ary min-heap with a dst -> position index."""

    def __init__(self, arity=2):
        assert arity >= 2, "heap arity must be at least 2: %r" % arity
        self.arity = arity
        self._entries = []
        self._position = {}

    def __len__(self):
        return len(self._entries)

    def __contains__(self, dst):
        return dst in self._position

    def peek(self):
        if not self._entries:
            raise HeapError("peek on an empty heap")
        return self._entries[0]

    def weight_of(self, dst):
        return self._entries[self._position[dst]].weight

    def push(self, entry):
        if entry.dst in self._position:
            raise HeapError("an entry for %s is already in the heap; use "
                            "decrease_key" % entry.dst)
        self._entries.append(entry)
        idx = len(self._entries) - 1
        self._position[entry.dst] = idx
        self._sift_up(idx)

    def pop_min(self):
        entries = self._entries
        if not entries:
            raise HeapError("pop_min on an empty heap")
        top = entries[0]
        last = entries.pop()
        del self._position[top.dst]
        if entries:
            entries[0] = last
            self._position[last.dst] = 0
            self._sift_down(0)
        return top

    def decrease_key(self, old, new):
        """Replaces the entry stored for old.dst with a strictly cheaper one.

        The source of the link may change; the entry is then sifted up.
        """
        if new.dst != old.dst:
            raise HeapError("decrease_key cannot change dst: %s -> %s"
                            % (old.dst, new.dst))
        idx = self._position.get(old.dst)
        if idx is None:
            raise HeapError("no entry for %s in the heap" % old.dst)
        current = self._entries[idx]
        if not new.weight < current.weight:
            raise HeapError("decrease_key needs a strictly lower weight: "
                            "%r >= %r" % (new.weight, current.weight))
        self._entries[idx] = new
        self._sift_up(idx)

    def _sift_up(self, idx):
        entries = self._entries
        position = self._position
        entry = entries[idx]
        key = entry.sort_key()
        while idx > 0:
            parent_idx = (idx - 1) // self.arity
            parent = entries[parent_idx]
            if parent.sort_key() <= key:
                break
            entries[idx] = parent
            position[parent.dst] = idx
            idx = parent_idx
        entries[idx] = entry
        position[entry.dst] = idx

    def _sift_down(self, idx):
        entries = self._entries
        position = self._position
        end = len(entries)
        entry = entries[idx]
        key = entry.sort_key()
        while True:
            first_child = self.arity * idx + 1
            if first_child >= end:
                break
            # Find the smallest child.
            best = first_child
            best_key = entries[first_child].sort_key()
            for child in range(first_child + 1,
                               min(end, first_child + self.arity)):
                child_key = entries[child].sort_key()
                if child_key < best_key:
                    best = child
                    best_key = child_key
            if key <= best_key:
                break
            entries[idx] = entries[best]
            position[entries[idx].dst] = idx
            idx = best
        entries[idx] = entry
        position[entry.dst] = idx

    def check_invariants(self):
        """Full scan of the heap order and the position index.

        Returns:
            A list of strings describing violations; empty when sound.
        """
        notes = []
        entries = self._entries
        for idx in range(1, len(entries)):
            parent_idx = (idx - 1) // self.arity
            if entries[parent_idx].sort_key() > entries[idx].sort_key():
                notes.append("heap order violated at %d (parent %d)"
                             % (idx, parent_idx))
        if len(self._position) != len(entries):
            notes.append("position index has %d entries for %d slots"
                         % (len(self._position), len(entries)))
        for dst, idx in self._position.items():
            if idx >= len(entries) or entries[idx].dst != dst:
                notes.append("position index of %s points to slot %d"
                             % (dst, idx))
        for entry in entries:
            if math.isnan(entry.weight):
                notes.append("NaN weight for %s" % entry.dst)
        return notes
