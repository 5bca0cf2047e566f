import random
import unittest

import lib.kheap as kheap


class NaiveQueue(object):
    """Linear scan priority queue, the reference for KHeap."""

    def __init__(self):
        self.entries = {}

    def push(self, dst, weight):
        self.entries[dst] = weight

    def decrease(self, dst, weight):
        self.entries[dst] = weight

    def pop_min(self):
        dst = min(self.entries, key=lambda d: (self.entries[d], d))
        return dst, self.entries.pop(dst)


class TestHeapArity(unittest.TestCase):

    def testSparseGraph(self):
        self.assertEqual(kheap.heap_arity(10, 12), 2)

    def testDenseGraph(self):
        self.assertEqual(kheap.heap_arity(10, 90), 9)
        self.assertEqual(kheap.new_heap(10, 90).arity, 9)

    def testEmptyGraph(self):
        with self.assertRaises(AssertionError):
            kheap.heap_arity(0, 0)


class TestKHeap(unittest.TestCase):

    def setUp(self):
        self.heap = kheap.KHeap(3)

    def assertSound(self, heap):
        notes = heap.check_invariants()
        self.assertEqual(notes, [], "\n".join(notes))

    def testPopOrder(self):
        for dst, weight in [("d", 4.0), ("a", 2.0), ("c", 1.0), ("b", 2.0)]:
            self.heap.push(kheap.HeapEntry("src", dst, weight))
            self.assertSound(self.heap)
        popped = [self.heap.pop_min().dst for _ in range(4)]
        self.assertEqual(popped, ["c", "a", "b", "d"])
        self.assertEqual(len(self.heap), 0)

    def testTiesBrokenByDst(self):
        for dst in ["fog:2", "fog:10", "fog:1"]:
            self.heap.push(kheap.HeapEntry("s", dst, 0.5))
        self.assertEqual(self.heap.pop_min().dst, "fog:1")
        self.assertEqual(self.heap.pop_min().dst, "fog:10")

    def testInfiniteWeights(self):
        self.heap.push(kheap.HeapEntry("s", "x", kheap.INF))
        self.heap.push(kheap.HeapEntry("s", "y", 3.0))
        self.assertEqual(self.heap.pop_min().dst, "y")
        self.assertEqual(self.heap.peek().weight, kheap.INF)

    def testDecreaseKey(self):
        self.heap.push(kheap.HeapEntry("a", "x", 5.0))
        self.heap.push(kheap.HeapEntry("a", "y", 3.0))
        old = self.heap.peek()
        self.assertEqual(old.dst, "y")
        x_entry = kheap.HeapEntry("a", "x", 5.0)
        self.heap.decrease_key(x_entry, kheap.HeapEntry("b", "x", 1.0))
        self.assertSound(self.heap)
        self.assertIn("x", self.heap)
        self.assertEqual(self.heap.weight_of("x"), 1.0)
        top = self.heap.pop_min()
        self.assertEqual((top.src, top.dst), ("b", "x"))

    def testDecreaseKeyNeedsLowerWeight(self):
        entry = kheap.HeapEntry("a", "x", 2.0)
        self.heap.push(entry)
        with self.assertRaises(kheap.HeapError):
            self.heap.decrease_key(entry, kheap.HeapEntry("b", "x", 2.0))
        with self.assertRaises(kheap.HeapError):
            self.heap.decrease_key(entry, kheap.HeapEntry("b", "y", 1.0))

    def testDecreaseKeyOfAbsentEntry(self):
        with self.assertRaises(kheap.HeapError):
            self.heap.decrease_key(kheap.HeapEntry("a", "x", 2.0),
                                   kheap.HeapEntry("a", "x", 1.0))

    def testDuplicatePush(self):
        self.heap.push(kheap.HeapEntry("a", "x", 2.0))
        with self.assertRaises(kheap.HeapError):
            self.heap.push(kheap.HeapEntry("b", "x", 1.0))

    def testEmptyHeap(self):
        with self.assertRaises(kheap.HeapError):
            self.heap.pop_min()
        with self.assertRaises(kheap.HeapError):
            self.heap.peek()

    def testNegativeWeight(self):
        with self.assertRaises(AssertionError):
            kheap.HeapEntry("a", "x", -1.0)

    def testCorruptionIsReported(self):
        for dst, weight in [("a", 1.0), ("b", 2.0), ("c", 3.0)]:
            self.heap.push(kheap.HeapEntry("s", dst, weight))
        self.heap._entries[0].weight = 10.0
        self.assertTrue(self.heap.check_invariants())

    def testAgainstNaiveQueue(self):
        rng = random.Random(7)
        for arity in [2, 3, 4, 8]:
            heap = kheap.KHeap(arity)
            naive = NaiveQueue()
            next_id = 0
            for _ in range(3000):
                roll = rng.random()
                if roll < 0.45 or not naive.entries:
                    dst = "n%d" % next_id
                    next_id += 1
                    weight = rng.choice([rng.random() * 10, kheap.INF])
                    heap.push(kheap.HeapEntry("s", dst, weight))
                    naive.push(dst, weight)
                elif roll < 0.75:
                    dst = rng.choice(sorted(naive.entries))
                    current = naive.entries[dst]
                    if current == 0:
                        continue
                    weight = rng.random() * min(current, 10.0)
                    if not weight < current:
                        continue
                    heap.decrease_key(kheap.HeapEntry("s", dst, current),
                                      kheap.HeapEntry("t", dst, weight))
                    naive.decrease(dst, weight)
                else:
                    entry = heap.pop_min()
                    self.assertEqual((entry.dst, entry.weight),
                                     naive.pop_min())
                self.assertEqual(len(heap), len(naive.entries))
            self.assertSound(heap)
            while naive.entries:
                entry = heap.pop_min()
                self.assertEqual((entry.dst, entry.weight), naive.pop_min())


if __name__ == '__main__':
    unittest.main()
