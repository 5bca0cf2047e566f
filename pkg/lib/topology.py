"""Graph model of the managed network.

The Topology is the single source of truth for all resources handed out
by the orchestrator. It is a directed graph of typed nodes (end-devices,
fog-devices, switches, controllers) connected by capacity-annotated links.
Every physical full-duplex link is modeled as two directed edges, each with
its own bandwidth ledger. Fog-devices additionally carry a compute ledger.

Units used throughout the library:
    - bandwidth: integer bits per second,
    - processing: integer millicores (1/1000 of a CPU core),
    - memory: integer bytes.

A TopologySnapshot is the observed state of the network (as read from a
topology file or produced by a generator). `update_topology` reconciles a
live Topology against a snapshot and returns the ChangeSet it applied.
"""

import bisect
import copy
import json
import logging
import re

from pathlib2 import Path

logger = logging.getLogger(__name__)

END_DEVICE = "EndDevice"
FOG_DEVICE = "FogDevice"
SWITCH = "Switch"
CONTROLLER = "Controller"
UNKNOWN = "Unknown"
NODE_KINDS = (END_DEVICE, FOG_DEVICE, SWITCH, CONTROLLER, UNKNOWN)

KBPS = 1000
MBPS = 1000 * KBPS
GBPS = 1000 * MBPS

MILLICORES_PER_CORE = 1000
MIB = 1024 * 1024
GIB = 1024 * MIB

# Bandwidth set aside on every link for controller traffic.
DEFAULT_CONTROL_BW = 50 * MBPS


class TopologyError(Exception):
    """Base class for topology errors."""


class SnapshotError(TopologyError):
    """An observed snapshot cannot be applied to the topology."""


class GreetingConflictError(TopologyError):
    """A device greeted with a type contradicting its registered type."""


class MacFormatError(TopologyError):
    """A string is not a colon separated 6-octet MAC address."""


class UnknownNodeError(TopologyError):
    """A node id is not present in the topology."""


def cores_to_millicores(cores):
    """Converts a (possibly fractional) number of cores to millicores."""
    return int(round(float(cores) * MILLICORES_PER_CORE))


def millicores_to_cores(millicores):
    return millicores / float(MILLICORES_PER_CORE)


_MAC_RE = re.compile(r'^[0-9a-fA-F]{2}(?::[0-9a-fA-F]{2}){5}$')


def mac_to_openflow_id(mac):
    """Converts a bridge MAC address to an OpenFlow node id.

    The colons are stripped, the remaining 48-bit hex number is converted
    to decimal and "openflow:" is prepended.

    Args:
        mac: a string, e.g. "00:00:00:00:00:ff"

    Returns:
        A string, e.g. "openflow:255"

    Raises:
        MacFormatError: when mac is not of the xx:xx:xx:xx:xx:xx form.
    """
    if not isinstance(mac, str) or not _MAC_RE.match(mac):
        raise MacFormatError("malformed MAC address: %r" % (mac,))
    return "openflow:%d" % int(mac.replace(':', ''), 16)


class ComputeLedger(object):
    """Processing and memory capacity of a fog-device and what is allocated.

    Attributes:
        total_processing: an int, millicores available on the device
        total_memory: an int, bytes available on the device
        alloc_processing: an int, millicores handed out to services
        alloc_memory: an int, bytes handed out to services
    """

    def __init__(self, total_processing, total_memory,
                 alloc_processing=0, alloc_memory=0):
        self.total_processing = int(total_processing)
        self.total_memory = int(total_memory)
        self.alloc_processing = int(alloc_processing)
        self.alloc_memory = int(alloc_memory)
        assert self.total_processing >= 0 and self.total_memory >= 0, \
            "negative fog capacity: %r" % self

    def available_processing(self):
        return self.total_processing - self.alloc_processing

    def available_memory(self):
        return self.total_memory - self.alloc_memory

    def charge(self, processing, memory):
        assert 0 <= processing <= self.available_processing(), \
            "processing over-allocation: %d on %r" % (processing, self)
        assert 0 <= memory <= self.available_memory(), \
            "memory over-allocation: %d on %r" % (memory, self)
        self.alloc_processing += processing
        self.alloc_memory += memory

    def release(self, processing, memory):
        assert 0 <= processing <= self.alloc_processing, \
            "processing release underflow: %d on %r" % (processing, self)
        assert 0 <= memory <= self.alloc_memory, \
            "memory release underflow: %d on %r" % (memory, self)
        self.alloc_processing -= processing
        self.alloc_memory -= memory

    def __eq__(self, other):
        if not isinstance(other, ComputeLedger):
            return NotImplemented
        return self._key() == other._key()

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def _key(self):
        return (self.total_processing, self.total_memory,
                self.alloc_processing, self.alloc_memory)

    def __repr__(self):
        return ("ComputeLedger(total=%dm/%dB, alloc=%dm/%dB)" %
                self._key())


class Node(object):
    """A single network node.

    Attributes:
        id: a string, the node id (e.g. "openflow:7", "end:3", "fog:2")
        kind: one of NODE_KINDS
        compute: a ComputeLedger, present iff kind is FOG_DEVICE
        address: a string, the network address used in flow matches
        report: the latest ResourceReport received from a fog agent
    """

    def __init__(self, node_id, kind=UNKNOWN, compute=None, address=None):
        assert node_id, "empty node id"
        assert kind in NODE_KINDS, "node kind is not valid: %r" % kind
        self.id = node_id
        self.kind = kind
        self.compute = compute
        self.address = address
        self.report = None

    def flow_address(self):
        """Returns the address used to match this node's traffic."""
        return self.address if self.address else self.id

    def __repr__(self):
        return "Node(%s, %s)" % (self.id, self.kind)


class Link(object):
    """A directed link between two nodes.

    Attributes:
        src, dst: strings, node ids of the endpoints
        src_port, dst_port: port identifiers at both endpoints
        total_bw: an int, link capacity, bits/s
        alloc_bw: an int, allocated bandwidth (includes control_bw), bits/s
        control_bw: an int, the startup control-traffic reservation, bits/s
        utilization: an int, last observed traffic rate, bits/s (telemetry
        only, never used for allocation decisions)
        tx_bytes: an int, last observed transmitted byte counter
    """

    def __init__(self, src, dst, src_port, dst_port, total_bw,
                 alloc_bw=0, control_bw=0, utilization=0, tx_bytes=0):
        self.src = src
        self.dst = dst
        self.src_port = src_port
        self.dst_port = dst_port
        self.total_bw = int(total_bw)
        self.alloc_bw = int(alloc_bw)
        self.control_bw = int(control_bw)
        self.utilization = utilization
        self.tx_bytes = tx_bytes

    @property
    def key(self):
        return (self.src, self.dst)

    def available_bw(self):
        return self.total_bw - self.alloc_bw

    def __repr__(self):
        return "Link(%s -> %s, %d/%d bps)" % (
            self.src, self.dst, self.alloc_bw, self.total_bw)


def available_bw(link):
    """Returns T_B(l) - A_B(l), the bandwidth still free on a link."""
    return link.total_bw - link.alloc_bw


class TopologySnapshot(object):
    """Observed network state: node declarations and directed links.

    Use `create_from_file` or `from_dict` to build one from the topology
    file format, and check the `valid` attribute before use; `notes`
    explains why a snapshot was rejected.

    Attributes:
        nodes: a dict, node id -> dict(kind, total_processing, total_memory,
        address); capacities are millicores / bytes or None
        links: a dict, (src, dst) -> dict(src_port, dst_port, total_bw,
        utilization)
        valid: a bool
        notes: a list of strings
    """

    def __init__(self):
        self.nodes = {}
        self.links = {}
        self.valid = True
        self.notes = []

    @staticmethod
    def create_from_file(filename):
        """Reads a topology file (a JSON object).

        Args:
            filename: a string, the name of the topology file

        Returns:
            A TopologySnapshot; check its `valid` attribute.
        """
        path = Path(filename).expanduser().absolute()
        snapshot = TopologySnapshot()
        try:
            with path.open('r', encoding='utf-8') as topology_file:
                obj = json.load(topology_file)
        except (IOError, OSError, ValueError) as e:
            snapshot.notes.append(
                "Error: cannot read topology file %s: %s" % (path, e))
            snapshot.valid = False
            return snapshot
        return TopologySnapshot.from_dict(obj)

    @staticmethod
    def from_dict(obj):
        """Builds a snapshot from the parsed topology file object."""
        snapshot = TopologySnapshot()
        if not isinstance(obj, dict):
            snapshot._error("topology document is not an object")
            return snapshot
        for entry in _as_list(obj.get('nodes'), snapshot, 'nodes'):
            snapshot._parse_node(entry)
        default_duplex = obj.get('duplex', True)
        for entry in _as_list(obj.get('links'), snapshot, 'links'):
            snapshot._parse_link(entry, default_duplex)
        if snapshot.valid:
            snapshot.notes.extend(snapshot.check())
            snapshot.valid = not any(
                note.startswith("Error") for note in snapshot.notes)
        return snapshot

    def _error(self, message):
        self.notes.append("Error: " + message)
        self.valid = False

    def _parse_node(self, entry):
        if not isinstance(entry, dict) or not entry.get('id'):
            self._error("node entry without an id: %r" % (entry,))
            return
        kind = entry.get('kind', UNKNOWN)
        if kind not in NODE_KINDS:
            self._error("node %s has an invalid kind: %r" % (entry['id'], kind))
            return
        if entry['id'] in self.nodes:
            self._error("duplicate node id: %s" % entry['id'])
            return
        processing = entry.get('total_processing')
        memory = entry.get('total_memory')
        if kind == FOG_DEVICE and (processing is None or memory is None):
            self._error("fog-device %s lacks total_processing/total_memory"
                        % entry['id'])
            return
        try:
            self.add_node(
                entry['id'], kind,
                None if processing is None else cores_to_millicores(processing),
                None if memory is None else int(memory),
                entry.get('address'))
        except (TypeError, ValueError) as e:
            self._error("bad capacities on node %s: %s" % (entry['id'], e))

    def _parse_link(self, entry, default_duplex):
        required = ('src', 'dst', 'src_port', 'dst_port', 'total_bw')
        if not isinstance(entry, dict) or any(k not in entry for k in required):
            self._error("link entry lacks one of %s: %r" % (required, entry))
            return
        try:
            total_bw = int(entry['total_bw'])
        except (TypeError, ValueError):
            self._error("link %s->%s has a bad total_bw: %r" % (
                entry['src'], entry['dst'], entry['total_bw']))
            return
        if total_bw < 0:
            self._error("link %s->%s has a negative capacity" % (
                entry['src'], entry['dst']))
            return
        self.add_link(entry['src'], entry['dst'], entry['src_port'],
                      entry['dst_port'], total_bw,
                      duplex=entry.get('duplex', default_duplex),
                      utilization=entry.get('utilization', 0))

    def add_node(self, node_id, kind=UNKNOWN, total_processing=None,
                 total_memory=None, address=None):
        """Declares a node; capacities in millicores and bytes."""
        self.nodes[node_id] = dict(
            kind=kind, total_processing=total_processing,
            total_memory=total_memory, address=address)

    def add_link(self, src, dst, src_port, dst_port, total_bw, duplex=True,
                 utilization=0):
        """Declares a link, and its reverse edge when duplex is set."""
        self.links[(src, dst)] = dict(
            src_port=src_port, dst_port=dst_port, total_bw=int(total_bw),
            utilization=utilization)
        if duplex:
            self.links[(dst, src)] = dict(
                src_port=dst_port, dst_port=src_port, total_bw=int(total_bw),
                utilization=utilization)

    def check(self):
        """Checks structural soundness; returns a list of error notes."""
        notes = []
        for (src, dst) in sorted(self.links):
            for endpoint in (src, dst):
                if endpoint not in self.nodes:
                    notes.append("Error: link %s->%s references unknown "
                                 "node %s" % (src, dst, endpoint))
            if (dst, src) not in self.links:
                notes.append("Error: link %s->%s has no reverse edge"
                             % (src, dst))
        return notes

    def to_dict(self):
        """Returns the topology file representation of the snapshot."""
        nodes = []
        for node_id in sorted(self.nodes):
            info = self.nodes[node_id]
            entry = {'id': node_id, 'kind': info['kind']}
            if info['total_processing'] is not None:
                entry['total_processing'] = millicores_to_cores(
                    info['total_processing'])
            if info['total_memory'] is not None:
                entry['total_memory'] = info['total_memory']
            if info['address'] is not None:
                entry['address'] = info['address']
            nodes.append(entry)
        links = []
        for (src, dst) in sorted(self.links):
            info = self.links[(src, dst)]
            links.append({'src': src, 'dst': dst,
                          'src_port': info['src_port'],
                          'dst_port': info['dst_port'],
                          'total_bw': info['total_bw']})
        return {'duplex': False, 'nodes': nodes, 'links': links}

    def structure(self):
        """Returns the comparable part of the snapshot (no telemetry)."""
        links = dict(
            (key, (info['src_port'], info['dst_port'], info['total_bw']))
            for key, info in self.links.items())
        return self.nodes, links

    def __eq__(self, other):
        if not isinstance(other, TopologySnapshot):
            return NotImplemented
        return self.structure() == other.structure()

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __str__(self):
        return "TopologySnapshot(valid=%s, nodes: %d, links: %d)" % (
            self.valid, len(self.nodes), len(self.links))


def _as_list(value, snapshot, name):
    if value is None:
        return []
    if not isinstance(value, list):
        snapshot._error("'%s' is not a list" % name)
        return []
    return value


class ChangeSet(object):
    """Differences between a Topology and an observed snapshot.

    Attributes:
        added_nodes: a dict, node id -> snapshot node info
        removed_nodes: a sorted list of node ids
        updated_nodes: a dict, node id -> snapshot node info
        added_links: a dict, (src, dst) -> snapshot link info
        removed_links: a sorted list of (src, dst)
        updated_links: a dict, (src, dst) -> snapshot link info
    """

    def __init__(self):
        self.added_nodes = {}
        self.removed_nodes = []
        self.updated_nodes = {}
        self.added_links = {}
        self.removed_links = []
        self.updated_links = {}

    def is_empty(self):
        return not (self.added_nodes or self.removed_nodes or
                    self.updated_nodes or self.added_links or
                    self.removed_links or self.updated_links)

    def touches_node(self, node_id):
        return node_id in self.removed_nodes or node_id in self.updated_nodes

    def touches_link(self, key):
        return key in self.removed_links or key in self.updated_links

    def apply(self, topology):
        """Applies the change set to a topology, preserving ledgers.

        Removed links go first, then removed nodes, then additions and
        updates. The revision is bumped once iff the change set is not
        empty.
        """
        if self.is_empty():
            return
        for key in self.removed_links:
            topology.remove_link(*key)
        for node_id in self.removed_nodes:
            topology.remove_node(node_id)
        for node_id in sorted(self.added_nodes):
            info = self.added_nodes[node_id]
            topology.add_node(node_id, info['kind'], info['total_processing'],
                              info['total_memory'], info['address'])
        for node_id in sorted(self.updated_nodes):
            topology._update_node(node_id, self.updated_nodes[node_id])
        for key in sorted(self.added_links):
            info = self.added_links[key]
            topology.add_link(key[0], key[1], info['src_port'],
                              info['dst_port'], info['total_bw'],
                              info.get('utilization', 0))
        for key in sorted(self.updated_links):
            topology._update_link(key, self.updated_links[key])
        topology._bump()

    def __str__(self):
        return ("ChangeSet(+%d/-%d/~%d nodes, +%d/-%d/~%d links)" % (
            len(self.added_nodes), len(self.removed_nodes),
            len(self.updated_nodes), len(self.added_links),
            len(self.removed_links), len(self.updated_links)))


class Topology(object):
    """Directed graph of typed nodes with bandwidth and compute ledgers.

    Mutations must happen under the orchestrator's allocation lock.
    Readers wanting a consistent view without the lock use `copy()`.

    Attributes:
        nodes: a dict, node id -> Node
        links: a dict, (src, dst) -> Link
        revision: an int, bumped on every structural mutation
        control_bw: an int, per-link control reservation, bits/s
    """

    def __init__(self):
        self.nodes = {}
        self.links = {}
        self.revision = 0
        self.control_bw = 0
        # src -> sorted list of dst ids, for deterministic traversal.
        self._out = {}

    @staticmethod
    def from_snapshot(snapshot, control_bw=0):
        """Builds a Topology from a valid snapshot."""
        if not snapshot.valid:
            raise SnapshotError("invalid snapshot: %s" % "; ".join(
                snapshot.notes))
        topology = Topology()
        topology.control_bw = int(control_bw)
        update_topology(topology, snapshot)
        return topology

    def _bump(self):
        self.revision += 1

    @property
    def node_count(self):
        return len(self.nodes)

    @property
    def link_count(self):
        return len(self.links)

    def node(self, node_id):
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError("unknown node: %s" % node_id)

    def add_node(self, node_id, kind=UNKNOWN, total_processing=None,
                 total_memory=None, address=None):
        """Adds a node; fog-devices get a ComputeLedger from the totals."""
        if node_id in self.nodes:
            raise TopologyError("node already exists: %s" % node_id)
        compute = None
        if kind == FOG_DEVICE:
            compute = ComputeLedger(total_processing or 0, total_memory or 0)
        node = Node(node_id, kind, compute, address)
        self.nodes[node_id] = node
        self._out[node_id] = []
        self._bump()
        return node

    def remove_node(self, node_id):
        """Removes a node together with all its incident links."""
        self.node(node_id)
        incident = [key for key in self.links if node_id in key]
        for key in incident:
            self.remove_link(*key)
        del self.nodes[node_id]
        del self._out[node_id]
        self._bump()

    def add_link(self, src, dst, src_port, dst_port, total_bw, utilization=0):
        """Adds a directed link and charges the control reservation on it."""
        self.node(src)
        self.node(dst)
        if (src, dst) in self.links:
            raise TopologyError("link already exists: %s->%s" % (src, dst))
        control = min(self.control_bw, int(total_bw))
        link = Link(src, dst, src_port, dst_port, total_bw,
                    alloc_bw=control, control_bw=control,
                    utilization=utilization)
        self.links[(src, dst)] = link
        bisect.insort(self._out[src], dst)
        self._bump()
        return link

    def remove_link(self, src, dst):
        self.link(src, dst)
        del self.links[(src, dst)]
        self._out[src].remove(dst)
        self._bump()

    def link(self, src, dst):
        try:
            return self.links[(src, dst)]
        except KeyError:
            raise TopologyError("unknown link: %s->%s" % (src, dst))

    def has_link(self, src, dst):
        return (src, dst) in self.links

    def reverse(self, link):
        return self.link(link.dst, link.src)

    def outgoing(self, src):
        """Returns the outgoing links of a node, ordered by dst id."""
        links = self.links
        return [links[(src, dst)] for dst in self._out.get(src, ())]

    def nodes_of_kind(self, kind):
        return sorted(n.id for n in self.nodes.values() if n.kind == kind)

    def fog_devices(self):
        return self.nodes_of_kind(FOG_DEVICE)

    def end_devices(self):
        return self.nodes_of_kind(END_DEVICE)

    def switches(self):
        return self.nodes_of_kind(SWITCH)

    def controllers(self):
        return self.nodes_of_kind(CONTROLLER)

    def reserve_control_bandwidth(self, amount):
        """Charges the control-traffic reservation on every link.

        Re-reserving replaces the previous amount. The reservation is
        clamped to each link's capacity and is also charged on links
        added later.
        """
        self.control_bw = int(amount)
        for link in self.links.values():
            control = min(self.control_bw, link.total_bw)
            new_alloc = link.alloc_bw - link.control_bw + control
            if new_alloc > link.total_bw:
                raise TopologyError(
                    "control reservation does not fit on %r" % link)
            link.alloc_bw = new_alloc
            link.control_bw = control

    def charge_bandwidth(self, src, dst, bw):
        link = self.link(src, dst)
        assert 0 <= bw <= link.available_bw(), \
            "bandwidth over-allocation: %d on %r" % (bw, link)
        link.alloc_bw += bw

    def release_bandwidth(self, src, dst, bw):
        link = self.link(src, dst)
        assert 0 <= bw <= link.alloc_bw - link.control_bw, \
            "bandwidth release underflow: %d on %r" % (bw, link)
        link.alloc_bw -= bw

    def record_link_utilization(self, src, dst, utilization, tx_bytes=None):
        """Stores link telemetry; does not affect allocation."""
        link = self.link(src, dst)
        link.utilization = utilization
        if tx_bytes is not None:
            link.tx_bytes = tx_bytes

    def _update_node(self, node_id, info):
        node = self.node(node_id)
        if info['kind'] != UNKNOWN:
            node.kind = info['kind']
        if node.kind == FOG_DEVICE:
            if node.compute is None:
                node.compute = ComputeLedger(info['total_processing'] or 0,
                                             info['total_memory'] or 0)
            if info['total_processing'] is not None:
                node.compute.total_processing = info['total_processing']
            if info['total_memory'] is not None:
                node.compute.total_memory = info['total_memory']
        else:
            node.compute = None
        if info['address'] is not None:
            node.address = info['address']

    def _update_link(self, key, info):
        link = self.link(*key)
        link.src_port = info['src_port']
        link.dst_port = info['dst_port']
        link.total_bw = info['total_bw']
        control = min(self.control_bw, link.total_bw)
        link.alloc_bw = link.alloc_bw - link.control_bw + control
        link.control_bw = control

    def copy(self):
        """Returns an independent point-in-time copy."""
        return copy.deepcopy(self)

    def to_snapshot(self):
        snapshot = TopologySnapshot()
        for node_id, node in self.nodes.items():
            processing = memory = None
            if node.compute is not None:
                processing = node.compute.total_processing
                memory = node.compute.total_memory
            snapshot.add_node(node_id, node.kind, processing, memory,
                              node.address)
        for key, link in self.links.items():
            snapshot.add_link(key[0], key[1], link.src_port, link.dst_port,
                              link.total_bw, duplex=False,
                              utilization=link.utilization)
        return snapshot

    def __str__(self):
        return "Topology(rev=%d, nodes: %d, links: %d)" % (
            self.revision, len(self.nodes), len(self.links))


def _node_differs(node, info):
    if info['kind'] != UNKNOWN and info['kind'] != node.kind:
        return True
    for field in ('total_processing', 'total_memory'):
        if info[field] is None:
            continue
        if node.compute is None or getattr(node.compute, field) != info[field]:
            return True
    return info['address'] is not None and info['address'] != node.address


def _link_differs(link, info):
    return (link.src_port != info['src_port'] or
            link.dst_port != info['dst_port'] or
            link.total_bw != info['total_bw'])


def diff_topology(current, observed):
    """Computes the ChangeSet turning `current` into `observed`.

    Does not mutate anything. Raises SnapshotError when the snapshot is
    structurally unsound or when applying it would violate a ledger
    (capacity shrunk below the allocated amount, allocated fog retyped).
    """
    if not observed.valid:
        raise SnapshotError("invalid snapshot: %s" % "; ".join(observed.notes))
    problems = observed.check()
    if problems:
        raise SnapshotError("; ".join(problems))

    changes = ChangeSet()
    for node_id, info in observed.nodes.items():
        node = current.nodes.get(node_id)
        if node is None:
            if info['kind'] == FOG_DEVICE and (
                    info['total_processing'] is None or
                    info['total_memory'] is None):
                raise SnapshotError("fog-device %s lacks capacities" % node_id)
            changes.added_nodes[node_id] = info
        elif _node_differs(node, info):
            _check_node_update(node, info)
            changes.updated_nodes[node_id] = info
    changes.removed_nodes = sorted(
        node_id for node_id in current.nodes if node_id not in observed.nodes)

    for key, info in observed.links.items():
        link = current.links.get(key)
        if link is None:
            changes.added_links[key] = info
        elif _link_differs(link, info):
            control = min(current.control_bw, info['total_bw'])
            if link.alloc_bw - link.control_bw + control > info['total_bw']:
                raise SnapshotError(
                    "capacity of %s->%s would drop below its allocation"
                    % key)
            changes.updated_links[key] = info
    changes.removed_links = sorted(
        key for key in current.links if key not in observed.links)
    return changes


def _check_node_update(node, info):
    compute = node.compute
    allocated = compute is not None and (
        compute.alloc_processing or compute.alloc_memory)
    if info['kind'] not in (UNKNOWN, FOG_DEVICE) and allocated:
        raise SnapshotError("fog-device %s holds allocations and cannot "
                            "become %s" % (node.id, info['kind']))
    if info['kind'] == FOG_DEVICE and compute is None and (
            info['total_processing'] is None or info['total_memory'] is None):
        raise SnapshotError("fog-device %s lacks capacities" % node.id)
    if compute is not None:
        if (info['total_processing'] is not None and
                info['total_processing'] < compute.alloc_processing):
            raise SnapshotError("processing of %s would drop below its "
                                "allocation" % node.id)
        if (info['total_memory'] is not None and
                info['total_memory'] < compute.alloc_memory):
            raise SnapshotError("memory of %s would drop below its "
                                "allocation" % node.id)


def update_topology(current, observed):
    """Brings a Topology in line with an observed snapshot.

    Nodes and links are added, removed or updated; allocation ledgers of
    surviving elements are preserved. Link telemetry is refreshed as well
    but is not part of the returned diff.

    Args:
        current: a Topology, mutated in place
        observed: a TopologySnapshot

    Returns:
        The applied ChangeSet. The revision is bumped iff it is not empty.

    Raises:
        SnapshotError: the snapshot was rejected, current is unchanged.
    """
    changes = diff_topology(current, observed)
    changes.apply(current)
    for key, info in observed.links.items():
        current.links[key].utilization = info.get('utilization', 0)
    if not changes.is_empty():
        logger.info("topology updated to revision %d: %s",
                    current.revision, changes)
    return changes


def register_greeting(topology, greeting):
    """Types a node according to a greeting message.

    Unknown nodes are created first. Fog-devices get a ComputeLedger
    initialized from the greeting's capacities. Repeating a greeting with
    the same device type is a no-op.

    Args:
        topology: a Topology
        greeting: an object with node_id, device_type, total_processing
        (cores), total_memory (bytes) and address attributes

    Raises:
        GreetingConflictError: the node is already typed differently.
        TopologyError: the greeting itself is malformed.
    """
    if greeting.device_type not in (END_DEVICE, FOG_DEVICE):
        raise TopologyError("greeting with invalid device type: %r"
                            % (greeting.device_type,))
    node = topology.nodes.get(greeting.node_id)
    if node is None:
        node = topology.add_node(greeting.node_id)
    if node.kind == greeting.device_type:
        return
    if node.kind != UNKNOWN:
        raise GreetingConflictError(
            "misconfigured device %s: registered as %s, greeted as %s"
            % (node.id, node.kind, greeting.device_type))
    if greeting.device_type == FOG_DEVICE:
        if greeting.total_processing is None or greeting.total_memory is None:
            raise TopologyError("fog greeting from %s lacks capacities"
                                % node.id)
        node.compute = ComputeLedger(
            cores_to_millicores(greeting.total_processing),
            int(greeting.total_memory))
    node.kind = greeting.device_type
    if greeting.address:
        node.address = greeting.address
    topology._bump()
    logger.info("registered %s as %s", node.id, node.kind)
