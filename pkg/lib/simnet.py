"""Discrete-event simulation of the control plane and of workloads.

Three things live here:
    - topology generators (leaf-spine "a", three-level tree "b", the
      eight end-device testbed and line topologies for hop studies),
    - simulate_request(), the delay breakdown of fulfilling one request
      over a store-and-forward control network,
    - run_scenario(), which replays timed service / shutdown events
      against a real Orchestrator and SimulatedFabric inside a simpy
      environment and collects a MetricSet.

Control messages travel hop by hop along the fewest-hop path between the
controller and a device. A message of B bytes takes B * 8 / y seconds per
hop, inflated by 1 / (1 - x / capacity) where x is the background data
load and y the bandwidth allocated to control traffic.
"""

import collections
import copy
import json
import logging
import math
import numbers
import random
import time

import networkx as nx
import numpy as np
import simpy
from pathlib2 import Path

import fog_lib
import lib.protocol as protocol
import lib.raa as raa
import lib.southbound as southbound
import lib.topology as topology

logger = logging.getLogger(__name__)

LEAF_SPINE = "a"
TREE = "b"

# Event kinds of the scenario trace.
MSG_ARRIVAL = "MsgArrival"
MSG_DEPARTURE = "MsgDeparture"
RAA_START = "RAAStart"
RAA_END = "RAAEnd"
CONFIG_APPLIED = "ConfigApplied"

SimEvent = collections.namedtuple('SimEvent', ['time', 'seq', 'kind',
                                               'payload'])

Load = collections.namedtuple('Load', ['data_bw', 'control_bw'])

SweepPoint = collections.namedtuple(
    'SweepPoint', ['config', 'metric', 'median', 'q1', 'q3', 'count'])


class SimulationError(Exception):
    """The simulation cannot run (bad parameters, saturated links...)."""


class SimConfig(object):
    """Parameters of the control-plane model.

    Message sizes are in bytes, times in seconds, rates in bits/s.
    """

    request_bytes = 256
    response_bytes = 128
    shutdown_bytes = 128
    shutdown_reply_bytes = 64

    # Time a switch / fog-device needs to execute one configuration call.
    switch_config_exec = 0.0
    fog_config_exec = 0.0

    # Measure the allocation wall time, or charge raa_fixed_time.
    measure_raa_time = True
    raa_fixed_time = 0.001

    # Background data load x on every link.
    data_load = 0

    # Bandwidth y allocated to control traffic.
    control_bw = 10 * topology.MBPS

    # Stream apps offer this multiple of their reservation.
    stream_overdrive = 1.5

    # Seconds between two throughput samples.
    sample_period = 1.0

    def load(self):
        return Load(self.data_load, self.control_bw)


class FixedRaaTime(SimConfig):
    """Deterministic variant: allocation time is not measured."""

    measure_raa_time = False


#
# Topology generators.
#


class TopologyGen(object):
    """Parameters of a generated topology.

    Attributes:
        kind: LEAF_SPINE ("a", two switch levels) or TREE ("b", three)
        levels: a tuple of switch counts, bottom level first
        fogs_per_top_switch: an int
        end_devices: an int, spread round-robin on level 1 switches
        link_bw: an int, bits/s, capacity of every link
        fog_processing: cores of each fog-device
        fog_memory: bytes of each fog-device
    """

    def __init__(self, kind, levels, fogs_per_top_switch=5, end_devices=0,
                 link_bw=topology.GBPS, fog_processing=4,
                 fog_memory=8 * topology.GIB):
        self.kind = kind
        self.levels = tuple(levels)
        self.fogs_per_top_switch = fogs_per_top_switch
        self.end_devices = end_devices
        self.link_bw = link_bw
        self.fog_processing = fog_processing
        self.fog_memory = fog_memory
        self.check()

    def check(self):
        expected = {LEAF_SPINE: 2, TREE: 3}.get(self.kind)
        if expected is None:
            raise SimulationError("unknown topology kind: %r" % (self.kind,))
        if len(self.levels) != expected:
            raise SimulationError("topology %s needs %d level counts, got %r"
                                  % (self.kind, expected, self.levels))
        if any(count < 1 for count in self.levels):
            raise SimulationError("level counts must be at least 1: %r"
                                  % (self.levels,))
        if self.fogs_per_top_switch < 0 or self.end_devices < 0:
            raise SimulationError("negative device count")

    @staticmethod
    def parse(text):
        """Parses "kind:l1,l2[,l3]:fogs[:end_devices]", e.g. "b:25,12,6:5:20".
        """
        parts = text.split(':')
        if len(parts) not in (3, 4):
            raise SimulationError("generator spec is not valid: %r" % text)
        try:
            levels = [int(x) for x in parts[1].split(',')]
            fogs = int(parts[2])
            end_devices = int(parts[3]) if len(parts) == 4 else 0
        except ValueError:
            raise SimulationError("generator spec is not valid: %r" % text)
        return TopologyGen(parts[0], levels, fogs, end_devices)

    def label(self):
        return "%s(%s)f%d" % (self.kind, ",".join(str(l) for l in self.levels),
                              self.fogs_per_top_switch)

    def __repr__(self):
        return "TopologyGen(%s, %d end-devices)" % (self.label(),
                                                   self.end_devices)


class _SnapshotBuilder(object):

    def __init__(self, link_bw):
        self.snapshot = topology.TopologySnapshot()
        self.link_bw = link_bw
        self._ports = collections.defaultdict(int)

    def node(self, node_id, kind, processing=None, memory=None, address=None):
        self.snapshot.add_node(node_id, kind, processing, memory, address)
        return node_id

    def connect(self, a, b, bw=None):
        if (a, b) in self.snapshot.links:
            return
        self._ports[a] += 1
        self._ports[b] += 1
        self.snapshot.add_link(a, b, self._ports[a], self._ports[b],
                               self.link_bw if bw is None else bw)


def _address(prefix, index):
    return "%s.%d.%d" % (prefix, index // 250, index % 250 + 1)


def generate_snapshot(gen):
    """Builds the TopologySnapshot of a generated topology.

    Level 1 switch i of a leaf-spine connects to the ceil(L2 / 3) level 2
    switches starting at floor(i * L2 / L1); in a tree, each switch has one
    parent at floor(i * upper / lower). Top-level switches are chained,
    fog-devices hang off top-level switches and the controller off the
    middle one.
    """
    builder = _SnapshotBuilder(gen.link_bw)
    levels = []
    seq = 0
    for count in gen.levels:
        level = []
        for _ in range(count):
            seq += 1
            level.append(builder.node("openflow:%d" % seq, topology.SWITCH))
        levels.append(level)

    if gen.kind == LEAF_SPINE:
        lower, upper = levels
        span = int(math.ceil(len(upper) / 3.0))
        for i, switch in enumerate(lower):
            start = i * len(upper) // len(lower)
            for j in range(start, min(start + span, len(upper))):
                builder.connect(switch, upper[j])
    else:
        for lower, upper in zip(levels, levels[1:]):
            for i, switch in enumerate(lower):
                builder.connect(switch, upper[i * len(upper) // len(lower)])

    top = levels[-1]
    for a, b in zip(top, top[1:]):
        builder.connect(a, b)

    fog_index = 0
    processing = topology.cores_to_millicores(gen.fog_processing)
    for switch in top:
        for _ in range(gen.fogs_per_top_switch):
            fog = builder.node("fog:%d" % fog_index, topology.FOG_DEVICE,
                               processing, gen.fog_memory,
                               _address("10.2", fog_index))
            builder.connect(fog, switch)
            fog_index += 1

    controller = builder.node("controller", topology.CONTROLLER,
                              address="10.0.0.1")
    builder.connect(controller, top[(len(top) - 1) // 2])

    bottom = levels[0]
    for i in range(gen.end_devices):
        device = builder.node("end:%d" % i, topology.END_DEVICE,
                              address=_address("10.1", i))
        builder.connect(device, bottom[i % len(bottom)])
    return builder.snapshot


def generate_topology(gen):
    """Returns the Topology described by a TopologyGen."""
    return topology.Topology.from_snapshot(generate_snapshot(gen))


def line_topology(hops, control_stretch=1, link_bw=topology.GBPS,
                  fog_processing=4, fog_memory=8 * topology.GIB):
    """A chain end:0 - S1 - ... - S<hops> - fog:0 with out-of-band control.

    The controller reaches every device through its own chain of
    control_stretch links (control_stretch - 1 relay switches), so all
    control distances scale with control_stretch.
    """
    if hops < 1 or control_stretch < 1:
        raise SimulationError("hops and control stretch must be at least 1")
    builder = _SnapshotBuilder(link_bw)
    device = builder.node("end:0", topology.END_DEVICE, address="10.1.0.1")
    fog = builder.node("fog:0", topology.FOG_DEVICE,
                       topology.cores_to_millicores(fog_processing),
                       fog_memory, "10.2.0.1")
    controller = builder.node("controller", topology.CONTROLLER,
                              address="10.0.0.1")
    switches = [builder.node("openflow:%d" % (i + 1), topology.SWITCH)
                for i in range(hops)]
    chain = [device] + switches + [fog]
    for a, b in zip(chain, chain[1:]):
        builder.connect(a, b)
    relay_seq = 1000
    for target in chain:
        previous = controller
        for _ in range(control_stretch - 1):
            relay_seq += 1
            relay = builder.node("openflow:%d" % relay_seq, topology.SWITCH)
            builder.connect(previous, relay)
            previous = relay
        builder.connect(previous, target)
    return topology.Topology.from_snapshot(builder.snapshot)


def testbed_topology(link_bw=topology.GBPS, core_bw=10 * topology.GBPS):
    """Three chained switches with eight end-devices in three groups and
    two fog-devices per switch; the controller sits on the middle switch.
    """
    builder = _SnapshotBuilder(link_bw)
    switches = [builder.node("openflow:%d" % (i + 1), topology.SWITCH)
                for i in range(3)]
    builder.connect(switches[0], switches[1], core_bw)
    builder.connect(switches[1], switches[2], core_bw)
    groups = ((1, 2, 3), (4, 5), (6, 7, 8))
    for switch, members in zip(switches, groups):
        for i in members:
            device = builder.node("end:%d" % i, topology.END_DEVICE,
                                  address="10.1.0.%d" % i)
            builder.connect(device, switch)
    for i in range(6):
        fog = builder.node("fog:%d" % i, topology.FOG_DEVICE,
                           topology.cores_to_millicores(4), 8 * topology.GIB,
                           "10.2.0.%d" % (i + 1))
        builder.connect(fog, switches[i // 2])
    controller = builder.node("controller", topology.CONTROLLER,
                              address="10.0.0.1")
    builder.connect(controller, switches[1])
    return topology.Topology.from_snapshot(builder.snapshot)


#
# Control plane delay model.
#


class ControlPlane(object):
    """Fewest-hop control paths from the controller to every device.

    Control traffic may cross switches only; the controller's own links
    are usable as first hops.
    """

    def __init__(self, topo, controller=None):
        controllers = topo.controllers()
        if controller is None:
            if not controllers:
                raise SimulationError("topology has no controller")
            controller = controllers[0]
        self.topology = topo
        self.controller = controller
        self.graph = nx.Graph()
        self.graph.add_nodes_from(sorted(topo.nodes))
        for src, dst in sorted(topo.links):
            kinds = (topo.nodes[src].kind, topo.nodes[dst].kind)
            if (topology.SWITCH in kinds or controller in (src, dst)) and \
                    (dst, src) in topo.links:
                self.graph.add_edge(src, dst)
        self._paths = {}

    def path(self, target):
        """Returns the node list from the controller to target."""
        path = self._paths.get(target)
        if path is None:
            try:
                path = nx.shortest_path(self.graph, self.controller, target)
            except (nx.NetworkXNoPath, nx.NodeNotFound):
                raise SimulationError("no control path from %s to %s"
                                      % (self.controller, target))
            self._paths[target] = path
        return path

    def hops(self, target):
        return len(self.path(target)) - 1

    def message_delay(self, target, nbytes, load, toward_controller=False):
        """Store-and-forward delay of one message, seconds."""
        if load.control_bw <= 0:
            raise SimulationError("control bandwidth must be positive: %r"
                                  % (load.control_bw,))
        nodes = self.path(target)
        if toward_controller:
            nodes = list(reversed(nodes))
        serialization = nbytes * 8.0 / load.control_bw
        delay = 0.0
        for src, dst in zip(nodes, nodes[1:]):
            capacity = self.topology.link(src, dst).total_bw
            if load.data_bw >= capacity:
                raise SimulationError("link %s->%s is saturated: %d >= %d bps"
                                      % (src, dst, load.data_bw, capacity))
            delay += serialization / (1.0 - load.data_bw / float(capacity))
        return delay

    def exchange_delay(self, records, load):
        """Delay of a sequence of southbound calls (ByteRecords)."""
        delay = 0.0
        for record in records:
            if record.up_bytes:
                delay += self.message_delay(record.target, record.up_bytes,
                                            load)
            if record.down_bytes:
                delay += self.message_delay(record.target, record.down_bytes,
                                            load, toward_controller=True)
        return delay


class DelayReport(object):
    """The five delay components of fulfilling one request, seconds.

    Attributes:
        request_id: a string
        status: protocol.SUCCESS or a failure reason
        fog: the selected fog-device, or None
        hops: an int, links between end-device and fog-device
        send_request, raa_exec, config_comm, config_exec, reply: floats
        up_bytes, down_bytes: southbound bytes exchanged
    """

    COMPONENTS = ('send_request', 'raa_exec', 'config_comm', 'config_exec',
                  'reply')

    def __init__(self, request_id, status=protocol.SUCCESS, fog=None, hops=0,
                 send_request=0.0, raa_exec=0.0, config_comm=0.0,
                 config_exec=0.0, reply=0.0, up_bytes=0, down_bytes=0):
        self.request_id = request_id
        self.status = status
        self.fog = fog
        self.hops = hops
        self.send_request = send_request
        self.raa_exec = raa_exec
        self.config_comm = config_comm
        self.config_exec = config_exec
        self.reply = reply
        self.up_bytes = up_bytes
        self.down_bytes = down_bytes

    @property
    def total(self):
        return (self.send_request + self.raa_exec + self.config_comm +
                self.config_exec + self.reply)

    def as_dict(self):
        obj = dict((name, getattr(self, name)) for name in self.COMPONENTS)
        obj.update(request_id=self.request_id, status=self.status,
                   fog=self.fog, hops=self.hops, total=self.total,
                   up_bytes=self.up_bytes, down_bytes=self.down_bytes)
        return obj

    def __eq__(self, other):
        if not isinstance(other, DelayReport):
            return NotImplemented
        return self.as_dict() == other.as_dict()

    def __ne__(self, other):
        result = self.__eq__(other)
        if result is NotImplemented:
            return result
        return not result

    def __repr__(self):
        return "DelayReport(%s, %s, total=%.6fs)" % (
            self.request_id, self.status, self.total)


def config_exec_delay(records, config):
    delay = 0.0
    for record in records:
        if record.target.startswith("openflow:"):
            delay += config.switch_config_exec
        else:
            delay += config.fog_config_exec
    return delay


def _scratch_fabric(topo, fabric):
    if fabric is None:
        scratch = southbound.SimulatedFabric.from_topology(topo)
        southbound.install_port_qos(scratch, topo)
        return scratch
    scratch = copy.deepcopy(fabric)
    scratch.sync_topology(topo)
    southbound.install_port_qos(scratch, topo)
    return scratch


def simulate_request(topo, request, load=None, fabric=None, config=None,
                     request_id="sim"):
    """Models the time needed to fulfill one service request.

    The allocation runs for real on a copy of the topology (and a copy of
    the fabric, whose existing queues inflate the OVSDB exchanges); the
    southbound calls it makes are replayed over the control network.
    Neither topo nor fabric is modified.

    Args:
        topo: a Topology with a controller
        request: a raa.ResourceRequest
        load: a Load(data_bw, control_bw); defaults from config
        fabric: a SimulatedFabric holding the current switch state
        config: a SimConfig

    Returns:
        A DelayReport.
    """
    config = config if config is not None else SimConfig()
    load = load if load is not None else config.load()
    plane = ControlPlane(topo)
    report = DelayReport(request_id)
    report.send_request = plane.message_delay(
        request.end_device, config.request_bytes, load,
        toward_controller=True)

    scratch = topo.copy()
    ports = fog_lib.PortPool()
    scratch_fabric = _scratch_fabric(scratch, fabric)
    for fog in scratch.fog_devices():
        for container in scratch_fabric.containers(fog).values():
            ports.mark_used(fog, container.port)
    ledger = raa.ReservationLedger(scratch_fabric.max_cookie() + 1)
    started = time.perf_counter()
    result = raa.allocate(scratch, request, ledger, ports)
    elapsed = time.perf_counter() - started
    report.raa_exec = elapsed if config.measure_raa_time else \
        config.raa_fixed_time

    if isinstance(result, raa.Failure):
        report.status = result.reason
    else:
        report.fog = result.fog
        report.hops = len(result.path)
        mark = len(scratch_fabric.byte_ledger)
        southbound.apply_plan(scratch_fabric, result, request.image)
        records = scratch_fabric.byte_ledger[mark:]
        report.config_comm = plane.exchange_delay(records, load)
        report.config_exec = config_exec_delay(records, config)
        report.up_bytes = sum(r.up_bytes for r in records)
        report.down_bytes = sum(r.down_bytes for r in records)
    report.reply = plane.message_delay(request.end_device,
                                       config.response_bytes, load)
    return report


#
# Scenarios.
#


ACTIONS = ('request', 'shutdown', 'sleep_app', 'stream_app')
# Short names accepted in scenario files.
ACTION_ALIASES = {'stream': 'stream_app'}


def _is_number(value):
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _check_params(event):
    """Returns a list of problems with the event's parameter values."""
    problems = []
    for name in ('bw', 'mem', 'rate'):
        value = getattr(event, name)
        if name == 'rate' and value is None:
            continue
        if not _is_number(value) or value < 1:
            problems.append("%s must be a number of at least 1, got %r"
                            % (name, value))
    if not _is_number(event.cpu) or event.cpu < 0.001:
        problems.append("cpu must be at least 0.001 cores, got %r"
                        % (event.cpu,))
    if not _is_number(event.duration) or not event.duration > 0:
        problems.append("duration must be a positive number, got %r"
                        % (event.duration,))
    if not _is_number(event.sleep) or event.sleep < 0:
        problems.append("sleep must be a non-negative number, got %r"
                        % (event.sleep,))
    if event.desired_port is not None and not (
            isinstance(event.desired_port, numbers.Integral) and
            0 < event.desired_port < 65536):
        problems.append("desired_port must be a port number, got %r"
                        % (event.desired_port,))
    if event.transport not in southbound.TRANSPORTS:
        problems.append("transport must be one of %s, got %r"
                        % (", ".join(southbound.TRANSPORTS),
                           event.transport))
    if not isinstance(event.image, str):
        problems.append("image must be a string, got %r" % (event.image,))
    return problems


class ScenarioEvent(object):
    """One timed action of a scenario.

    Attributes:
        at: a float, start time in seconds
        node: a string, the acting end-device
        action: one of ACTIONS
        bw: bits/s; cpu: cores; mem: bytes; image: a string
        sleep: seconds a sleep app holds its service
        rate: bits/s reserved by a stream app; duration: seconds it streams
        transport, desired_port: as in a service request
    """

    DEFAULTS = dict(bw=10 * topology.MBPS, cpu=0.5, mem=256 * topology.MIB,
                    image="sleep-app", sleep=3.0, rate=None, duration=90.0,
                    transport=southbound.TCP, desired_port=None)

    def __init__(self, at, node, action, **params):
        self.at = float(at)
        self.node = node
        self.action = ACTION_ALIASES.get(action, action)
        unknown = set(params) - set(self.DEFAULTS)
        if unknown:
            raise SimulationError("unknown event parameters: %s"
                                  % ", ".join(sorted(unknown)))
        for name, default in self.DEFAULTS.items():
            setattr(self, name, params.get(name, default))
        problems = _check_params(self)
        if problems:
            raise SimulationError("; ".join(problems))

    def to_dict(self):
        obj = {'at': self.at, 'node': self.node, 'action': self.action}
        for name, default in sorted(self.DEFAULTS.items()):
            value = getattr(self, name)
            if value != default:
                obj[name] = value
        return obj

    def __repr__(self):
        return "ScenarioEvent(%.3f %s %s)" % (self.at, self.node, self.action)


class Scenario(object):
    """A list of timed events.

    Use create_from_file() or from_dict(); check `valid` before use.

    Attributes:
        events: a list of ScenarioEvent, in file order
        valid: a bool
        notes: a list of strings
    """

    def __init__(self, events=None):
        self.events = list(events) if events else []
        self.valid = True
        self.notes = []

    @staticmethod
    def create_from_file(filename):
        path = Path(filename).expanduser().absolute()
        try:
            with path.open('r', encoding='utf-8') as scenario_file:
                obj = json.load(scenario_file)
        except (IOError, OSError, ValueError) as e:
            scenario = Scenario()
            scenario._error("cannot read scenario file %s: %s" % (path, e))
            return scenario
        return Scenario.from_dict(obj)

    @staticmethod
    def from_dict(obj):
        scenario = Scenario()
        entries = obj.get('events') if isinstance(obj, dict) else None
        if not isinstance(entries, list):
            scenario._error("scenario has no 'events' list")
            return scenario
        for i, entry in enumerate(entries):
            if not isinstance(entry, dict):
                scenario._error("event %d is not an object" % i)
                continue
            params = dict(entry)
            try:
                at = float(params.pop('at'))
                node = params.pop('node')
                action = params.pop('action')
            except (KeyError, TypeError, ValueError):
                scenario._error("event %d needs numeric 'at', 'node' and "
                                "'action'" % i)
                continue
            if not isinstance(node, str) or not isinstance(action, str):
                scenario._error("event %d needs string 'node' and "
                                "'action'" % i)
                continue
            action = ACTION_ALIASES.get(action, action)
            if action not in ACTIONS:
                scenario._error("event %d has an unknown action %r"
                                % (i, action))
                continue
            if at < 0:
                scenario._error("event %d starts before time 0" % i)
                continue
            try:
                scenario.events.append(ScenarioEvent(at, node, action,
                                                     **params))
            except SimulationError as e:
                scenario._error("event %d: %s" % (i, e))
        if scenario.valid and not scenario.events:
            scenario.notes.append("Warning: scenario has no events")
        return scenario

    def _error(self, message):
        self.notes.append("Error: " + message)
        self.valid = False

    def check(self, topo):
        """Returns error notes for events naming unknown end-devices."""
        notes = []
        for event in self.events:
            node = topo.nodes.get(event.node)
            if node is None or node.kind != topology.END_DEVICE:
                notes.append("Error: event %r names %s, which is not an "
                             "end-device" % (event, event.node))
        return notes

    def to_dict(self):
        return {'events': [event.to_dict() for event in self.events]}

    def end_time(self):
        return max([0.0] + [e.at for e in self.events])


def scenario_sleep_apps(end_devices, concurrent=False, sleep=3.0, gap=None,
                        runs=1, **params):
    """Every end-device runs a sleep app, all at once or one after another.

    Sequential runs start gap seconds apart (default sleep + 2).
    """
    gap = sleep + 2.0 if gap is None else gap
    events = []
    at = 0.0
    for _ in range(runs):
        for device in end_devices:
            events.append(ScenarioEvent(at, device, 'sleep_app', sleep=sleep,
                                        **params))
            if not concurrent:
                at += gap
        if concurrent:
            at += gap
    return Scenario(events)


def scenario_stream_with_storms(stream_devices, storm_devices, rate,
                                duration=90.0, storm_times=(30.0, 60.0),
                                storm_repeat=1, concurrent=True, gap=2.0,
                                sleep=1.0, **params):
    """Stream apps run for duration while sleep-app storms hit the
    controller at storm_times.

    Each storm device issues storm_repeat sleep apps per storm; with
    concurrent=False they are spread gap seconds apart.
    """
    events = [ScenarioEvent(0.0, device, 'stream_app', rate=rate,
                            duration=duration, image="stream-app", **params)
              for device in stream_devices]
    for start in storm_times:
        offset = 0.0
        for device in storm_devices:
            for _ in range(storm_repeat):
                events.append(ScenarioEvent(start + offset, device,
                                            'sleep_app', sleep=sleep))
                if not concurrent:
                    offset += gap
    return Scenario(events)


class MetricSet(object):
    """Samples collected by a scenario run.

    Attributes:
        samples: a list of (time, series, value)
        trace: a list of SimEvent
        summary: a dict with successes, failures by reason, the
        reconciliation notes and counts
    """

    def __init__(self):
        self.samples = []
        self.trace = []
        self.summary = {}

    def add(self, at, series, value):
        self.samples.append((at, series, value))

    def names(self):
        return sorted(set(series for _, series, _ in self.samples))

    def series(self, name):
        return [value for _, series, value in self.samples if series == name]

    def timed_series(self, name):
        return [(at, value) for at, series, value in self.samples
                if series == name]

    def ecdf(self, name):
        """Returns (sorted values, cumulative fractions) of a series."""
        values = np.sort(np.asarray(self.series(name), dtype=float))
        if not len(values):
            return values, values
        return values, np.arange(1, len(values) + 1) / float(len(values))

    def quantiles(self, name, qs=(25, 50, 75)):
        values = self.series(name)
        if not values:
            return [float('nan')] * len(qs)
        return [float(q) for q in np.percentile(values, qs)]

    def rows(self):
        return sorted(self.samples, key=lambda s: (s[0], s[1]))


class _ScenarioRunner(object):

    def __init__(self, topo, scenario, config, fabric_config,
                 orchestrator_config):
        self.env = simpy.Environment()
        self.config = config
        self.fabric = southbound.SimulatedFabric(fabric_config)
        self.orchestrator = fog_lib.Orchestrator(topo, self.fabric,
                                                 orchestrator_config)
        self.plane = ControlPlane(topo)
        self.controller = simpy.Resource(self.env, capacity=1)
        self.scenario = scenario
        self.metrics = MetricSet()
        self.failures = collections.Counter()
        self.successes = 0
        self._seq = 0
        self._requests = 0
        self._services = collections.defaultdict(list)

    def record(self, kind, **payload):
        self.metrics.trace.append(SimEvent(self.env.now, self._seq, kind,
                                           payload))
        self._seq += 1

    def load(self):
        return self.config.load()

    def _raa_time(self, started):
        """Controller time charged for one orchestrator call."""
        if self.config.measure_raa_time:
            return time.perf_counter() - started
        return self.config.raa_fixed_time

    def _southbound_delay(self, mark):
        records = self.fabric.byte_ledger[mark:]
        return (self.plane.exchange_delay(records, self.load()) +
                config_exec_delay(records, self.config))

    def request(self, event, image, bw):
        started = self.env.now
        self._requests += 1
        request_id = "r%d" % self._requests
        yield self.env.timeout(self.plane.message_delay(
            event.node, self.config.request_bytes, self.load(),
            toward_controller=True))
        self.record(MSG_ARRIVAL, request=request_id, node=event.node)
        with self.controller.request() as slot:
            yield slot
            self.record(RAA_START, request=request_id)
            mark = len(self.fabric.byte_ledger)
            message = protocol.ServiceRequest(
                request_id=request_id, image=image, bw=int(bw),
                processing=event.cpu, memory=int(event.mem),
                desired_port=event.desired_port, transport=event.transport,
                node_id=event.node)
            started_raa = time.perf_counter()
            response = self.orchestrator.service_end_device(message)
            yield self.env.timeout(self._raa_time(started_raa))
            self.record(RAA_END, request=request_id)
            yield self.env.timeout(self._southbound_delay(mark))
            self.record(CONFIG_APPLIED, request=request_id)
        yield self.env.timeout(self.plane.message_delay(
            event.node, self.config.response_bytes, self.load()))
        self.record(MSG_DEPARTURE, request=request_id,
                    status=response.status)
        if response.success:
            self.successes += 1
            self.metrics.add(self.env.now, "fulfillment",
                             self.env.now - started)
            self.metrics.add(self.env.now, "fulfillment:%s" % event.node,
                             self.env.now - started)
            self._services[event.node].append(response)
        else:
            self.failures[response.reason] += 1
            self.metrics.add(self.env.now, "failure:%s" % response.reason, 1)
        return response

    def shutdown(self, event, service_id=None):
        if service_id is None:
            if not self._services[event.node]:
                logger.warning("%s has no service to shut down", event.node)
                return None
            service_id = self._services[event.node][-1].service_id
        started = self.env.now
        yield self.env.timeout(self.plane.message_delay(
            event.node, self.config.shutdown_bytes, self.load(),
            toward_controller=True))
        self.record(MSG_ARRIVAL, service=service_id, node=event.node)
        with self.controller.request() as slot:
            yield slot
            self.record(RAA_START, service=service_id)
            mark = len(self.fabric.byte_ledger)
            started_raa = time.perf_counter()
            response = self.orchestrator.service_shutdown_request(
                protocol.ShutdownRequest(service_id=service_id))
            yield self.env.timeout(self._raa_time(started_raa))
            self.record(RAA_END, service=service_id)
            yield self.env.timeout(self._southbound_delay(mark))
            self.record(CONFIG_APPLIED, service=service_id)
        yield self.env.timeout(self.plane.message_delay(
            event.node, self.config.shutdown_reply_bytes, self.load()))
        self.record(MSG_DEPARTURE, service=service_id,
                    status=response.response)
        if response.response != protocol.TEARDOWN_FAILED:
            self._services[event.node] = [
                r for r in self._services[event.node]
                if r.service_id != service_id]
        if response.response == protocol.OK:
            self.metrics.add(self.env.now, "shutdown", self.env.now - started)
        return response

    def sleep_app(self, event):
        response = yield self.env.process(
            self.request(event, event.image, event.bw))
        if response.success:
            yield self.env.timeout(event.sleep)
            yield self.env.process(self.shutdown(event, response.service_id))

    def stream_app(self, event):
        rate = event.rate if event.rate is not None else event.bw
        response = yield self.env.process(
            self.request(event, event.image, rate))
        if not response.success:
            return
        reservation = self.orchestrator.ledger.by_service_id(
            response.service_id)
        plan = reservation.plan
        topo = self.orchestrator.topology
        header = southbound.PacketHeader(
            topo.nodes[event.node].flow_address(), response.fog_address,
            event.transport, 40000, response.proxy_port)
        offered = int(rate * self.config.stream_overdrive)
        period = self.config.sample_period
        series = "throughput:%s" % event.node
        for _ in range(int(event.duration / period)):
            yield self.env.timeout(period)
            achieved = offered
            for switch in plan.switches:
                achieved = min(achieved, self.fabric.transmit(
                    switch, header, offered, period))
            if not plan.switches:
                # A direct link has no queue to enforce the rate.
                achieved = min(offered, rate)
            self.metrics.add(self.env.now, series, achieved)
        yield self.env.process(self.shutdown(event, response.service_id))

    def start(self, event):
        yield self.env.timeout(event.at)
        if event.action == 'request':
            yield self.env.process(self.request(event, event.image, event.bw))
        elif event.action == 'shutdown':
            yield self.env.process(self.shutdown(event))
        elif event.action == 'sleep_app':
            yield self.env.process(self.sleep_app(event))
        else:
            yield self.env.process(self.stream_app(event))

    def run(self, until=None):
        for event in self.scenario.events:
            self.env.process(self.start(event))
        self.env.run(until=until)
        notes = self.orchestrator.reconcile()
        self.metrics.summary = {
            'requests': self._requests,
            'successes': self.successes,
            'failures': dict(sorted(self.failures.items())),
            'live_reservations': len(self.orchestrator.ledger.live()),
            'reconciliation': notes,
            'end_time': self.env.now,
            'trace_events': len(self.metrics.trace),
        }
        return self.metrics


def run_scenario(topo, scenario, config=None, fabric_config=None,
                 orchestrator_config=None, until=None):
    """Replays a scenario against an orchestrator on a simulated fabric.

    The controller time of each orchestrator call is measured when
    config.measure_raa_time is set and is config.raa_fixed_time otherwise;
    the default config, FixedRaaTime, keeps runs reproducible. The
    topology is used (and charged) as is.

    Returns:
        A MetricSet.

    Raises:
        SimulationError: the scenario is invalid or names unknown nodes.
    """
    if not scenario.valid:
        raise SimulationError("invalid scenario: %s" % "; ".join(
            scenario.notes))
    notes = scenario.check(topo)
    if notes:
        raise SimulationError("; ".join(notes))
    runner = _ScenarioRunner(topo, scenario,
                             config if config is not None else FixedRaaTime(),
                             fabric_config, orchestrator_config)
    return runner.run(until)


#
# Sweeps.
#


def summarize(values):
    """Returns (median, lower quartile, upper quartile)."""
    if not len(values):
        nan = float('nan')
        return nan, nan, nan
    q1, median, q3 = np.percentile(values, (25, 50, 75))
    return float(median), float(q1), float(q3)


def sweep_raa_time(gen, repeats=5, seed=0, samples=20,
                   request_bw=10 * topology.MBPS):
    """Measures the allocation wall time on a generated topology.

    Each repeat allocates requests from up to `samples` randomly chosen
    end-devices on a fresh copy of the topology.

    Returns:
        A SweepPoint.
    """
    topo = generate_topology(gen)
    devices = topo.end_devices()
    if not devices:
        raise SimulationError("%r has no end-devices" % gen)
    rng = random.Random(seed)
    timings = []
    for _ in range(repeats):
        scratch = topo.copy()
        for device in rng.sample(devices, min(samples, len(devices))):
            request = raa.ResourceRequest(device, request_bw, 500,
                                          256 * topology.MIB)
            started = time.perf_counter()
            raa.allocate(scratch, request)
            timings.append(time.perf_counter() - started)
    median, q1, q3 = summarize(timings)
    return SweepPoint(gen.label(), "raa_time", median, q1, q3, len(timings))


def sweep_alloc_delay(gen, load, config=None, request_bw=10 * topology.MBPS,
                      reports=None):
    """Allocation delay from every end-device, grouped by path length.

    Args:
        reports: a list; if given, the DelayReport of every request is
        appended to it, with request ids "<config> <end-device>"

    Returns:
        A list of SweepPoint, one per hop count, metric "alloc_delay".
    """
    config = config if config is not None else FixedRaaTime()
    topo = generate_topology(gen)
    label = "%s x=%d y=%d" % (gen.label(), load.data_bw, load.control_bw)
    by_hops = collections.defaultdict(list)
    for device in topo.end_devices():
        request = raa.ResourceRequest(device, request_bw, 500,
                                      256 * topology.MIB)
        report = simulate_request(topo, request, load, config=config,
                                  request_id="%s %s" % (label, device))
        if reports is not None:
            reports.append(report)
        if report.status == protocol.SUCCESS:
            by_hops[report.hops].append(report.total)
    points = []
    for hops in sorted(by_hops):
        median, q1, q3 = summarize(by_hops[hops])
        points.append(SweepPoint("%s hops=%d" % (label, hops), "alloc_delay",
                                 median, q1, q3, len(by_hops[hops])))
    return points
