"""Switch and fog-device configuration backends.

A Backend exposes the calls the orchestrator uses to enforce a
reservation:
    - queue and QoS management on switch ports (create_queue, delete_queue,
      create_qos, delete_qos, place_queue_on_qos, remove_queue_from_qos,
      place_qos_on_port, remove_qos_from_port),
    - flow management (create_flow, delete_flow, track_flow, untrack_flow),
    - container management on fog-devices (start_container,
      stop_container).

SimulatedFabric is the reference backend. It keeps the full switch and
fog-device state in memory, classifies packet headers against installed
flows and records the number of bytes each call would exchange with the
device, which the simulator uses to model configuration delays.

The module also provides apply_plan / teardown_plan, which push an
AllocationPlan to a backend (rolling back on failure) and remove it.
"""

import collections
import json
import logging
import numbers

from pathlib2 import Path

import lib.topology as topology

logger = logging.getLogger(__name__)

TCP = "TCP"
UDP = "UDP"
SCTP = "SCTP"
TRANSPORTS = (TCP, UDP, SCTP)

# Which transport port a flow matches on.
DST_PORT = "dst"
SRC_PORT = "src"

DEFAULT_PRIORITY = 100

# classify() result when no flow matches.
DROP = None

PacketHeader = collections.namedtuple(
    'PacketHeader',
    ['src_addr', 'dst_addr', 'transport', 'src_port', 'dst_port'])

Classification = collections.namedtuple(
    'Classification', ['port', 'queue_id', 'cookie'])

ByteRecord = collections.namedtuple(
    'ByteRecord', ['target', 'operation', 'up_bytes', 'down_bytes'])

Container = collections.namedtuple(
    'Container', ['service_id', 'fog', 'image', 'processing', 'memory',
                  'port'])


class SouthboundError(Exception):
    """A configuration call was rejected by the device."""


class FaultInjected(SouthboundError):
    """A failure deliberately injected into the simulated fabric."""


class FabricConfigError(Exception):
    """A fabric configuration file is not valid."""


class FabricConfig(object):
    """Byte sizes of southbound exchanges and fabric behavior.

    "up" is controller -> device, "down" is device -> controller.
    """

    # OVSDB queue creation/deletion.
    queue_bytes_up = 55
    queue_bytes_down = 1000

    # QoS bookkeeping rides along with the queue transactions.
    qos_bytes_up = 0
    qos_bytes_down = 0

    # OpenFlow flow-mod and its reply.
    flow_bytes_up = 150
    flow_bytes_down = 100

    # Container RPCs to the fog-device.
    container_bytes_up = 2000
    container_bytes_down = 500

    # OVSDB state synchronization: every queue already present on a switch
    # inflates the exchange of a new queue creation by this much.
    sync_bytes_per_queue_up = 55
    sync_bytes_per_queue_down = 1000

    # Maximum throughput dip of a rate-limited queue, bits/s.
    jitter_bound = 0

    @staticmethod
    def create_from_file(filename):
        """Reads a JSON object whose keys override the byte sizes.

        Raises:
            FabricConfigError: unreadable file, unknown key or a value that
            is not a non-negative integer.
        """
        path = Path(filename).expanduser().absolute()
        try:
            with path.open('r', encoding='utf-8') as config_file:
                obj = json.load(config_file)
        except (IOError, OSError, ValueError) as e:
            raise FabricConfigError("cannot read fabric configuration %s: %s"
                                    % (path, e))
        return FabricConfig.from_dict(obj)

    @staticmethod
    def from_dict(obj):
        if not isinstance(obj, dict):
            raise FabricConfigError("fabric configuration is not an object")
        config = FabricConfig()
        for key, value in sorted(obj.items()):
            if key.startswith('_') or not hasattr(FabricConfig, key) or \
                    callable(getattr(FabricConfig, key)):
                raise FabricConfigError("unknown fabric configuration key: %s"
                                        % key)
            if not isinstance(value, numbers.Integral) or \
                    isinstance(value, bool) or value < 0:
                raise FabricConfigError("%s must be a non-negative integer: "
                                        "%r" % (key, value))
            setattr(config, key, value)
        return config


class QueueSpec(object):
    """A rate-limited egress queue on a switch port."""

    def __init__(self, switch, port, queue_id, rate_limit):
        assert rate_limit > 0, "queue rate must be positive: %r" % rate_limit
        self.switch = switch
        self.port = port
        self.queue_id = queue_id
        self.rate_limit = int(rate_limit)

    def __repr__(self):
        return "QueueSpec(%s port %s q%s, %d bps)" % (
            self.switch, self.port, self.queue_id, self.rate_limit)


class FlowMatch(object):
    """Match fields of a flow; None fields are wildcards.

    port_field tells whether port_value is matched against the source
    (SRC_PORT) or the destination (DST_PORT) transport port.
    """

    FIELDS = ('src_addr', 'dst_addr', 'transport', 'port_field', 'port_value')

    def __init__(self, src_addr=None, dst_addr=None, transport=None,
                 port_field=None, port_value=None):
        assert port_field in (None, SRC_PORT, DST_PORT), \
            "port field is not valid: %r" % port_field
        self.src_addr = src_addr
        self.dst_addr = dst_addr
        self.transport = transport
        self.port_field = port_field
        self.port_value = port_value

    def matches(self, header):
        if self.src_addr is not None and header.src_addr != self.src_addr:
            return False
        if self.dst_addr is not None and header.dst_addr != self.dst_addr:
            return False
        if self.transport is not None and header.transport != self.transport:
            return False
        if self.port_value is not None:
            if self.port_field == SRC_PORT:
                return header.src_port == self.port_value
            return header.dst_port == self.port_value
        return True

    def to_dict(self):
        return dict((name, getattr(self, name)) for name in self.FIELDS)


def output_action(port):
    return ('output', port)


def enqueue_action(port, queue_id):
    return ('enqueue', port, queue_id)


class FlowSpec(object):
    """A flow table entry: match fields plus an ordered list of actions.

    Attributes:
        switch: a string, the switch node id
        match: a FlowMatch
        actions: a list of ('output', port) / ('enqueue', port, queue_id)
        priority: an int, higher wins
        cookie: an int, the reservation the flow belongs to
    """

    def __init__(self, switch, match=None, actions=None,
                 priority=DEFAULT_PRIORITY, cookie=0):
        self.switch = switch
        self.match = match if match is not None else FlowMatch()
        self.actions = list(actions) if actions else []
        self.priority = priority
        self.cookie = cookie

    def add_match(self, **fields):
        for name, value in fields.items():
            assert name in FlowMatch.FIELDS, "unknown match field: %s" % name
            setattr(self.match, name, value)
        return self

    def add_action(self, action):
        self.actions.append(action)
        return self

    def output_port(self):
        for action in self.actions:
            if action[0] == 'output':
                return action[1]
        return None

    def enqueue_target(self):
        """Returns (port, queue_id) of the enqueue action, or None."""
        for action in self.actions:
            if action[0] == 'enqueue':
                return action[1], action[2]
        return None

    def to_dict(self):
        return {'switch': self.switch, 'match': self.match.to_dict(),
                'actions': [list(action) for action in self.actions],
                'priority': self.priority, 'cookie': self.cookie}

    def __repr__(self):
        return "FlowSpec(%s cookie=%s prio=%s %s)" % (
            self.switch, self.cookie, self.priority, self.actions)


def flow_skeleton(switch, cookie, priority=DEFAULT_PRIORITY):
    """Returns an empty flow to be completed with add_match/add_action."""
    return FlowSpec(switch, FlowMatch(), [], priority, cookie)


class Backend(object):
    """Interface of a switch / fog-device configuration backend."""

    def create_queue(self, switch, port, queue_id, rate_limit):
        raise NotImplementedError

    def delete_queue(self, switch, port, queue_id):
        raise NotImplementedError

    def create_qos(self, switch, qos_id):
        raise NotImplementedError

    def delete_qos(self, switch, qos_id):
        raise NotImplementedError

    def place_queue_on_qos(self, switch, qos_id, port, queue_id):
        raise NotImplementedError

    def remove_queue_from_qos(self, switch, qos_id, port, queue_id):
        raise NotImplementedError

    def place_qos_on_port(self, switch, qos_id, port):
        raise NotImplementedError

    def remove_qos_from_port(self, switch, port):
        raise NotImplementedError

    def port_qos(self, switch, port):
        """Returns the id of the QoS entry placed on a port, or None."""
        raise NotImplementedError

    def sync_topology(self, topo):
        raise NotImplementedError

    def register_fog(self, fog, total_processing, total_memory):
        raise NotImplementedError

    def create_flow(self, flow):
        raise NotImplementedError

    def delete_flow(self, cookie, switch):
        raise NotImplementedError

    def track_flow(self, cookie, switch):
        raise NotImplementedError

    def untrack_flow(self, cookie, switch):
        raise NotImplementedError

    def start_container(self, fog, image, processing, memory, port):
        raise NotImplementedError

    def stop_container(self, service_id):
        raise NotImplementedError

    def dump(self):
        raise NotImplementedError


class _SwitchState(object):

    def __init__(self, switch_id):
        self.id = switch_id
        self.ports = set()
        # (port, queue_id) -> rate limit
        self.queues = {}
        # qos_id -> dict(port=..., queues=set of (port, queue_id))
        self.qos = {}
        # port -> qos_id
        self.port_qos = {}
        self.flows = []


class _FogState(object):

    def __init__(self, fog_id, total_processing, total_memory):
        self.id = fog_id
        self.total_processing = total_processing
        self.total_memory = total_memory
        self.containers = {}

    def used(self):
        processing = sum(c.processing for c in self.containers.values())
        memory = sum(c.memory for c in self.containers.values())
        return processing, memory


class SimulatedFabric(Backend):
    """In-memory reference backend.

    Attributes:
        config: a FabricConfig
        byte_ledger: a list of ByteRecord, one per successful call
    """

    def __init__(self, config=None):
        self.config = config if config is not None else FabricConfig()
        self.byte_ledger = []
        self._switches = {}
        self._fogs = {}
        self._tracked = {}
        self._faults = {}
        self._service_seq = 0

    @staticmethod
    def from_topology(topo, config=None):
        fabric = SimulatedFabric(config)
        fabric.sync_topology(topo)
        return fabric

    def sync_topology(self, topo):
        """Learns switches, their ports and the fog-devices of a topology."""
        for node_id, node in topo.nodes.items():
            if node.kind == topology.SWITCH:
                state = self._switches.setdefault(node_id,
                                                  _SwitchState(node_id))
                state.ports.update(
                    link.src_port for link in topo.outgoing(node_id))
            elif node.kind == topology.FOG_DEVICE:
                self.register_fog(node_id, node.compute.total_processing,
                                  node.compute.total_memory)
        for switch_id in list(self._switches):
            node = topo.nodes.get(switch_id)
            state = self._switches[switch_id]
            if (node is None or node.kind != topology.SWITCH) and not (
                    state.queues or state.flows):
                del self._switches[switch_id]

    def register_fog(self, fog, total_processing, total_memory):
        state = self._fogs.get(fog)
        if state is None:
            self._fogs[fog] = _FogState(fog, total_processing, total_memory)
        else:
            state.total_processing = total_processing
            state.total_memory = total_memory

    def inject_fault(self, operation, after=0):
        """Makes the (after+1)-th next call of an operation fail."""
        self._faults[operation] = after

    def clear_faults(self):
        self._faults.clear()

    def _enter(self, operation):
        remaining = self._faults.get(operation)
        if remaining is None:
            return
        if remaining == 0:
            del self._faults[operation]
            raise FaultInjected("injected failure in %s" % operation)
        self._faults[operation] = remaining - 1

    def _account(self, target, operation, up_bytes, down_bytes):
        record = ByteRecord(target, operation, up_bytes, down_bytes)
        self.byte_ledger.append(record)
        logger.debug("%s on %s: %d bytes up, %d bytes down",
                     operation, target, up_bytes, down_bytes)

    def _switch(self, switch):
        try:
            return self._switches[switch]
        except KeyError:
            raise SouthboundError("unknown switch: %s" % switch)

    def _port(self, state, port):
        if port not in state.ports:
            raise SouthboundError("switch %s has no port %s" % (state.id, port))

    def _qos(self, state, qos_id):
        try:
            return state.qos[qos_id]
        except KeyError:
            raise SouthboundError("no QoS entry %s on %s" % (qos_id, state.id))

    #
    # Queues and QoS entries.
    #

    def create_queue(self, switch, port, queue_id, rate_limit):
        """Creates a rate-limited queue, or updates its rate if present."""
        state = self._switch(switch)
        self._port(state, port)
        if rate_limit <= 0:
            raise SouthboundError("queue rate must be positive: %r"
                                  % rate_limit)
        self._enter('create_queue')
        existing = len(state.queues) - (1 if (port, queue_id) in state.queues
                                        else 0)
        state.queues[(port, queue_id)] = int(rate_limit)
        config = self.config
        self._account(switch, 'create_queue', config.queue_bytes_up,
                      config.queue_bytes_down)
        if existing > 0:
            self._account(switch, 'ovsdb_sync',
                          existing * config.sync_bytes_per_queue_up,
                          existing * config.sync_bytes_per_queue_down)

    def delete_queue(self, switch, port, queue_id):
        state = self._switch(switch)
        if (port, queue_id) not in state.queues:
            raise SouthboundError("no queue %s on %s port %s"
                                  % (queue_id, switch, port))
        for flow in state.flows:
            if flow.enqueue_target() == (port, queue_id):
                raise SouthboundError(
                    "queue %s on %s port %s is used by flow cookie %s"
                    % (queue_id, switch, port, flow.cookie))
        for qos_id, entry in state.qos.items():
            if (port, queue_id) in entry['queues']:
                raise SouthboundError("queue %s on %s port %s is still on "
                                      "QoS %s" % (queue_id, switch, port,
                                                  qos_id))
        self._enter('delete_queue')
        del state.queues[(port, queue_id)]
        self._account(switch, 'delete_queue', self.config.queue_bytes_up,
                      self.config.queue_bytes_down)

    def create_qos(self, switch, qos_id):
        state = self._switch(switch)
        if qos_id in state.qos:
            raise SouthboundError("QoS %s already exists on %s"
                                  % (qos_id, switch))
        self._enter('create_qos')
        state.qos[qos_id] = dict(port=None, queues=set())
        self._account(switch, 'create_qos', self.config.qos_bytes_up,
                      self.config.qos_bytes_down)

    def delete_qos(self, switch, qos_id):
        state = self._switch(switch)
        entry = self._qos(state, qos_id)
        if entry['port'] is not None or entry['queues']:
            raise SouthboundError("QoS %s on %s is still in use"
                                  % (qos_id, switch))
        self._enter('delete_qos')
        del state.qos[qos_id]
        self._account(switch, 'delete_qos', self.config.qos_bytes_up,
                      self.config.qos_bytes_down)

    def place_queue_on_qos(self, switch, qos_id, port, queue_id):
        state = self._switch(switch)
        entry = self._qos(state, qos_id)
        if (port, queue_id) not in state.queues:
            raise SouthboundError("no queue %s on %s port %s"
                                  % (queue_id, switch, port))
        if entry['port'] is not None and entry['port'] != port:
            raise SouthboundError("QoS %s on %s is placed on port %s, not %s"
                                  % (qos_id, switch, entry['port'], port))
        self._enter('place_queue_on_qos')
        entry['queues'].add((port, queue_id))
        self._account(switch, 'place_queue_on_qos', self.config.qos_bytes_up,
                      self.config.qos_bytes_down)

    def remove_queue_from_qos(self, switch, qos_id, port, queue_id):
        state = self._switch(switch)
        entry = self._qos(state, qos_id)
        if (port, queue_id) not in entry['queues']:
            raise SouthboundError("queue %s is not on QoS %s of %s"
                                  % (queue_id, qos_id, switch))
        self._enter('remove_queue_from_qos')
        entry['queues'].discard((port, queue_id))
        self._account(switch, 'remove_queue_from_qos',
                      self.config.qos_bytes_up, self.config.qos_bytes_down)

    def place_qos_on_port(self, switch, qos_id, port):
        state = self._switch(switch)
        entry = self._qos(state, qos_id)
        self._port(state, port)
        if port in state.port_qos:
            raise SouthboundError("port %s of %s already has QoS %s"
                                  % (port, switch, state.port_qos[port]))
        if entry['port'] is not None:
            raise SouthboundError("QoS %s of %s is already on port %s"
                                  % (qos_id, switch, entry['port']))
        if any(queue_port != port for queue_port, _ in entry['queues']):
            raise SouthboundError("QoS %s of %s holds queues of another port"
                                  % (qos_id, switch))
        self._enter('place_qos_on_port')
        entry['port'] = port
        state.port_qos[port] = qos_id
        self._account(switch, 'place_qos_on_port', self.config.qos_bytes_up,
                      self.config.qos_bytes_down)

    def remove_qos_from_port(self, switch, port):
        state = self._switch(switch)
        if port not in state.port_qos:
            raise SouthboundError("port %s of %s has no QoS" % (port, switch))
        self._enter('remove_qos_from_port')
        qos_id = state.port_qos.pop(port)
        state.qos[qos_id]['port'] = None
        self._account(switch, 'remove_qos_from_port',
                      self.config.qos_bytes_up, self.config.qos_bytes_down)

    def port_qos(self, switch, port):
        return self._switch(switch).port_qos.get(port)

    #
    # Flows.
    #

    def create_flow(self, flow):
        state = self._switch(flow.switch)
        out_port = flow.output_port()
        if out_port is not None:
            self._port(state, out_port)
        target = flow.enqueue_target()
        if target is not None:
            if target not in state.queues:
                raise SouthboundError("flow cookie %s enqueues on missing "
                                      "queue %s of %s port %s"
                                      % (flow.cookie, target[1], flow.switch,
                                         target[0]))
            if target[0] != out_port:
                raise SouthboundError("flow cookie %s enqueues on port %s but "
                                      "outputs to port %s"
                                      % (flow.cookie, target[0], out_port))
        self._enter('create_flow')
        state.flows.append(flow)
        self._account(flow.switch, 'create_flow', self.config.flow_bytes_up,
                      self.config.flow_bytes_down)

    def delete_flow(self, cookie, switch):
        """Deletes all flows bearing a cookie on a switch.

        Returns:
            The number of deleted flows.
        """
        state = self._switch(switch)
        remaining = [flow for flow in state.flows if flow.cookie != cookie]
        deleted = len(state.flows) - len(remaining)
        if deleted == 0:
            raise SouthboundError("no flow with cookie %s on %s"
                                  % (cookie, switch))
        self._enter('delete_flow')
        state.flows = remaining
        self._tracked.pop((cookie, switch), None)
        self._account(switch, 'delete_flow', self.config.flow_bytes_up,
                      self.config.flow_bytes_down)
        return deleted

    def track_flow(self, cookie, switch):
        state = self._switch(switch)
        if not any(flow.cookie == cookie for flow in state.flows):
            raise SouthboundError("no flow with cookie %s on %s"
                                  % (cookie, switch))
        self._tracked.setdefault((cookie, switch),
                                 dict(packets=0, bytes=0))

    def untrack_flow(self, cookie, switch):
        if self._tracked.pop((cookie, switch), None) is None:
            raise SouthboundError("flow cookie %s on %s is not tracked"
                                  % (cookie, switch))

    def flow_stats(self, cookie, switch):
        """Returns dict(packets, bytes) of a tracked flow."""
        try:
            return dict(self._tracked[(cookie, switch)])
        except KeyError:
            raise SouthboundError("flow cookie %s on %s is not tracked"
                                  % (cookie, switch))

    def classify(self, switch, header):
        """Classifies a packet header against the flow table of a switch.

        The highest priority matching flow wins; on equal priority the
        lower cookie wins.

        Returns:
            A Classification(port, queue_id, cookie), or DROP when no flow
            matches.
        """
        state = self._switches.get(switch)
        if state is None:
            return DROP
        best = None
        for flow in state.flows:
            if not flow.match.matches(header):
                continue
            if best is None or (-flow.priority, flow.cookie) < (
                    -best.priority, best.cookie):
                best = flow
        if best is None:
            return DROP
        target = best.enqueue_target()
        queue_id = target[1] if target is not None else None
        return Classification(best.output_port(), queue_id, best.cookie)

    def queue_rate(self, switch, port, queue_id):
        try:
            return self._switch(switch).queues[(port, queue_id)]
        except KeyError:
            raise SouthboundError("no queue %s on %s port %s"
                                  % (queue_id, switch, port))

    def transmit(self, switch, header, offered_bps, duration=1.0):
        """Returns the rate a traffic stream gets through one switch.

        The stream is classified; matched traffic is limited by its queue,
        unmatched traffic is dropped.
        """
        result = self.classify(switch, header)
        if result is DROP:
            return 0
        rate = offered_bps
        if result.queue_id is not None:
            limit = self._switches[switch].queues[(result.port,
                                                   result.queue_id)]
            rate = max(0, min(offered_bps, limit) - self.config.jitter_bound)
        stats = self._tracked.get((result.cookie, switch))
        if stats is not None:
            stats['packets'] += 1
            stats['bytes'] += int(rate * duration / 8)
        return rate

    #
    # Containers.
    #

    def start_container(self, fog, image, processing, memory, port):
        """Starts a container with resource limits on a fog-device.

        Args:
            fog: a string, the fog-device node id
            image: a string, the service image name
            processing: an int, millicores
            memory: an int, bytes
            port: the proxy port the service listens on

        Returns:
            A string, the service id.
        """
        try:
            state = self._fogs[fog]
        except KeyError:
            raise SouthboundError("unknown fog-device: %s" % fog)
        used_processing, used_memory = state.used()
        if used_processing + processing > state.total_processing:
            raise SouthboundError("not enough processing on %s" % fog)
        if used_memory + memory > state.total_memory:
            raise SouthboundError("not enough memory on %s" % fog)
        if any(c.port == port for c in state.containers.values()):
            raise SouthboundError("port %s already in use on %s" % (port, fog))
        self._enter('start_container')
        self._service_seq += 1
        service_id = "svc-%d" % self._service_seq
        state.containers[service_id] = Container(
            service_id, fog, image, processing, memory, port)
        self._account(fog, 'start_container', self.config.container_bytes_up,
                      self.config.container_bytes_down)
        return service_id

    def stop_container(self, service_id):
        for state in self._fogs.values():
            if service_id in state.containers:
                self._enter('stop_container')
                del state.containers[service_id]
                self._account(state.id, 'stop_container',
                              self.config.container_bytes_up,
                              self.config.container_bytes_down)
                return
        raise SouthboundError("unknown service: %s" % service_id)

    def containers(self, fog):
        return dict(self._fogs[fog].containers)

    def running_containers(self):
        """Returns every running Container, ordered by service id."""
        return sorted((c for state in self._fogs.values()
                       for c in state.containers.values()),
                      key=lambda c: c.service_id)

    #
    # Inspection.
    #

    def switch_ids(self):
        return sorted(self._switches)

    def max_cookie(self):
        """Returns the highest cookie used by any flow or queue, or 0."""
        cookies = [0]
        for state in self._switches.values():
            cookies.extend(flow.cookie for flow in state.flows)
            cookies.extend(qid for (_, qid) in state.queues
                           if isinstance(qid, int))
        return max(cookies)

    def queue_count(self, switch=None, queue_id=None):
        switches = [self._switch(switch)] if switch else self._switches.values()
        return sum(1 for state in switches for (_, qid) in state.queues
                   if queue_id is None or qid == queue_id)

    def flow_count(self, switch=None, cookie=None):
        switches = [self._switch(switch)] if switch else self._switches.values()
        return sum(1 for state in switches for flow in state.flows
                   if cookie is None or flow.cookie == cookie)

    def bytes_exchanged(self, operation=None, target=None):
        """Sums (up, down) bytes of the ledger, optionally filtered."""
        up = down = 0
        for record in self.byte_ledger:
            if operation is not None and record.operation != operation:
                continue
            if target is not None and record.target != target:
                continue
            up += record.up_bytes
            down += record.down_bytes
        return up, down

    def dump(self):
        """Returns the complete fabric state as a JSON-ready dict."""
        switches = {}
        for switch_id in sorted(self._switches):
            state = self._switches[switch_id]
            switches[switch_id] = {
                'ports': sorted(state.ports, key=str),
                'queues': [
                    {'port': port, 'queue_id': qid,
                     'rate_limit': state.queues[(port, qid)]}
                    for (port, qid) in sorted(state.queues, key=str)],
                'qos': [
                    {'qos_id': qos_id, 'port': state.qos[qos_id]['port'],
                     'queues': [list(q) for q in
                                sorted(state.qos[qos_id]['queues'], key=str)]}
                    for qos_id in sorted(state.qos, key=str)],
                'flows': [flow.to_dict() for flow in
                          sorted(state.flows,
                                 key=lambda f: (f.cookie, str(f.actions)))],
            }
        fogs = {}
        for fog_id in sorted(self._fogs):
            state = self._fogs[fog_id]
            fogs[fog_id] = {
                'total_processing': state.total_processing,
                'total_memory': state.total_memory,
                'containers': [dict(c._asdict()) for _, c in
                               sorted(state.containers.items())],
            }
        return {'switches': switches, 'fogs': fogs}

    def check_consistency(self, topo):
        """Audits the fabric against itself and a topology.

        Returns:
            A list of strings describing violations; empty when sound.
        """
        notes = []
        for switch_id in sorted(self._switches):
            state = self._switches[switch_id]
            for flow in state.flows:
                target = flow.enqueue_target()
                if target is not None and target not in state.queues:
                    notes.append("Error: flow cookie %s on %s enqueues on a "
                                 "missing queue %s" % (flow.cookie, switch_id,
                                                       target))
            per_port = collections.defaultdict(int)
            for (port, _), rate in state.queues.items():
                per_port[port] += rate
            for port, rate in sorted(per_port.items(), key=str):
                link = _egress_link(topo, switch_id, port)
                if link is not None and rate > link.total_bw:
                    notes.append("Error: queues on %s port %s sum to %d bps, "
                                 "above the link capacity %d bps"
                                 % (switch_id, port, rate, link.total_bw))
        for fog_id in sorted(self._fogs):
            state = self._fogs[fog_id]
            processing, memory = state.used()
            if (processing > state.total_processing or
                    memory > state.total_memory):
                notes.append("Error: containers on %s exceed its capacity"
                             % fog_id)
        return notes


def _egress_link(topo, switch, port):
    for link in topo.outgoing(switch):
        if link.src_port == port:
            return link
    return None


def install_port_qos(backend, topo):
    """Creates one QoS entry per switch port lacking one.

    Returns:
        The number of QoS entries created.
    """
    created = 0
    for switch in topo.nodes_of_kind(topology.SWITCH):
        ports = sorted(set(link.src_port for link in topo.outgoing(switch)),
                       key=str)
        for port in ports:
            if backend.port_qos(switch, port) is not None:
                continue
            qos_id = "qos-%s" % (port,)
            backend.create_qos(switch, qos_id)
            backend.place_qos_on_port(switch, qos_id, port)
            created += 1
    return created


def apply_plan(backend, plan, image):
    """Pushes an allocation plan to a backend.

    Queues are created and placed on their port's QoS entry, then the
    flows are installed and finally the container is started. If any call
    fails, every call already made is undone in reverse order and the
    error is re-raised.

    Returns:
        The service id of the started container.
    """
    undo = []
    try:
        for queue in plan.queues:
            backend.create_queue(queue.switch, queue.port, queue.queue_id,
                                 queue.rate_limit)
            undo.append((backend.delete_queue,
                         (queue.switch, queue.port, queue.queue_id)))
            qos_id = backend.port_qos(queue.switch, queue.port)
            if qos_id is None:
                raise SouthboundError("port %s of %s has no QoS entry"
                                      % (queue.port, queue.switch))
            backend.place_queue_on_qos(queue.switch, qos_id, queue.port,
                                       queue.queue_id)
            undo.append((backend.remove_queue_from_qos,
                         (queue.switch, qos_id, queue.port, queue.queue_id)))
        flow_switches = set()
        for flow in plan.flows:
            backend.create_flow(flow)
            if flow.switch not in flow_switches:
                flow_switches.add(flow.switch)
                undo.append((backend.delete_flow, (flow.cookie, flow.switch)))
        return backend.start_container(
            plan.fog, image, plan.request.processing, plan.request.memory,
            plan.proxy_port)
    except SouthboundError:
        logger.info("rolling back %d configuration steps of cookie %s",
                    len(undo), plan.cookie)
        for function, args in reversed(undo):
            try:
                function(*args)
            except SouthboundError:
                logger.exception("rollback step %s%r failed",
                                 function.__name__, args)
        raise


def teardown_plan(backend, plan, service_id=None, done=None):
    """Removes what apply_plan installed: flows, queues, container.

    Args:
        backend: a Backend
        plan: the AllocationPlan that was applied
        service_id: the container to stop, if one was started
        done: a set collecting the steps already completed; steps found
        in it are skipped, so a teardown that failed half-way can be
        resumed by calling again with the same set

    Raises:
        SouthboundError: a step failed; the steps before it are in `done`.
    """
    done = set() if done is None else done

    def step(key, function, *args):
        if key in done:
            return
        function(*args)
        done.add(key)

    for flow in plan.flows:
        step(('flow', flow.switch), backend.delete_flow, plan.cookie,
             flow.switch)
    for queue in reversed(plan.queues):
        where = (queue.switch, queue.port, queue.queue_id)
        qos_id = backend.port_qos(queue.switch, queue.port)
        if qos_id is not None:
            step(('unqos',) + where, backend.remove_queue_from_qos,
                 queue.switch, qos_id, queue.port, queue.queue_id)
        step(('queue',) + where, backend.delete_queue, *where)
    if service_id is not None:
        step(('container', service_id), backend.stop_container, service_id)
