"""Fog orchestrator runtime.

The Orchestrator owns the Topology, the southbound backend, the
reservation ledger and the proxy-port pools. It serves three kinds of
traffic, each on its own stream endpoint:
    - greetings (and resource reports) from devices,
    - service requests from end-devices,
    - shutdown requests.

Allocation and deallocation run end-to-end under one FIFO lock, so
concurrent requests are fulfilled one at a time in arrival order.

Typical use:

    snapshot = lib.topology.TopologySnapshot.create_from_file("net.json")
    orchestrator = Orchestrator.from_snapshot(snapshot)
    orchestrator.serve()
"""

import contextlib
import json
import logging
import socketserver
import threading

from pathlib2 import Path

import lib.checks as checks
import lib.protocol as protocol
import lib.raa as raa
import lib.southbound as southbound
import lib.topology as topology

logger = logging.getLogger(__name__)

DesiredPortBusy = raa.DesiredPortBusy


class ConfigError(Exception):
    """The orchestrator configuration is not valid."""


class OrchestratorConfig(object):
    """Configuration of the orchestrator.

    Override the defaults by subclassing, or load a JSON file with
    create_from_file().
    """

    #
    # Stream endpoints, (host, port). Port 0 picks a free port.
    #

    greeting_endpoint = ("127.0.0.1", 6633)
    service_endpoint = ("127.0.0.1", 6634)
    shutdown_endpoint = ("127.0.0.1", 6635)

    # Bandwidth set aside on every link for control traffic, bits/s.
    control_bw = 50 * topology.MBPS

    # Proxy ports handed out on each fog-device, inclusive.
    port_range = (49152, 65535)

    # Seconds between two topology refreshes.
    refresh_period = 1.0

    # Transport assumed when a request does not name one.
    default_transport = southbound.TCP

    # Priority of the flows installed for reservations.
    flow_priority = southbound.DEFAULT_PRIORITY

    @staticmethod
    def create_from_file(filename, config_class=None):
        """Reads a JSON object whose keys override the defaults.

        Args:
            filename: a string, the name of the configuration file
            config_class: a class that implements OrchestratorConfig

        Returns:
            An instance of config_class.

        Raises:
            ConfigError: unreadable file, unknown key or bad value.
        """
        path = Path(filename).expanduser().absolute()
        try:
            with path.open('r', encoding='utf-8') as config_file:
                obj = json.load(config_file)
        except (IOError, OSError, ValueError) as e:
            raise ConfigError("cannot read configuration %s: %s" % (path, e))
        return OrchestratorConfig.from_dict(obj, config_class)

    @staticmethod
    def from_dict(obj, config_class=None):
        config_class = config_class or OrchestratorConfig
        if not isinstance(obj, dict):
            raise ConfigError("configuration is not an object")
        config = config_class()
        for key, value in sorted(obj.items()):
            if key.startswith('_') or not hasattr(config_class, key) or \
                    callable(getattr(config_class, key)):
                raise ConfigError("unknown configuration key: %s" % key)
            if key.endswith('_endpoint') or key == 'port_range':
                if not isinstance(value, (list, tuple)) or len(value) != 2:
                    raise ConfigError("%s must be a pair: %r" % (key, value))
                value = tuple(value)
            setattr(config, key, value)
        config.check()
        return config

    def check(self):
        low, high = self.port_range
        if not 0 < low <= high < 65536:
            raise ConfigError("port range is not valid: %r"
                              % (self.port_range,))
        if self.control_bw < 0:
            raise ConfigError("control bandwidth is negative: %r"
                              % self.control_bw)
        if self.default_transport not in southbound.TRANSPORTS:
            raise ConfigError("transport is not valid: %r"
                              % self.default_transport)


class PortPool(object):
    """Free proxy ports per fog-device."""

    def __init__(self, port_range=OrchestratorConfig.port_range):
        self.low, self.high = port_range
        self._used = {}

    def assign(self, fog, desired=None):
        """Reserves a port on a fog-device.

        A desired port is honored if free. Otherwise the lowest free port
        of the range is returned.

        Raises:
            DesiredPortBusy: the desired port is taken, or the pool is
            exhausted.
        """
        used = self._used.setdefault(fog, set())
        if desired is not None:
            if desired in used:
                raise DesiredPortBusy("port %d is already used on %s"
                                      % (desired, fog))
            used.add(desired)
            return desired
        for port in range(self.low, self.high + 1):
            if port not in used:
                used.add(port)
                return port
        raise DesiredPortBusy("no free port left on %s" % fog)

    def mark_used(self, fog, port):
        self._used.setdefault(fog, set()).add(port)

    def release(self, fog, port):
        used = self._used.get(fog, set())
        assert port in used, "releasing free port %r on %s" % (port, fog)
        used.discard(port)

    def in_use(self, fog):
        return set(self._used.get(fog, ()))

    def holders(self):
        return dict((fog, set(ports)) for fog, ports in self._used.items()
                    if ports)


class FifoLock(object):
    """A mutex granting ownership in arrival order.

    Attributes:
        trace: a list of (ticket, owner, event) with event one of "wait",
        "acquire" and "release"
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._next_ticket = 0
        self._serving = 0
        self._owner = None
        self.trace = []

    def acquire(self, owner=None):
        with self._cond:
            ticket = self._next_ticket
            self._next_ticket += 1
            self.trace.append((ticket, owner, "wait"))
            while self._serving != ticket:
                self._cond.wait()
            self._owner = (ticket, owner)
            self.trace.append((ticket, owner, "acquire"))
            return ticket

    def release(self):
        with self._cond:
            assert self._owner is not None, "release of an unheld FifoLock"
            ticket, owner = self._owner
            self.trace.append((ticket, owner, "release"))
            self._owner = None
            self._serving += 1
            self._cond.notify_all()

    @contextlib.contextmanager
    def hold(self, owner=None):
        self.acquire(owner)
        try:
            yield
        finally:
            self.release()

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc_info):
        self.release()


class Orchestrator(object):
    """The controller: allocation state and request handling.

    Attributes:
        topology: the Topology, the source of truth for allocations
        backend: a southbound.Backend enforcing allocations
        config: an OrchestratorConfig
        ledger: a raa.ReservationLedger
        ports: a PortPool
        lock: the FifoLock serializing allocation and deallocation
    """

    def __init__(self, topo, backend=None, config=None):
        self.config = config if config is not None else OrchestratorConfig()
        self.topology = topo
        if backend is None:
            backend = southbound.SimulatedFabric()
        self.backend = backend
        self.ledger = raa.ReservationLedger()
        self.ports = PortPool(self.config.port_range)
        self.lock = FifoLock()
        self._servers = []
        with self.lock.hold("startup"):
            topo.reserve_control_bandwidth(self.config.control_bw)
            self.backend.sync_topology(topo)
            southbound.install_port_qos(self.backend, topo)
        logger.info("orchestrator started on %s, control reservation %d bps",
                    topo, self.config.control_bw)

    @staticmethod
    def from_snapshot(snapshot, backend=None, config=None):
        config = config if config is not None else OrchestratorConfig()
        topo = topology.Topology.from_snapshot(snapshot)
        return Orchestrator(topo, backend, config)

    #
    # Request handling.
    #

    def register_greeting(self, greeting):
        """Types the greeting node; fog-devices become hosts."""
        with self.lock.hold(greeting.node_id):
            topology.register_greeting(self.topology, greeting)
            node = self.topology.nodes[greeting.node_id]
            if node.kind == topology.FOG_DEVICE:
                self.backend.register_fog(node.id,
                                          node.compute.total_processing,
                                          node.compute.total_memory)

    def _to_resource_request(self, request, sender):
        try:
            return raa.ResourceRequest(
                sender, request.bw,
                topology.cores_to_millicores(request.processing),
                request.memory, request.image, request.desired_port,
                request.transport or self.config.default_transport)
        except raa.AllocationError as e:
            raise protocol.ProtocolError(str(e))

    def service_end_device(self, request, from_node=None):
        """Processes a service request from an end-device.

        Runs the allocation, enforces the plan on the backend and starts
        the container. A backend failure rolls back every applied step.

        Args:
            request: a protocol.ServiceRequest
            from_node: the node id of the sender, defaults to
            request.node_id

        Returns:
            A protocol.ServiceResponse.

        Raises:
            ProtocolError: the sender is not a registered end-device.
        """
        sender = from_node or request.node_id
        node = self.topology.nodes.get(sender)
        if node is None or node.kind != topology.END_DEVICE:
            raise protocol.ProtocolError("request %s from unregistered "
                                         "end-device %s"
                                         % (request.request_id, sender))
        resource_request = self._to_resource_request(request, sender)
        with self.lock.hold(request.request_id):
            result = raa.allocate(self.topology, resource_request,
                                  self.ledger, self.ports,
                                  self.config.flow_priority)
            if isinstance(result, raa.Failure):
                return self._failure(request, result)
            reservation = result.reservation
            try:
                service_id = southbound.apply_plan(self.backend, result,
                                                   request.image)
            except southbound.SouthboundError as e:
                logger.warning("enforcing reservation %d failed: %s",
                               reservation.cookie, e)
                raa.deallocate(self.topology, reservation, ports=self.ports)
                return self._failure(request,
                                     raa.Failure(raa.FABRIC_ERROR, str(e)))
            self.ledger.bind_service(reservation, service_id)
        logger.info("request %s from %s served by %s port %s (%s)",
                    request.request_id, sender, result.fog,
                    result.proxy_port, service_id)
        return protocol.ServiceResponse(
            request_id=request.request_id, status=protocol.SUCCESS,
            fog_address=self.topology.nodes[result.fog].flow_address(),
            proxy_port=result.proxy_port, service_id=service_id)

    def _failure(self, request, failure):
        logger.info("request %s failed: %s %s", request.request_id,
                    failure.reason, failure.detail)
        return protocol.ServiceResponse(
            request_id=request.request_id, status=protocol.FAILURE,
            reason=failure.reason)

    def service_shutdown_request(self, request):
        """Releases the reservation of a service and stops its container.

        When the backend fails half-way the reservation stays live, nothing
        is released and the reply is TEARDOWN_FAILED; a repeated request
        resumes the teardown.
        """
        with self.lock.hold(request.service_id):
            try:
                reservation = self.ledger.by_service_id(request.service_id)
            except raa.UnknownReservationError:
                return protocol.ShutdownResponse(
                    service_id=request.service_id,
                    response=protocol.UNKNOWN_SERVICE)
            try:
                raa.deallocate(self.topology, reservation, self.backend,
                               self.ports)
            except southbound.SouthboundError as e:
                logger.warning("shutdown of %s failed, service kept: %s",
                               request.service_id, e)
                return protocol.ShutdownResponse(
                    service_id=request.service_id,
                    response=protocol.TEARDOWN_FAILED)
            self.ledger.forget_service(request.service_id)
        logger.info("service %s shut down", request.service_id)
        return protocol.ShutdownResponse(service_id=request.service_id,
                                         response=protocol.OK)

    def service_fog_device(self, report):
        """Stores a fog resource report. Ledgers are not affected."""
        report.validate()
        node = self.topology.nodes.get(report.fog_id)
        if node is None or node.kind != topology.FOG_DEVICE:
            raise protocol.ProtocolError("report from unknown fog-device %s"
                                         % report.fog_id)
        node.report = report

    def assign_proxy_port(self, fog, desired=None):
        return self.ports.assign(fog, desired)

    def dispatch(self, message, from_node=None):
        """Routes a decoded message; returns the reply or None."""
        if isinstance(message, protocol.Greeting):
            self.register_greeting(message)
        elif isinstance(message, protocol.ResourceReport):
            self.service_fog_device(message)
        elif isinstance(message, protocol.ServiceRequest):
            return self.service_end_device(message, from_node)
        elif isinstance(message, protocol.ShutdownRequest):
            return self.service_shutdown_request(message)
        else:
            raise protocol.ProtocolError("unexpected %s" % message.TYPE)
        return None

    #
    # Topology maintenance.
    #

    def refresh_topology(self, snapshot):
        """Applies an observed snapshot.

        Live reservations whose fog-device or path links vanished (or
        whose path ports changed) are force-deallocated first.

        Returns:
            A (ChangeSet, list of released Reservation) tuple.

        Raises:
            SnapshotError: the snapshot was rejected; nothing changed.
            SouthboundError: a forced teardown failed. The topology is not
            updated and that reservation stays live; the refresh can be
            retried.
        """
        with self.lock.hold("refresh"):
            changes = topology.diff_topology(self.topology, snapshot)
            victims = [r for r in self.ledger.live()
                       if self._broken_by(r, changes)]
            for reservation in victims:
                logger.info("force-deallocating reservation %d (%s): its "
                            "resources left the topology",
                            reservation.cookie, reservation.service_id)
                raa.deallocate(self.topology, reservation, self.backend,
                               self.ports)
                self.ledger.forget_service(reservation.service_id)
            changes = topology.update_topology(self.topology, snapshot)
            self.backend.sync_topology(self.topology)
            southbound.install_port_qos(self.backend, self.topology)
        return changes, victims

    def _broken_by(self, reservation, changes):
        removed = set(changes.removed_nodes)
        if reservation.fog in removed:
            return True
        for src, dst in reservation.links:
            if src in removed or dst in removed:
                return True
            for key in ((src, dst), (dst, src)):
                if key in changes.removed_links:
                    return True
                info = changes.updated_links.get(key)
                if info is not None:
                    link = self.topology.links[key]
                    if (info['src_port'] != link.src_port or
                            info['dst_port'] != link.dst_port):
                        return True
        return False

    def reconcile(self):
        """Audits ledgers, fabric and port pools against live reservations.

        Returns:
            A list of notes, empty when consistent.
        """
        with self.lock.hold("reconcile"):
            live = self.ledger.live()
            notes = checks.reconcile_ledgers(self.topology, live)
            if isinstance(self.backend, southbound.SimulatedFabric):
                notes.extend(checks.reconcile_fabric(self.backend, live))
                notes.extend(self.backend.check_consistency(self.topology))
            expected = {}
            for reservation in live:
                expected.setdefault(reservation.fog, set()).add(
                    reservation.proxy_port)
            if self.ports.holders() != expected:
                notes.append("Error: proxy ports in use %r differ from live "
                             "reservations %r" % (self.ports.holders(),
                                                  expected))
        return notes

    #
    # Servers.
    #

    def serve(self):
        """Starts the greeting, service and shutdown servers.

        Returns:
            The list of started servers; their server_address attribute
            holds the bound endpoint.
        """
        roles = (
            (self.config.greeting_endpoint,
             (protocol.Greeting, protocol.ResourceReport)),
            (self.config.service_endpoint, (protocol.ServiceRequest,)),
            (self.config.shutdown_endpoint, (protocol.ShutdownRequest,)),
        )
        for endpoint, accepts in roles:
            server = OrchestratorServer(tuple(endpoint), self, accepts)
            thread = threading.Thread(target=server.serve_forever)
            thread.daemon = True
            thread.start()
            self._servers.append(server)
            logger.info("listening for %s on %s:%d",
                        "/".join(cls.TYPE for cls in accepts),
                        *server.server_address[:2])
        return list(self._servers)

    def shutdown(self):
        for server in self._servers:
            server.shutdown()
            server.server_close()
        self._servers = []


class OrchestratorServer(socketserver.ThreadingMixIn, socketserver.TCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, endpoint, orchestrator, accepts):
        self.orchestrator = orchestrator
        self.accepts = accepts
        socketserver.TCPServer.__init__(self, endpoint, MessageHandler)


class MessageHandler(socketserver.BaseRequestHandler):
    """Reads framed messages until the peer closes the connection."""

    def handle(self):
        server = self.server
        while True:
            try:
                message = protocol.recv_message(self.request)
            except EOFError:
                return
            except protocol.ProtocolError as e:
                logger.warning("dropping connection from %s: %s",
                               self.client_address[0], e)
                return
            if not isinstance(message, server.accepts):
                logger.warning("unexpected %s from %s", message.TYPE,
                               self.client_address[0])
                return
            try:
                reply = server.orchestrator.dispatch(message)
            except (protocol.ProtocolError, topology.TopologyError) as e:
                logger.warning("rejected %s from %s: %s", message.TYPE,
                               self.client_address[0], e)
                return
            if reply is not None:
                protocol.send_message(self.request, reply)


class TopologyRefresher(threading.Thread):
    """Polls a snapshot source and applies it periodically.

    Args:
        orchestrator: an Orchestrator
        source: a callable returning a TopologySnapshot
        period: seconds between polls, defaults to the configured period
    """

    def __init__(self, orchestrator, source, period=None):
        threading.Thread.__init__(self, name="topology-refresher")
        self.daemon = True
        self.orchestrator = orchestrator
        self.source = source
        self.period = (orchestrator.config.refresh_period
                       if period is None else period)
        self.refreshes = 0
        self._stop_event = threading.Event()

    def refresh_once(self):
        snapshot = self.source()
        if not snapshot.valid:
            logger.warning("ignoring invalid snapshot: %s",
                           "; ".join(snapshot.notes))
            return False
        try:
            self.orchestrator.refresh_topology(snapshot)
        except topology.SnapshotError as e:
            logger.warning("snapshot rejected: %s", e)
            return False
        except southbound.SouthboundError as e:
            logger.warning("refresh postponed, teardown failed: %s", e)
            return False
        self.refreshes += 1
        return True

    def run(self):
        while not self._stop_event.is_set():
            self.refresh_once()
            self._stop_event.wait(self.period)

    def stop(self):
        self._stop_event.set()
