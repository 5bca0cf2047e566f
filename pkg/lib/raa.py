"""Resource allocation and deallocation for service requests.

allocate() filters the fog-devices able to host a request, runs a
bandwidth-weighted Dijkstra from the requesting end-device over switches,
picks the cheapest reachable fog-device and produces an AllocationPlan:
per switch on the path, two rate-limited queues and two flows (one per
direction). The topology ledgers are charged and a Reservation recorded.

deallocate() is the inverse: it tears the plan down on the fabric (when
given a backend) and releases exactly what was charged.

Link cost is 1 / available bandwidth, with the bandwidth expressed in
Mbps. A link whose available bandwidth (in either direction) is below
the requested rate has infinite cost.
"""

import collections
import logging

import lib.kheap as kheap
import lib.southbound as southbound
import lib.topology as topology

logger = logging.getLogger(__name__)

INF = kheap.INF

TRANSPORTS = southbound.TRANSPORTS

# Failure reasons.
NO_SERVICER = "NoServicer"
NO_PATH = "NoPath"
DESIRED_PORT_BUSY = "DesiredPortBusy"
FABRIC_ERROR = "FabricError"

LIVE = "Live"
DEAD = "Dead"

Failure = collections.namedtuple('Failure', ['reason', 'detail'],
                                 defaults=[""])


class AllocationError(Exception):
    """Internal allocation error (broken invariants, bad input)."""


class UnknownReservationError(AllocationError):
    """The reservation is unknown or was already released."""


class PathError(AllocationError):
    """The best-link pointers of a PathTree do not form a path."""


class DesiredPortBusy(Exception):
    """The proxy port requested by an end-device is already taken."""


class ResourceRequest(object):
    """Resources an end-device asks for.

    Attributes:
        end_device: a string, the requesting node id
        bw: an int, bandwidth in bits/s, reserved in both directions
        processing: an int, millicores
        memory: an int, bytes
        image: a string, the service image to run
        desired_port: an int or None, the proxy port wanted on the fog
        transport: one of TCP, UDP, SCTP
    """

    def __init__(self, end_device, bw, processing, memory, image="service",
                 desired_port=None, transport=southbound.TCP):
        if not bw > 0 or not processing > 0 or not memory > 0:
            raise AllocationError(
                "request resources must be positive: bw=%r processing=%r "
                "memory=%r" % (bw, processing, memory))
        if transport not in TRANSPORTS:
            raise AllocationError("transport is not valid: %r" % transport)
        self.end_device = end_device
        self.bw = int(bw)
        self.processing = int(processing)
        self.memory = int(memory)
        self.image = image
        self.desired_port = desired_port
        self.transport = transport

    def __repr__(self):
        return ("ResourceRequest(%s, bw=%d, processing=%dm, memory=%d, %s)"
                % (self.end_device, self.bw, self.processing, self.memory,
                   self.image))


def link_cost(link):
    """Returns 1 / available bandwidth of a link, in Mbps^-1."""
    return 1.0 / (topology.available_bw(link) / float(topology.MBPS))


def path_cost(links):
    """Sums link costs in path order, the way shortest_paths does."""
    total = 0.0
    for link in links:
        total = total + link_cost(link)
    return total


def link_feasible(topo, link, bw):
    """True when both directions of a link can carry bw more bits/s."""
    if topology.available_bw(link) < bw:
        return False
    reverse = topo.links.get((link.dst, link.src))
    return reverse is not None and topology.available_bw(reverse) >= bw


class PathTree(object):
    """Shortest-path tree rooted at the requesting end-device.

    Attributes:
        root: a string, the end-device node id
        best: a dict, node id -> Link, the incoming link on the best path
        weights: a dict, node id -> total cost from the root; nodes not
        reached are absent
    """

    def __init__(self, root):
        self.root = root
        self.best = {}
        self.weights = {root: 0.0}

    def weight(self, node_id):
        return self.weights.get(node_id, INF)

    def reached(self, node_id):
        return node_id in self.weights

    def path_to(self, node_id):
        """Returns the list of links from the root to node_id."""
        if node_id not in self.weights:
            raise PathError("%s was not reached from %s"
                            % (node_id, self.root))
        links = []
        seen = set()
        node = node_id
        while node != self.root:
            if node in seen:
                raise PathError("cycle in best-link pointers at %s" % node)
            seen.add(node)
            try:
                link = self.best[node]
            except KeyError:
                raise PathError("broken best-link chain at %s" % node)
            links.append(link)
            node = link.src
        links.reverse()
        return links

    def check(self):
        """Verifies pointer chains and weight monotonicity.

        Returns:
            A list of strings describing violations; empty when sound.
        """
        notes = []
        for node_id in sorted(self.best):
            try:
                self.path_to(node_id)
            except PathError as e:
                notes.append(str(e))
                continue
            parent = self.best[node_id].src
            if self.weights[parent] > self.weights[node_id]:
                notes.append("weight decreases from %s to %s"
                             % (parent, node_id))
        return notes


def find_request_servicers(topo, request):
    """Returns the set of fog-devices with strictly more than the requested
    processing and memory left."""
    servicers = set()
    for node_id in topo.fog_devices():
        compute = topo.nodes[node_id].compute
        if (compute.available_processing() > request.processing and
                compute.available_memory() > request.memory):
            servicers.add(node_id)
    return servicers


def shortest_paths(topo, end_device, request):
    """Bandwidth-weighted Dijkstra from an end-device.

    Only the end-device itself and switches relay; every other node can be
    reached but is never expanded. Links that cannot carry the requested
    bandwidth in both directions are skipped (infinite weight).

    Returns:
        A PathTree.
    """
    node = topo.node(end_device)
    if node.kind != topology.END_DEVICE:
        raise AllocationError("%s is not an end-device (%s)"
                              % (end_device, node.kind))
    tree = PathTree(end_device)
    heap = kheap.new_heap(max(1, topo.node_count), topo.link_count)
    heap.push(kheap.HeapEntry(end_device, end_device, 0.0))
    done = set()
    bw = request.bw
    while len(heap):
        u = heap.pop_min()
        done.add(u.dst)
        if u.src != u.dst:
            tree.best[u.dst] = u.link
            tree.weights[u.dst] = u.weight
        if u.dst != end_device and topo.nodes[u.dst].kind != topology.SWITCH:
            continue
        base = u.weight
        for link in topo.outgoing(u.dst):
            if link.dst in done:
                continue
            if not link_feasible(topo, link, bw):
                continue
            weight = base + link_cost(link)
            candidate = kheap.HeapEntry(link.src, link.dst, weight, link)
            if link.dst in heap:
                if weight < heap.weight_of(link.dst):
                    heap.decrease_key(candidate, candidate)
            else:
                heap.push(candidate)
    return tree


def select_fog(tree, servicers):
    """Returns the servicer with the lowest path weight, or None.

    Ties go to the lexically smallest node id.
    """
    best = None
    best_weight = INF
    for fog in sorted(servicers):
        weight = tree.weight(fog)
        if weight < best_weight:
            best = fog
            best_weight = weight
    return best


class AllocationPlan(object):
    """What has to be configured to enforce one allocation.

    Attributes:
        request: the ResourceRequest
        fog: a string, the chosen fog-device
        path: a list of Link, from the end-device to the fog-device
        switches: a list of switch ids along the path
        queues: a list of southbound.QueueSpec, two per switch
        flows: a list of southbound.FlowSpec, two per switch
        proxy_port: the transport port of the service on the fog-device
        cost: a float, the path weight
        cookie: an int, identifies the flows and queues of the plan
        reservation: the Reservation, set by allocate()
    """

    def __init__(self, request, fog, path, proxy_port, cost, cookie):
        self.request = request
        self.fog = fog
        self.path = path
        self.proxy_port = proxy_port
        self.cost = cost
        self.cookie = cookie
        self.switches = [link.dst for link in path[:-1]]
        self.queues = []
        self.flows = []
        self.reservation = None

    def __repr__(self):
        return "AllocationPlan(%s -> %s via %s, port %s, cost %r)" % (
            self.request.end_device, self.fog, self.switches,
            self.proxy_port, self.cost)


def build_plan(topo, tree, request, fog, port, cookie=0,
               priority=southbound.DEFAULT_PRIORITY):
    """Turns the tree path to a fog-device into queues and flows."""
    if tree.weight(fog) == INF:
        raise AllocationError("%s is not reachable from %s"
                              % (fog, tree.root))
    path = tree.path_to(fog)
    if not path or path[0].src != request.end_device or path[-1].dst != fog:
        raise PathError("path endpoints are not %s and %s"
                        % (request.end_device, fog))
    plan = AllocationPlan(request, fog, path, port, tree.weight(fog), cookie)
    device_addr = topo.node(request.end_device).flow_address()
    fog_addr = topo.node(fog).flow_address()
    for incoming, outgoing in zip(path, path[1:]):
        switch = outgoing.src
        if topo.node(switch).kind != topology.SWITCH:
            raise PathError("interior node %s is not a switch" % switch)
        toward_fog = outgoing.src_port
        toward_device = topo.reverse(incoming).src_port
        plan.queues.append(southbound.QueueSpec(
            switch, toward_fog, cookie, request.bw))
        plan.queues.append(southbound.QueueSpec(
            switch, toward_device, cookie, request.bw))

        forward = southbound.flow_skeleton(switch, cookie, priority)
        forward.add_match(src_addr=device_addr, dst_addr=fog_addr,
                          transport=request.transport,
                          port_field=southbound.DST_PORT, port_value=port)
        forward.add_action(southbound.output_action(toward_fog))
        forward.add_action(southbound.enqueue_action(toward_fog, cookie))
        plan.flows.append(forward)

        backward = southbound.flow_skeleton(switch, cookie, priority)
        backward.add_match(src_addr=fog_addr, dst_addr=device_addr,
                           transport=request.transport,
                           port_field=southbound.SRC_PORT, port_value=port)
        backward.add_action(southbound.output_action(toward_device))
        backward.add_action(southbound.enqueue_action(toward_device, cookie))
        plan.flows.append(backward)
    return plan


class Reservation(object):
    """Resources held by one live service.

    Attributes:
        cookie: an int, unique per reservation
        plan: the AllocationPlan
        request: the ResourceRequest
        fog: a string, the fog-device
        links: a list of (src, dst) keys of the forward path
        proxy_port: the transport port on the fog-device
        service_id: a string, set once the container runs
        cookies: a dict, switch id -> flow cookie
        torn_down: a set of the teardown steps already completed
        state: LIVE or DEAD
    """

    def __init__(self, cookie, plan):
        self.cookie = cookie
        self.plan = plan
        self.request = plan.request
        self.fog = plan.fog
        self.links = [link.key for link in plan.path]
        self.proxy_port = plan.proxy_port
        self.service_id = None
        self.cookies = dict((switch, cookie) for switch in plan.switches)
        self.torn_down = set()
        self.state = LIVE

    @property
    def live(self):
        return self.state == LIVE

    def uses_node(self, node_id):
        return node_id == self.fog or any(node_id in key for key in self.links)

    def uses_link(self, key):
        return key in self.links or (key[1], key[0]) in self.links

    def __repr__(self):
        return "Reservation(#%d %s -> %s, %s, %s)" % (
            self.cookie, self.request.end_device, self.fog, self.service_id,
            self.state)


class ReservationLedger(object):
    """All reservations, with the cookie sequence."""

    def __init__(self, first_cookie=1):
        self.reservations = collections.OrderedDict()
        self._next_cookie = first_cookie
        self._by_service = {}

    def next_cookie(self):
        cookie = self._next_cookie
        self._next_cookie += 1
        return cookie

    def record(self, reservation):
        self.reservations[reservation.cookie] = reservation

    def bind_service(self, reservation, service_id):
        reservation.service_id = service_id
        self._by_service[service_id] = reservation

    def by_service_id(self, service_id):
        reservation = self._by_service.get(service_id)
        if reservation is None or not reservation.live:
            raise UnknownReservationError("unknown service: %s"
                                          % (service_id,))
        return reservation

    def forget_service(self, service_id):
        self._by_service.pop(service_id, None)

    def live(self):
        return [r for r in self.reservations.values() if r.live]

    def __len__(self):
        return len(self.live())


def allocate(topo, request, ledger=None, ports=None,
             priority=southbound.DEFAULT_PRIORITY):
    """Allocates bandwidth, processing and memory for a request.

    The caller must hold the allocation lock.

    Args:
        topo: a Topology, charged on success
        request: a ResourceRequest
        ledger: a ReservationLedger recording the reservation
        ports: an object with assign(fog, desired) and release(fog, port)
        priority: the priority of the installed flows

    Returns:
        An AllocationPlan (with .reservation set), or a Failure. On Failure
        the topology is unchanged.
    """
    if ledger is None:
        ledger = ReservationLedger()
    servicers = find_request_servicers(topo, request)
    if not servicers:
        logger.info("no servicer for %r", request)
        return Failure(NO_SERVICER, "no fog-device has enough processing "
                       "and memory left")
    tree = shortest_paths(topo, request.end_device, request)
    fog = select_fog(tree, servicers)
    if fog is None:
        logger.info("no feasible path for %r", request)
        return Failure(NO_PATH, "no servicer is reachable with %d bps"
                       % request.bw)
    port = request.desired_port
    if ports is not None:
        try:
            port = ports.assign(fog, request.desired_port)
        except DesiredPortBusy as e:
            return Failure(DESIRED_PORT_BUSY, str(e))
    cookie = ledger.next_cookie()
    plan = build_plan(topo, tree, request, fog, port, cookie, priority)
    for link in plan.path:
        topo.charge_bandwidth(link.src, link.dst, request.bw)
        topo.charge_bandwidth(link.dst, link.src, request.bw)
    topo.node(fog).compute.charge(request.processing, request.memory)
    reservation = Reservation(cookie, plan)
    plan.reservation = reservation
    ledger.record(reservation)
    logger.info("allocated %s -> %s over %d switches, cost %.6g (cookie %d)",
                request.end_device, fog, len(plan.switches), plan.cost, cookie)
    return plan


def deallocate(topo, reservation, backend=None, ports=None):
    """Releases a live reservation.

    Flows, queues and the container are removed through the backend (if
    given), the ledgers are released by exactly the reserved amounts and
    the proxy port goes back to the pool. Links or nodes that vanished
    from the topology in the meantime are skipped.

    Raises:
        UnknownReservationError: the reservation is not live.
        SouthboundError: a teardown step failed. Nothing is released and
        the reservation stays live; calling again resumes the teardown.
    """
    if reservation is None or not reservation.live:
        raise UnknownReservationError("reservation is not live: %r"
                                      % (reservation,))
    if backend is not None:
        try:
            southbound.teardown_plan(backend, reservation.plan,
                                     reservation.service_id,
                                     reservation.torn_down)
        except southbound.SouthboundError as e:
            logger.warning("teardown of reservation %d stopped after %d "
                           "steps: %s", reservation.cookie,
                           len(reservation.torn_down), e)
            raise
    bw = reservation.request.bw
    for src, dst in reservation.links:
        for key in ((src, dst), (dst, src)):
            if topo.has_link(*key):
                topo.release_bandwidth(key[0], key[1], bw)
    fog = topo.nodes.get(reservation.fog)
    if fog is not None and fog.compute is not None:
        fog.compute.release(reservation.request.processing,
                            reservation.request.memory)
    if ports is not None and reservation.proxy_port is not None:
        ports.release(reservation.fog, reservation.proxy_port)
    reservation.state = DEAD
    logger.info("released reservation %d (%s)", reservation.cookie,
                reservation.service_id)
