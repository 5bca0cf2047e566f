"""Oracles for the allocation algorithm and the ledgers.

The functions here are independent re-implementations used to audit the
real code paths: exhaustive path enumeration for allocation optimality,
and ledger / fabric reconciliation against the live reservations.
All audits return a list of notes, empty when everything holds.
"""

import collections
import logging
import random

import networkx as nx

import lib.protocol as protocol
import lib.raa as raa
import lib.topology as topology

logger = logging.getLogger(__name__)

BruteForceResult = collections.namedtuple(
    'BruteForceResult', ['cost', 'fog', 'nodes'])


def _servicers(topo, request):
    result = []
    for node in topo.nodes.values():
        if node.kind != topology.FOG_DEVICE:
            continue
        free_processing = (node.compute.total_processing -
                           node.compute.alloc_processing)
        free_memory = node.compute.total_memory - node.compute.alloc_memory
        if free_processing > request.processing and \
                free_memory > request.memory:
            result.append(node.id)
    return sorted(result)


def relay_graph(topo, request):
    """Builds a networkx DiGraph of the links a request may use.

    Only links leaving the requesting end-device or a switch are kept, and
    only when both directions can carry the requested bandwidth.
    """
    graph = nx.DiGraph()
    graph.add_nodes_from(topo.nodes)
    for (src, dst), link in topo.links.items():
        kind = topo.nodes[src].kind
        if src != request.end_device and kind != topology.SWITCH:
            continue
        reverse = topo.links.get((dst, src))
        if reverse is None:
            continue
        if (link.total_bw - link.alloc_bw < request.bw or
                reverse.total_bw - reverse.alloc_bw < request.bw):
            continue
        graph.add_edge(src, dst, link=link)
    return graph


def brute_force_best(topo, request):
    """Enumerates every simple path to every servicer.

    Returns:
        The cheapest BruteForceResult, or None when no servicer is
        reachable. Costs are summed in path order.
    """
    graph = relay_graph(topo, request)
    best = None
    for fog in _servicers(topo, request):
        for nodes in nx.all_simple_paths(graph, request.end_device, fog):
            cost = 0.0
            for src, dst in zip(nodes, nodes[1:]):
                link = graph[src][dst]['link']
                cost = cost + 1.0 / ((link.total_bw - link.alloc_bw) /
                                     float(topology.MBPS))
            if best is None or cost < best.cost:
                best = BruteForceResult(cost, fog, nodes)
    return best


def check_allocation(topo, request):
    """Runs allocate on a copy and compares it with brute_force_best.

    Returns:
        A list of notes describing mismatches.
    """
    notes = []
    oracle = brute_force_best(topo, request)
    scratch = topo.copy()
    result = raa.allocate(scratch, request)
    if isinstance(result, raa.Failure):
        if oracle is not None:
            notes.append("allocate failed (%s) but %s is reachable at cost %r "
                         "via %s" % (result.reason, oracle.fog, oracle.cost,
                                     oracle.nodes))
        return notes
    if oracle is None:
        notes.append("allocate chose %s but no feasible pair exists"
                     % result.fog)
        return notes
    if result.cost != oracle.cost:
        notes.append("allocate chose %s at cost %r, the optimum is %s at %r "
                     "via %s" % (result.fog, result.cost, oracle.fog,
                                 oracle.cost, oracle.nodes))
    for link in result.path:
        original = topo.link(link.src, link.dst)
        if original.total_bw - original.alloc_bw < request.bw:
            notes.append("chosen link %s->%s could not carry %d bps"
                         % (link.src, link.dst, request.bw))
    if result.path and raa.path_cost(
            [topo.link(l.src, l.dst) for l in result.path]) != result.cost:
        notes.append("plan cost %r does not match its path" % result.cost)
    return notes


def reconcile_ledgers(topo, reservations):
    """Checks charged resources against the live reservations.

    Every link must hold exactly its control reservation plus the
    bandwidth of the live reservations crossing it (in either direction);
    every fog-device exactly the compute of the reservations it hosts.
    """
    notes = []
    link_bw = collections.defaultdict(int)
    processing = collections.defaultdict(int)
    memory = collections.defaultdict(int)
    for reservation in reservations:
        if not reservation.live:
            continue
        for src, dst in reservation.links:
            link_bw[(src, dst)] += reservation.request.bw
            link_bw[(dst, src)] += reservation.request.bw
        processing[reservation.fog] += reservation.request.processing
        memory[reservation.fog] += reservation.request.memory
    for key in sorted(topo.links):
        link = topo.links[key]
        expected = link.control_bw + link_bw.pop(key, 0)
        if link.alloc_bw != expected:
            notes.append("Error: link %s->%s holds %d bps, expected %d"
                         % (key[0], key[1], link.alloc_bw, expected))
        if link.alloc_bw > link.total_bw:
            notes.append("Error: link %s->%s is over-allocated" % key)
    for key in sorted(link_bw):
        notes.append("Error: live reservation uses missing link %s->%s" % key)
    for node_id in topo.fog_devices():
        compute = topo.nodes[node_id].compute
        if compute.alloc_processing != processing.get(node_id, 0):
            notes.append("Error: %s holds %dm processing, expected %dm"
                         % (node_id, compute.alloc_processing,
                            processing.get(node_id, 0)))
        if compute.alloc_memory != memory.get(node_id, 0):
            notes.append("Error: %s holds %d bytes memory, expected %d"
                         % (node_id, compute.alloc_memory,
                            memory.get(node_id, 0)))
    return notes


def reconcile_fabric(fabric, reservations):
    """Checks that each live reservation owns exactly 2 queues and 2 flows
    per switch on its path, and that nothing else is installed.

    A reservation bound to a service must also have its container running
    on its fog-device behind its proxy port, and every running container
    must belong to a live reservation.
    """
    notes = []
    expected_queues = 0
    containers = dict((c.service_id, c) for c in fabric.running_containers())
    owned = set()
    for reservation in reservations:
        if not reservation.live:
            continue
        if reservation.service_id is not None:
            owned.add(reservation.service_id)
            container = containers.get(reservation.service_id)
            if container is None:
                notes.append("Error: service %s of reservation %d is not "
                             "running" % (reservation.service_id,
                                          reservation.cookie))
            elif (container.fog != reservation.fog or
                  container.port != reservation.proxy_port):
                notes.append("Error: service %s runs on %s:%s, reservation "
                             "%d holds %s:%s" % (
                                 container.service_id, container.fog,
                                 container.port, reservation.cookie,
                                 reservation.fog, reservation.proxy_port))
        hops = len(reservation.plan.switches)
        expected_queues += 2 * hops
        queues = fabric.queue_count(queue_id=reservation.cookie)
        flows = fabric.flow_count(cookie=reservation.cookie)
        if queues != 2 * hops or flows != 2 * hops:
            notes.append("Error: reservation %d over %d switches owns %d "
                         "queues and %d flows" % (reservation.cookie, hops,
                                                  queues, flows))
    if fabric.queue_count() != expected_queues:
        notes.append("Error: fabric holds %d queues, live reservations own %d"
                     % (fabric.queue_count(), expected_queues))
    if fabric.flow_count() != expected_queues:
        notes.append("Error: fabric holds %d flows, live reservations own %d"
                     % (fabric.flow_count(), expected_queues))
    for service_id in sorted(set(containers) - owned):
        notes.append("Error: service %s on %s has no live reservation"
                     % (service_id, containers[service_id].fog))
    return notes


def random_topology(rng, max_nodes=10, max_fogs=4, control_bw=0):
    """Builds a small random topology with one end-device.

    Link capacities are 10..1000 Mbps with random existing allocations
    and fog ledgers partially used.
    """
    node_count = rng.randint(3, max_nodes)
    fog_count = rng.randint(1, min(max_fogs, node_count - 2))
    switch_count = node_count - fog_count - 1
    snapshot = topology.TopologySnapshot()
    snapshot.add_node("end:0", topology.END_DEVICE, address="10.0.0.1")
    switches = ["openflow:%d" % (i + 1) for i in range(switch_count)]
    fogs = ["fog:%d" % i for i in range(fog_count)]
    for switch in switches:
        snapshot.add_node(switch, topology.SWITCH)
    for i, fog in enumerate(fogs):
        snapshot.add_node(fog, topology.FOG_DEVICE,
                          rng.choice([1000, 2000, 4000]),
                          rng.choice([2, 4, 8]) * topology.GIB,
                          address="10.0.1.%d" % (i + 1))
    ports = collections.defaultdict(int)

    def connect(a, b):
        if (a, b) in snapshot.links:
            return
        ports[a] += 1
        ports[b] += 1
        snapshot.add_link(a, b, ports[a], ports[b],
                          rng.randint(10, 1000) * topology.MBPS)

    relays = ["end:0"] + switches
    for switch in switches:
        connect(rng.choice(relays[:relays.index(switch)]), switch)
    for _ in range(rng.randint(0, 2 * len(relays))):
        a, b = rng.sample(relays, 2) if len(relays) > 1 else (None, None)
        if a is not None:
            connect(a, b)
    for fog in fogs:
        for relay in rng.sample(relays, rng.randint(1, min(2, len(relays)))):
            connect(relay, fog)

    topo = topology.Topology.from_snapshot(snapshot, control_bw)
    for link in topo.links.values():
        free = link.total_bw - link.alloc_bw
        link.alloc_bw += rng.randint(0, free // topology.MBPS) * topology.MBPS
    for fog in fogs:
        compute = topo.nodes[fog].compute
        compute.alloc_processing = rng.randint(0, compute.total_processing)
        compute.alloc_memory = rng.randint(0, compute.total_memory)
    return topo


def random_request(rng, end_device="end:0"):
    return raa.ResourceRequest(
        end_device,
        bw=rng.randint(1, 400) * topology.MBPS,
        processing=rng.choice([250, 500, 1000, 1500]),
        memory=rng.choice([256, 512, 1024, 2048]) * topology.MIB)


def fuzz_optimality(count, seed=0, max_nodes=10, max_fogs=4):
    """Checks allocate against brute_force_best on random graphs."""
    rng = random.Random(seed)
    notes = []
    for i in range(count):
        topo = random_topology(rng, max_nodes, max_fogs)
        request = random_request(rng)
        for note in check_allocation(topo, request):
            notes.append("graph %d: %s" % (i, note))
    return notes


def fuzz_orchestrator(orchestrator, ops, rng, reconcile_every=50):
    """Drives an orchestrator with random requests, shutdowns and reports.

    Returns:
        A list of notes from the periodic and final reconciliations.
    """
    topo = orchestrator.topology
    devices = topo.end_devices()
    fogs = topo.fog_devices()
    services = []
    notes = []
    for i in range(ops):
        roll = rng.random()
        if devices and (roll < 0.5 or not services and roll < 0.8):
            request = protocol.ServiceRequest(
                request_id="fuzz-%d" % i, image="fuzz",
                bw=rng.randint(1, 200) * topology.MBPS,
                processing=rng.choice([0.25, 0.5, 1.0, 1.25]),
                memory=rng.choice([128, 256, 512]) * topology.MIB,
                desired_port=rng.choice([None, None, None, 50000]),
                transport=rng.choice(["TCP", "UDP", "SCTP"]),
                node_id=rng.choice(devices))
            response = orchestrator.service_end_device(request)
            if response.success:
                services.append(response.service_id)
        elif services and roll < 0.8:
            service_id = services.pop(rng.randrange(len(services)))
            orchestrator.service_shutdown_request(
                protocol.ShutdownRequest(service_id=service_id))
        elif fogs:
            orchestrator.service_fog_device(protocol.ResourceReport(
                fog_id=rng.choice(fogs), processor_utilization=rng.random(),
                memory_utilization=rng.random(), timestamp=float(i)))
        if reconcile_every and (i + 1) % reconcile_every == 0:
            for note in orchestrator.reconcile():
                notes.append("after op %d: %s" % (i, note))
            if notes:
                return notes
    notes.extend(orchestrator.reconcile())
    return notes
