import random
import socket
import threading
import time
import unittest

import fog_lib
import lib.checks as checks
import lib.protocol as protocol
import lib.raa as raa
import lib.simnet as simnet
import lib.southbound as southbound
import lib.topology as topology


class SmallPortsConfig(fog_lib.OrchestratorConfig):
    port_range = (50000, 50003)
    greeting_endpoint = ("127.0.0.1", 0)
    service_endpoint = ("127.0.0.1", 0)
    shutdown_endpoint = ("127.0.0.1", 0)


def _request(node_id="end:1", request_id="r1", **kwargs):
    fields = dict(request_id=request_id, image="sleep-app",
                  bw=10 * topology.MBPS, processing=0.5,
                  memory=256 * topology.MIB, transport="TCP",
                  node_id=node_id)
    fields.update(kwargs)
    return protocol.ServiceRequest(**fields)


def _ledger_state(topo):
    links = dict((key, link.alloc_bw) for key, link in topo.links.items())
    fogs = dict((node_id, (topo.nodes[node_id].compute.alloc_processing,
                           topo.nodes[node_id].compute.alloc_memory))
                for node_id in topo.fog_devices())
    return links, fogs


class TestOrchestratorConfig(unittest.TestCase):

    def testLoadFile(self):
        config = fog_lib.OrchestratorConfig.create_from_file(
            'testfiles/orchestrator.json')
        self.assertEqual(config.service_endpoint, ("127.0.0.1", 0))
        self.assertEqual(config.control_bw, 20 * topology.MBPS)
        self.assertEqual(config.port_range, (50000, 50010))
        # Untouched keys keep their defaults.
        self.assertEqual(config.refresh_period, 1.0)

    def testConfigClass(self):
        config = fog_lib.OrchestratorConfig.create_from_file(
            'testfiles/orchestrator.json', config_class=SmallPortsConfig)
        self.assertIsInstance(config, SmallPortsConfig)
        self.assertEqual(config.port_range, (50000, 50010))

    def testUnknownKey(self):
        with self.assertRaises(fog_lib.ConfigError):
            fog_lib.OrchestratorConfig.create_from_file(
                'testfiles/bad_orchestrator.json')

    def testUnreadableFile(self):
        for filename in ['testfiles/no_such_config.json',
                         'testfiles/corrupt.json']:
            with self.assertRaises(fog_lib.ConfigError):
                fog_lib.OrchestratorConfig.create_from_file(filename)

    def testBadValues(self):
        for obj in [{'port_range': [10, 5]}, {'port_range': 80},
                    {'control_bw': -1}, {'default_transport': "ICMP"},
                    {'check': 1}, []]:
            with self.assertRaises(fog_lib.ConfigError):
                fog_lib.OrchestratorConfig.from_dict(obj)


class TestPortPool(unittest.TestCase):

    def setUp(self):
        self.pool = fog_lib.PortPool((100, 102))

    def testLowestFreePort(self):
        self.assertEqual(self.pool.assign("fog:0"), 100)
        self.assertEqual(self.pool.assign("fog:0"), 101)
        self.assertEqual(self.pool.assign("fog:1"), 100)

    def testDesiredPort(self):
        self.assertEqual(self.pool.assign("fog:0", 8080), 8080)
        with self.assertRaises(fog_lib.DesiredPortBusy):
            self.pool.assign("fog:0", 8080)
        self.assertEqual(self.pool.assign("fog:1", 8080), 8080)

    def testExhaustion(self):
        for _ in range(3):
            self.pool.assign("fog:0")
        with self.assertRaises(fog_lib.DesiredPortBusy):
            self.pool.assign("fog:0")
        self.pool.release("fog:0", 101)
        self.assertEqual(self.pool.assign("fog:0"), 101)

    def testRelease(self):
        port = self.pool.assign("fog:0")
        self.pool.release("fog:0", port)
        self.assertEqual(self.pool.holders(), {})
        with self.assertRaises(AssertionError):
            self.pool.release("fog:0", port)


class TestFifoLock(unittest.TestCase):

    def _wait_for(self, predicate, timeout=5.0):
        deadline = time.time() + timeout
        while not predicate():
            self.assertLess(time.time(), deadline, "timed out")
            time.sleep(0.001)

    def testArrivalOrder(self):
        lock = fog_lib.FifoLock()
        acquired = []
        lock.acquire("first")
        threads = []
        for name in ["a", "b", "c", "d"]:
            def worker(name=name):
                with lock.hold(name):
                    acquired.append(name)
            thread = threading.Thread(target=worker)
            thread.start()
            threads.append(thread)
            self._wait_for(lambda: (len(threads), name, "wait") in lock.trace)
        lock.release()
        for thread in threads:
            thread.join(5.0)
        self.assertEqual(acquired, ["a", "b", "c", "d"])
        acquires = [t for t, _, event in lock.trace if event == "acquire"]
        self.assertEqual(acquires, sorted(acquires))

    def testReleaseUnheld(self):
        with self.assertRaises(AssertionError):
            fog_lib.FifoLock().release()


class TestOrchestrator(unittest.TestCase):

    def setUp(self):
        self.topo = simnet.testbed_topology()
        self.orchestrator = fog_lib.Orchestrator(self.topo,
                                                 config=SmallPortsConfig())

    def tearDown(self):
        self.orchestrator.shutdown()

    def assertReconciled(self):
        notes = self.orchestrator.reconcile()
        self.assertEqual(notes, [], "\n".join(notes))

    def testStartupReservesControlBandwidth(self):
        for link in self.topo.links.values():
            self.assertEqual(link.alloc_bw, 50 * topology.MBPS)
        fabric = self.orchestrator.backend
        self.assertEqual(fabric.port_qos("openflow:2", 1), "qos-1")
        self.assertReconciled()

    def testHappyPath(self):
        response = self.orchestrator.service_end_device(_request())
        self.assertTrue(response.success)
        self.assertEqual(response.fog_address, "10.2.0.1")
        self.assertEqual(response.proxy_port, 50000)
        reservation = self.orchestrator.ledger.by_service_id(
            response.service_id)
        self.assertEqual(reservation.fog, "fog:0")
        self.assertEqual(reservation.request.processing, 500)
        self.assertReconciled()

    def testDesiredPort(self):
        first = self.orchestrator.service_end_device(
            _request(desired_port=8080))
        self.assertEqual(first.proxy_port, 8080)
        second = self.orchestrator.service_end_device(
            _request(request_id="r2", node_id="end:2", desired_port=8080))
        self.assertFalse(second.success)
        self.assertEqual(second.reason, raa.DESIRED_PORT_BUSY)
        self.assertReconciled()

    def testAssignProxyPort(self):
        self.assertEqual(self.orchestrator.assign_proxy_port("fog:3"), 50000)
        self.assertEqual(self.orchestrator.assign_proxy_port("fog:3", 9000),
                         9000)
        with self.assertRaises(fog_lib.DesiredPortBusy):
            self.orchestrator.assign_proxy_port("fog:3", 9000)

    def testUnregisteredSender(self):
        for node_id in ["end:99", "fog:0"]:
            with self.assertRaises(protocol.ProtocolError):
                self.orchestrator.service_end_device(
                    _request(node_id=node_id))

    def testNoServicer(self):
        before = _ledger_state(self.topo)
        response = self.orchestrator.service_end_device(
            _request(memory=64 * topology.GIB))
        self.assertEqual(response.status, protocol.FAILURE)
        self.assertEqual(response.reason, raa.NO_SERVICER)
        self.assertEqual(_ledger_state(self.topo), before)

    def testShutdownTwice(self):
        response = self.orchestrator.service_end_device(_request())
        shutdown = protocol.ShutdownRequest(service_id=response.service_id)
        self.assertEqual(
            self.orchestrator.service_shutdown_request(shutdown).response,
            protocol.OK)
        self.assertEqual(
            self.orchestrator.service_shutdown_request(shutdown).response,
            protocol.UNKNOWN_SERVICE)
        self.assertEqual(self.orchestrator.ports.holders(), {})
        self.assertReconciled()

    def testFailedShutdownCanBeRetried(self):
        response = self.orchestrator.service_end_device(_request())
        reservation = self.orchestrator.ledger.by_service_id(
            response.service_id)
        held = _ledger_state(self.topo)
        ports = self.orchestrator.ports.holders()
        fabric = self.orchestrator.backend
        fabric.inject_fault('stop_container')
        shutdown = protocol.ShutdownRequest(service_id=response.service_id)
        reply = self.orchestrator.service_shutdown_request(shutdown)
        self.assertEqual(reply.response, protocol.TEARDOWN_FAILED)
        self.assertTrue(reservation.live)
        self.assertIs(self.orchestrator.ledger.by_service_id(
            response.service_id), reservation)
        self.assertIn(response.service_id, fabric.containers("fog:0"))
        self.assertEqual(_ledger_state(self.topo), held)
        self.assertEqual(self.orchestrator.ports.holders(), ports)

        reply = self.orchestrator.service_shutdown_request(shutdown)
        self.assertEqual(reply.response, protocol.OK)
        self.assertEqual(fabric.containers("fog:0"), {})
        self.assertEqual(self.orchestrator.ports.holders(), {})
        self.assertReconciled()
        again = self.orchestrator.service_end_device(_request())
        self.assertTrue(again.success)
        self.assertEqual(again.proxy_port, response.proxy_port)

    def testShutdownRestoresLedgers(self):
        before = _ledger_state(self.topo)
        services = [self.orchestrator.service_end_device(
            _request(node_id="end:%d" % i, request_id="r%d" % i)).service_id
            for i in range(1, 9)]
        for service_id in services:
            self.orchestrator.service_shutdown_request(
                protocol.ShutdownRequest(service_id=service_id))
        self.assertEqual(_ledger_state(self.topo), before)
        self.assertEqual(self.orchestrator.backend.flow_count(), 0)

    def testResourceReport(self):
        before = _ledger_state(self.topo)
        report = protocol.ResourceReport(fog_id="fog:2",
                                         processor_utilization=0.75,
                                         memory_utilization=0.5,
                                         timestamp=10.0)
        self.orchestrator.dispatch(report)
        self.assertIs(self.topo.node("fog:2").report, report)
        self.assertEqual(_ledger_state(self.topo), before)
        with self.assertRaises(protocol.ProtocolError):
            self.orchestrator.service_fog_device(protocol.ResourceReport(
                fog_id="end:1", processor_utilization=0.1,
                memory_utilization=0.1, timestamp=0))

    def testGreeting(self):
        self.topo.add_node("fog:new")
        self.topo.add_link("fog:new", "openflow:3", 1, 9, topology.GBPS)
        self.topo.add_link("openflow:3", "fog:new", 9, 1, topology.GBPS)
        self.orchestrator.dispatch(protocol.Greeting(
            node_id="fog:new", device_type=topology.FOG_DEVICE,
            total_processing=2, total_memory=topology.GIB,
            address="10.2.0.9"))
        self.assertEqual(self.topo.node("fog:new").compute.total_processing,
                         2000)
        self.assertIn("fog:new", self.orchestrator.backend.dump()['fogs'])
        with self.assertRaises(topology.GreetingConflictError):
            self.orchestrator.dispatch(protocol.Greeting(
                node_id="fog:new", device_type=topology.END_DEVICE))

    def testUnexpectedMessage(self):
        with self.assertRaises(protocol.ProtocolError):
            self.orchestrator.dispatch(protocol.ShutdownResponse(
                service_id="svc-1", response=protocol.OK))

    def testRollbackAtEveryFault(self):
        before = _ledger_state(self.topo)
        fabric = self.orchestrator.backend
        for operation in ['create_queue', 'place_queue_on_qos',
                          'create_flow', 'start_container']:
            fabric.inject_fault(operation)
            response = self.orchestrator.service_end_device(_request())
            fabric.clear_faults()
            self.assertEqual(response.reason, raa.FABRIC_ERROR, operation)
            self.assertEqual(_ledger_state(self.topo), before, operation)
            self.assertReconciled()
        self.assertTrue(
            self.orchestrator.service_end_device(_request()).success)

    def testConcurrentRequests(self):
        responses = {}

        def worker(i):
            responses[i] = self.orchestrator.service_end_device(
                _request(node_id="end:%d" % i, request_id="r%d" % i))

        threads = [threading.Thread(target=worker, args=(i,))
                   for i in range(1, 9)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join(10.0)
        self.assertTrue(all(r.success for r in responses.values()))
        self.assertEqual(len(set(r.service_id for r in responses.values())),
                         8)
        acquires = [t for t, _, event in self.orchestrator.lock.trace
                    if event == "acquire"]
        self.assertEqual(acquires, sorted(acquires))
        self.assertReconciled()

    def testFuzzedOperationsReconcile(self):
        notes = checks.fuzz_orchestrator(self.orchestrator, 500,
                                         random.Random(0))
        self.assertEqual(notes, [], "\n".join(notes[:10]))


class TestRefresh(unittest.TestCase):

    def setUp(self):
        self.topo = simnet.testbed_topology()
        self.orchestrator = fog_lib.Orchestrator(self.topo,
                                                 config=SmallPortsConfig())
        self.response = self.orchestrator.service_end_device(_request())

    def _snapshot_without(self, node_id):
        snapshot = self.topo.to_snapshot()
        del snapshot.nodes[node_id]
        for key in list(snapshot.links):
            if node_id in key:
                del snapshot.links[key]
        return snapshot

    def testRemovedFogForcesDeallocation(self):
        changes, victims = self.orchestrator.refresh_topology(
            self._snapshot_without("fog:0"))
        self.assertEqual(changes.removed_nodes, ["fog:0"])
        self.assertEqual([r.service_id for r in victims],
                         [self.response.service_id])
        self.assertEqual(self.orchestrator.reconcile(), [])
        reply = self.orchestrator.service_shutdown_request(
            protocol.ShutdownRequest(service_id=self.response.service_id))
        self.assertEqual(reply.response, protocol.UNKNOWN_SERVICE)

    def testUnrelatedChangeKeepsReservation(self):
        changes, victims = self.orchestrator.refresh_topology(
            self._snapshot_without("fog:5"))
        self.assertEqual(victims, [])
        self.assertEqual(len(self.orchestrator.ledger), 1)
        self.assertEqual(self.orchestrator.reconcile(), [])

    def testChangedPortForcesDeallocation(self):
        snapshot = self.topo.to_snapshot()
        snapshot.links[("openflow:1", "fog:0")]['src_port'] = 42
        changes, victims = self.orchestrator.refresh_topology(snapshot)
        self.assertEqual(len(victims), 1)
        self.assertEqual(self.orchestrator.reconcile(), [])

    def testRejectedSnapshot(self):
        snapshot = self.topo.to_snapshot()
        snapshot.links[("openflow:1", "fog:0")]['total_bw'] = topology.MBPS
        with self.assertRaises(topology.SnapshotError):
            self.orchestrator.refresh_topology(snapshot)
        self.assertEqual(len(self.orchestrator.ledger), 1)

    def testFailedForcedTeardownPostponesRefresh(self):
        self.orchestrator.backend.inject_fault('stop_container')
        snapshot = self._snapshot_without("fog:0")
        with self.assertRaises(southbound.SouthboundError):
            self.orchestrator.refresh_topology(snapshot)
        self.assertIn("fog:0", self.topo.nodes)
        self.assertEqual(len(self.orchestrator.ledger.live()), 1)

        changes, victims = self.orchestrator.refresh_topology(snapshot)
        self.assertEqual([r.service_id for r in victims],
                         [self.response.service_id])
        self.assertNotIn("fog:0", self.topo.nodes)
        self.assertEqual(self.orchestrator.reconcile(), [])

    def testRefresherRetriesFailedTeardown(self):
        self.orchestrator.backend.inject_fault('stop_container')
        snapshot = self._snapshot_without("fog:0")
        refresher = fog_lib.TopologyRefresher(self.orchestrator,
                                              lambda: snapshot)
        self.assertFalse(refresher.refresh_once())
        self.assertEqual(refresher.refreshes, 0)
        self.assertTrue(refresher.refresh_once())
        self.assertNotIn("fog:0", self.topo.nodes)

    def testRefresher(self):
        snapshots = [topology.TopologySnapshot.from_dict([]),
                     self._snapshot_without("fog:5")]
        refresher = fog_lib.TopologyRefresher(self.orchestrator,
                                              lambda: snapshots.pop(0))
        self.assertFalse(refresher.refresh_once())
        self.assertTrue(refresher.refresh_once())
        self.assertEqual(refresher.refreshes, 1)
        self.assertNotIn("fog:5", self.topo.nodes)


class TestServers(unittest.TestCase):

    def setUp(self):
        self.orchestrator = fog_lib.Orchestrator(simnet.testbed_topology(),
                                                 config=SmallPortsConfig())
        greeting, service, shutdown = self.orchestrator.serve()
        self.greeting_address = greeting.server_address[:2]
        self.service_address = service.server_address[:2]
        self.shutdown_address = shutdown.server_address[:2]

    def tearDown(self):
        self.orchestrator.shutdown()

    def _exchange(self, address, message):
        sock = socket.create_connection(address, timeout=5.0)
        try:
            protocol.send_message(sock, message)
            return protocol.recv_message(sock)
        finally:
            sock.close()

    def testServiceAndShutdown(self):
        response = self._exchange(self.service_address, _request())
        self.assertTrue(response.success)
        reply = self._exchange(
            self.shutdown_address,
            protocol.ShutdownRequest(service_id=response.service_id))
        self.assertEqual(reply.response, protocol.OK)

    def testGreetingOverTheWire(self):
        topo = self.orchestrator.topology
        topo.add_node("end:42")
        sock = socket.create_connection(self.greeting_address, timeout=5.0)
        try:
            protocol.send_message(sock, protocol.Greeting(
                node_id="end:42", device_type=topology.END_DEVICE,
                address="10.1.0.42"))
        finally:
            sock.close()
        deadline = time.time() + 5.0
        while topo.nodes["end:42"].kind != topology.END_DEVICE:
            self.assertLess(time.time(), deadline, "greeting not applied")
            time.sleep(0.01)
        self.assertEqual(topo.nodes["end:42"].address, "10.1.0.42")

    def testWrongEndpointDropsConnection(self):
        sock = socket.create_connection(self.shutdown_address, timeout=5.0)
        try:
            protocol.send_message(sock, _request())
            with self.assertRaises(EOFError):
                protocol.recv_message(sock)
        finally:
            sock.close()


if __name__ == '__main__':
    unittest.main()
