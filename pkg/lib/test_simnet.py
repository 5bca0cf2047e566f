import unittest

import numpy as np

import lib.raa as raa
import lib.simnet as simnet
import lib.southbound as southbound
import lib.topology as topology


def _request(device="end:0", bw=10 * topology.MBPS):
    return raa.ResourceRequest(device, bw, 500, 256 * topology.MIB)


class TestGenerators(unittest.TestCase):

    def testTreeCounts(self):
        gen = simnet.TopologyGen(simnet.TREE, (25, 12, 6), 5)
        topo = simnet.generate_topology(gen)
        self.assertEqual(len(topo.switches()), 43)
        self.assertEqual(len(topo.fog_devices()), 30)
        self.assertEqual(topo.controllers(), ["controller"])
        # 25 + 12 uplinks, 5 chain links, 30 fogs and the controller.
        self.assertEqual(topo.link_count, 2 * (25 + 12 + 5 + 30 + 1))

    def testLeafSpineCounts(self):
        topo = simnet.generate_topology(
            simnet.TopologyGen(simnet.LEAF_SPINE, (3, 3), 2, end_devices=4))
        self.assertEqual(len(topo.switches()), 6)
        self.assertEqual(len(topo.fog_devices()), 6)
        self.assertEqual(len(topo.end_devices()), 4)
        self.assertEqual(topo.link_count, 2 * (3 + 2 + 6 + 1 + 4))

    def testLeafSpineFanOut(self):
        snapshot = simnet.generate_snapshot(
            simnet.TopologyGen(simnet.LEAF_SPINE, (25, 12), 1))
        uplinks = [key for key in snapshot.links
                   if key[0] == "openflow:1" and key[1].startswith("openflow")]
        self.assertEqual(len(uplinks), 4)

    def testGeneratorIsDeterministic(self):
        gen = simnet.TopologyGen.parse("b:5,3,2:2:6")
        self.assertEqual(simnet.generate_snapshot(gen),
                         simnet.generate_snapshot(gen))

    def testParse(self):
        gen = simnet.TopologyGen.parse("b:25,12,6:5:20")
        self.assertEqual(gen.levels, (25, 12, 6))
        self.assertEqual(gen.end_devices, 20)
        self.assertEqual(gen.label(), "b(25,12,6)f5")
        for text in ["b:25,12:5", "c:1,1:1", "a:1,x:1", "a", "a:0,1:1"]:
            with self.assertRaises(simnet.SimulationError):
                simnet.TopologyGen.parse(text)

    def testTestbed(self):
        topo = simnet.testbed_topology()
        self.assertEqual(topo.end_devices(),
                         ["end:%d" % i for i in range(1, 9)])
        self.assertEqual(len(topo.fog_devices()), 6)
        self.assertTrue(topo.has_link("controller", "openflow:2"))
        self.assertEqual(topo.link("openflow:1", "openflow:2").total_bw,
                         10 * topology.GBPS)

    def testLineTopology(self):
        topo = simnet.line_topology(3, control_stretch=2)
        plane = simnet.ControlPlane(topo)
        for target in ["end:0", "openflow:1", "openflow:3", "fog:0"]:
            self.assertEqual(plane.hops(target), 2)
        plan = raa.allocate(topo, _request())
        self.assertEqual(plan.switches,
                         ["openflow:1", "openflow:2", "openflow:3"])


class TestControlPlane(unittest.TestCase):

    def setUp(self):
        self.plane = simnet.ControlPlane(simnet.testbed_topology())

    def testPath(self):
        self.assertEqual(self.plane.path("end:1"),
                         ["controller", "openflow:2", "openflow:1", "end:1"])

    def testSerialization(self):
        load = simnet.Load(0, 10 * topology.MBPS)
        self.assertAlmostEqual(self.plane.message_delay("end:4", 1250, load),
                               2 * 1250 * 8 / 1e7)

    def testMonotonicInDataLoad(self):
        delays = [self.plane.message_delay(
            "end:1", 256, simnet.Load(x * topology.MBPS, 10 * topology.MBPS))
            for x in (0, 100, 500, 900)]
        self.assertEqual(delays, sorted(delays))
        self.assertLess(delays[0], delays[-1])

    def testMonotonicInControlBandwidth(self):
        delays = [self.plane.message_delay(
            "end:1", 256, simnet.Load(0, y * topology.MBPS))
            for y in (1, 10, 50, 100)]
        self.assertEqual(delays, sorted(delays, reverse=True))

    def testSaturation(self):
        with self.assertRaises(simnet.SimulationError):
            self.plane.message_delay("end:1", 256,
                                     simnet.Load(topology.GBPS, topology.MBPS))
        with self.assertRaises(simnet.SimulationError):
            self.plane.message_delay("end:1", 256, simnet.Load(0, 0))

    def testNoController(self):
        topo = topology.Topology()
        topo.add_node("end:0", topology.END_DEVICE)
        with self.assertRaises(simnet.SimulationError):
            simnet.ControlPlane(topo)


class TestSimulateRequest(unittest.TestCase):

    def setUp(self):
        self.config = simnet.FixedRaaTime()

    def testHopDoubling(self):
        for hops in (1, 2, 4):
            short = simnet.simulate_request(
                simnet.line_topology(hops, 1), _request(), config=self.config)
            long = simnet.simulate_request(
                simnet.line_topology(hops, 2), _request(), config=self.config)
            ratio = long.config_comm / short.config_comm
            self.assertAlmostEqual(ratio, 2.0, delta=0.1)
            self.assertAlmostEqual(
                (long.total - long.raa_exec) / (short.total - short.raa_exec),
                2.0, delta=0.1)

    def testConfigBytes(self):
        for hops in (1, 3):
            report = simnet.simulate_request(simnet.line_topology(hops),
                                             _request(), config=self.config)
            self.assertEqual(report.status, "Success")
            self.assertEqual(report.hops, hops + 1)
            # Per switch: two queues (the second one syncs one existing
            # queue) and two flows; then one container start.
            self.assertEqual(report.up_bytes, hops * (3 * 55 + 2 * 150) + 2000)
            self.assertEqual(report.down_bytes,
                             hops * (3 * 1000 + 2 * 100) + 500)

    def testQueueBytesPerSwitch(self):
        hops = 3
        topo = simnet.line_topology(hops)
        fabric = southbound.SimulatedFabric.from_topology(topo)
        southbound.install_port_qos(fabric, topo)
        plan = raa.allocate(topo, _request())
        southbound.apply_plan(fabric, plan, "img")
        self.assertEqual(fabric.bytes_exchanged('create_queue'),
                         (2 * hops * 55, 2 * hops * 1000))

    def testExistingQueuesSlowConfiguration(self):
        topo = simnet.line_topology(2)
        fabric = southbound.SimulatedFabric.from_topology(topo)
        southbound.install_port_qos(fabric, topo)
        plan = raa.allocate(topo, _request())
        southbound.apply_plan(fabric, plan, "img")
        idle = simnet.simulate_request(simnet.line_topology(2), _request(),
                                       config=self.config)
        busy = simnet.simulate_request(topo, _request(), fabric=fabric,
                                       config=self.config)
        self.assertGreater(busy.up_bytes, idle.up_bytes)
        self.assertGreater(busy.config_comm, idle.config_comm)
        # Inputs are untouched.
        self.assertEqual(fabric.flow_count(), 4)
        self.assertEqual(len(raa.find_request_servicers(topo, _request())), 1)

    def testMeasuredAllocationTime(self):
        report = simnet.simulate_request(simnet.line_topology(2), _request())
        self.assertGreater(report.raa_exec, 0)
        self.assertNotEqual(report.raa_exec, simnet.SimConfig.raa_fixed_time)

    def testFailure(self):
        report = simnet.simulate_request(
            simnet.line_topology(2), _request(bw=2 * topology.GBPS),
            config=self.config)
        self.assertEqual(report.status, raa.NO_PATH)
        self.assertEqual(report.config_comm, 0)
        self.assertGreater(report.reply, 0)

    def testDeterministic(self):
        topo = simnet.generate_topology(simnet.TopologyGen.parse("a:4,3:2:4"))
        first = simnet.simulate_request(topo, _request("end:3"),
                                        config=self.config)
        second = simnet.simulate_request(topo, _request("end:3"),
                                         config=self.config)
        self.assertEqual(first, second)


class TestScenario(unittest.TestCase):

    def testBadScenarioFile(self):
        scenario = simnet.Scenario.create_from_file('testfiles/bad_scenario.json')
        self.assertFalse(scenario.valid)
        self.assertEqual(len(scenario.notes), 3)
        with self.assertRaises(simnet.SimulationError):
            simnet.run_scenario(simnet.testbed_topology(), scenario)

    def testMissingFile(self):
        scenario = simnet.Scenario.create_from_file('testfiles/nothing.json')
        self.assertFalse(scenario.valid)

    def testUnknownNode(self):
        scenario = simnet.Scenario([simnet.ScenarioEvent(0, "fog:0",
                                                         'request')])
        self.assertEqual(len(scenario.check(simnet.testbed_topology())), 1)
        with self.assertRaises(simnet.SimulationError):
            simnet.run_scenario(simnet.testbed_topology(), scenario)

    def testDictRoundTrip(self):
        scenario = simnet.scenario_stream_with_storms(
            ["end:1"], ["end:2"], 100 * topology.MBPS)
        again = simnet.Scenario.from_dict(scenario.to_dict())
        self.assertTrue(again.valid)
        self.assertEqual(again.to_dict(), scenario.to_dict())

    def testStreamAlias(self):
        scenario = simnet.Scenario.from_dict({'events': [
            {'at': 0, 'node': "end:1", 'action': "stream",
             'rate': 100 * topology.MBPS, 'duration': 5}]})
        self.assertTrue(scenario.valid, scenario.notes)
        self.assertEqual(scenario.events[0].action, 'stream_app')
        metrics = simnet.run_scenario(simnet.testbed_topology(), scenario)
        self.assertEqual(len(metrics.series("throughput:end:1")), 5)
        self.assertEqual(metrics.summary['reconciliation'], [])

    def testBadParameterValues(self):
        scenario = simnet.Scenario.create_from_file(
            'testfiles/bad_values_scenario.json')
        self.assertFalse(scenario.valid)
        self.assertEqual(len(scenario.notes), 4)
        for i, note in zip([0, 1, 2, 3], scenario.notes):
            self.assertTrue(note.startswith("Error: event %d: " % i), note)
        self.assertIn("cpu", scenario.notes[0])
        self.assertIn("bw", scenario.notes[1])
        self.assertIn("sleep", scenario.notes[2])
        self.assertIn("duration", scenario.notes[2])
        self.assertIn("rate", scenario.notes[3])
        self.assertEqual(len(scenario.events), 1)
        with self.assertRaises(simnet.SimulationError):
            simnet.ScenarioEvent(0, "end:1", 'request', cpu=0)

    def testSleepAppBuilder(self):
        scenario = simnet.scenario_sleep_apps(["end:1", "end:2"], sleep=3.0,
                                              runs=2)
        self.assertEqual([e.at for e in scenario.events],
                         [0.0, 5.0, 10.0, 15.0])
        concurrent = simnet.scenario_sleep_apps(["end:1", "end:2"],
                                                concurrent=True)
        self.assertEqual([e.at for e in concurrent.events], [0.0, 0.0])


class TestRunScenario(unittest.TestCase):

    def assertControllerSerialized(self, trace):
        kinds = [e.kind for e in trace
                 if e.kind in (simnet.RAA_START, simnet.RAA_END,
                               simnet.CONFIG_APPLIED)]
        cycle = [simnet.RAA_START, simnet.RAA_END, simnet.CONFIG_APPLIED]
        self.assertEqual(kinds, cycle * (len(kinds) // 3))

    def testSequentialSleepApps(self):
        scenario = simnet.Scenario.create_from_file(
            'testfiles/sleep_sequential.json')
        self.assertTrue(scenario.valid, scenario.notes)
        metrics = simnet.run_scenario(simnet.testbed_topology(), scenario)
        summary = metrics.summary
        self.assertEqual(summary['requests'], 8)
        self.assertEqual(summary['successes'], 8)
        self.assertEqual(summary['failures'], {})
        self.assertEqual(summary['live_reservations'], 0)
        self.assertEqual(summary['reconciliation'], [])
        self.assertEqual(len(metrics.series("fulfillment")), 8)
        self.assertEqual(len(metrics.series("shutdown")), 8)
        self.assertEqual(summary['trace_events'], 80)
        self.assertControllerSerialized(metrics.trace)

    def testConcurrentRequestsAreFifo(self):
        devices = ["end:%d" % i for i in range(1, 9)]
        scenario = simnet.scenario_sleep_apps(devices, concurrent=True)
        metrics = simnet.run_scenario(simnet.testbed_topology(), scenario)
        self.assertEqual(metrics.summary['successes'], 8)
        arrivals = [e.payload['request'] for e in metrics.trace
                    if e.kind == simnet.MSG_ARRIVAL and 'request' in e.payload]
        starts = [e.payload['request'] for e in metrics.trace
                  if e.kind == simnet.RAA_START and 'request' in e.payload]
        self.assertEqual(starts, arrivals)
        self.assertControllerSerialized(metrics.trace)
        # Later requests waited for the earlier ones.
        fulfillment = metrics.series("fulfillment")
        self.assertGreater(max(fulfillment), min(fulfillment))

    def testInfeasibleRequest(self):
        scenario = simnet.Scenario.create_from_file('testfiles/infeasible.json')
        metrics = simnet.run_scenario(simnet.testbed_topology(), scenario)
        self.assertEqual(metrics.summary['failures'], {raa.NO_SERVICER: 1})
        self.assertEqual(metrics.summary['successes'], 1)
        self.assertEqual(metrics.series("failure:%s" % raa.NO_SERVICER), [1])

    def testBandwidthIsGuaranteedDuringStorms(self):
        rates = {"end:1": 100, "end:4": 200, "end:6": 300}
        scenario = simnet.scenario_stream_with_storms(
            [], ["end:2", "end:3", "end:5", "end:7", "end:8"], 0,
            storm_repeat=3)
        for device, rate in sorted(rates.items()):
            scenario.events.append(simnet.ScenarioEvent(
                0.0, device, 'stream_app', rate=rate * topology.MBPS,
                duration=90.0, image="stream-app"))
        metrics = simnet.run_scenario(simnet.testbed_topology(), scenario)
        self.assertEqual(metrics.summary['reconciliation'], [])
        for device, rate in rates.items():
            samples = metrics.timed_series("throughput:%s" % device)
            self.assertEqual(len(samples), 90)
            allocation = rate * topology.MBPS
            self.assertTrue(all(v <= allocation for _, v in samples))
            storm = [v for at, v in samples
                     if 30 <= at < 40 or 60 <= at < 70]
            quiet = [v for at, v in samples
                     if not (30 <= at < 40 or 60 <= at < 70)]
            self.assertEqual(np.median(storm) - np.median(quiet), 0)

    def testRunsAreReproducible(self):
        scenario = simnet.scenario_sleep_apps(["end:1", "end:4", "end:8"],
                                              concurrent=True, runs=3)
        first = simnet.run_scenario(simnet.testbed_topology(), scenario)
        second = simnet.run_scenario(simnet.testbed_topology(), scenario)
        self.assertEqual(first.rows(), second.rows())

    def _raa_spans(self, config):
        scenario = simnet.Scenario([simnet.ScenarioEvent(0, "end:1",
                                                         'request')])
        metrics = simnet.run_scenario(simnet.testbed_topology(), scenario,
                                      config=config)
        starts = [e.time for e in metrics.trace if e.kind == simnet.RAA_START]
        ends = [e.time for e in metrics.trace if e.kind == simnet.RAA_END]
        self.assertEqual(len(starts), 1)
        return ends[0] - starts[0]

    def testAllocationTimeIsMeasuredWhenAsked(self):
        class Measured(simnet.SimConfig):
            raa_fixed_time = 100.0

        class Fixed(simnet.FixedRaaTime):
            raa_fixed_time = 100.0

        self.assertAlmostEqual(self._raa_spans(Fixed()), 100.0)
        measured = self._raa_spans(Measured())
        self.assertGreater(measured, 0)
        self.assertLess(measured, 100.0)

    def testShutdownWithoutService(self):
        scenario = simnet.Scenario([simnet.ScenarioEvent(0, "end:1",
                                                         'shutdown')])
        metrics = simnet.run_scenario(simnet.testbed_topology(), scenario)
        self.assertEqual(metrics.summary['requests'], 0)
        self.assertEqual(metrics.trace, [])


class TestMetricSet(unittest.TestCase):

    def testQuantilesAndEcdf(self):
        metrics = simnet.MetricSet()
        for i, value in enumerate([4.0, 1.0, 3.0, 2.0]):
            metrics.add(float(i), "x", value)
        metrics.add(0.0, "y", 1.0)
        self.assertEqual(metrics.names(), ["x", "y"])
        self.assertEqual(metrics.quantiles("x", (0, 50, 100)),
                         [1.0, 2.5, 4.0])
        values, fractions = metrics.ecdf("x")
        self.assertEqual(list(values), [1.0, 2.0, 3.0, 4.0])
        self.assertEqual(list(fractions), [0.25, 0.5, 0.75, 1.0])
        self.assertEqual(metrics.rows()[0], (0.0, "x", 4.0))

    def testEmptySeries(self):
        metrics = simnet.MetricSet()
        self.assertTrue(np.isnan(metrics.quantiles("x")[0]))
        self.assertEqual(len(metrics.ecdf("x")[0]), 0)


class TestSweeps(unittest.TestCase):

    def testSummarize(self):
        self.assertEqual(simnet.summarize([1, 2, 3, 4, 5]), (3.0, 2.0, 4.0))
        self.assertTrue(np.isnan(simnet.summarize([])[0]))

    def testRaaTimeSweep(self):
        gen = simnet.TopologyGen.parse("b:4,2,1:3:6")
        point = simnet.sweep_raa_time(gen, repeats=2, samples=3)
        self.assertEqual(point.config, "b(4,2,1)f3")
        self.assertEqual(point.metric, "raa_time")
        self.assertEqual(point.count, 6)
        self.assertTrue(0 < point.q1 <= point.median <= point.q3)

    def testRaaTimeSweepNeedsEndDevices(self):
        with self.assertRaises(simnet.SimulationError):
            simnet.sweep_raa_time(simnet.TopologyGen.parse("b:4,2,1:3"))

    def _raa_median(self, spec):
        gen = simnet.TopologyGen.parse(spec)
        return simnet.sweep_raa_time(gen, repeats=3, samples=20).median

    def testRaaTimeGrowsWithFogsPerSwitch(self):
        medians = [self._raa_median("a:25,12:%d:20" % fogs)
                   for fogs in (1, 10, 40)]
        self.assertLess(medians[0], medians[1])
        self.assertLess(medians[1], medians[2])

    def testTreeAllocatesNoSlowerThanLeafSpine(self):
        for fogs in (10, 20):
            tree = self._raa_median("b:25,12,6:%d:20" % fogs)
            leaf_spine = self._raa_median("a:25,12:%d:20" % fogs)
            self.assertLessEqual(tree, leaf_spine, fogs)

    def testAllocDelaySweep(self):
        gen = simnet.TopologyGen.parse("b:4,2,1:3:8")
        points = simnet.sweep_alloc_delay(
            gen, simnet.Load(0, 10 * topology.MBPS))
        self.assertEqual(sum(p.count for p in points), 8)
        self.assertTrue(all(p.metric == "alloc_delay" for p in points))
        loaded = simnet.sweep_alloc_delay(
            gen, simnet.Load(500 * topology.MBPS, 10 * topology.MBPS))
        for idle, busy in zip(points, loaded):
            self.assertGreater(busy.median, idle.median)


if __name__ == '__main__':
    unittest.main()
