import json
import os
import shutil
import unittest
import tempfile

import lib.dumpers as dumpers
import lib.raa as raa
import lib.simnet as simnet
import lib.southbound as southbound
import lib.topology as topology


class TestDumpers(unittest.TestCase):

    def setUp(self):
        self.snapshot = topology.TopologySnapshot.create_from_file(
            'testfiles/diamond.json')
        self.tmp_output_dir = tempfile.mkdtemp()

    def tearDown(self):
        # Best-effort removal of temporary output files
        shutil.rmtree(self.tmp_output_dir, ignore_errors=True)

    def assertFileNotEmpty(self, filename):
        self.assertTrue(os.path.isfile(filename))
        self.assertGreater(os.path.getsize(filename), 0)

    def _lines(self, filename):
        with open(filename) as f:
            return f.read().splitlines()

    def testMetricsCsv(self):
        metrics = simnet.MetricSet()
        metrics.add(2.5, "fulfillment", 0.125)
        metrics.add(1.0, "throughput:end:1", 100000000)
        tmp_csv = os.path.join(self.tmp_output_dir, 'metrics.csv')
        dumpers.dump_metrics_to_csv(metrics, tmp_csv)
        self.assertEqual(self._lines(tmp_csv), [
            "time,series,value",
            "1.0,throughput:end:1,100000000",
            "2.5,fulfillment,0.125",
        ])

    def testSweepCsv(self):
        points = [simnet.SweepPoint("b(25,12,6)f5", "raa_time", 0.5, 0.25,
                                    0.75, 20)]
        tmp_csv = os.path.join(self.tmp_output_dir, 'sweep.csv')
        dumpers.dump_sweep_to_csv(points, tmp_csv)
        self.assertEqual(self._lines(tmp_csv), [
            "config,metric,median,q1,q3,count",
            '"b(25,12,6)f5",raa_time,0.5,0.25,0.75,20',
        ])

    def testDelayReportsCsv(self):
        report = simnet.simulate_request(
            simnet.line_topology(2),
            raa.ResourceRequest("end:0", topology.MBPS, 100, topology.MIB),
            config=simnet.FixedRaaTime())
        tmp_csv = os.path.join(self.tmp_output_dir, 'delays.csv')
        dumpers.dump_delay_reports_to_csv([report], tmp_csv)
        lines = self._lines(tmp_csv)
        self.assertEqual(len(lines), 2)
        self.assertTrue(lines[0].startswith("request_id,status,fog,hops,"
                                            "send_request"))
        self.assertTrue(lines[1].startswith('"sim",Success,fog:0,'), lines[1])

    def testTopologyJsonReloads(self):
        tmp_json = os.path.join(self.tmp_output_dir, 'topology.json')
        dumpers.dump_topology_to_json(self.snapshot, tmp_json)
        again = topology.TopologySnapshot.create_from_file(tmp_json)
        self.assertTrue(again.valid, again.notes)
        self.assertEqual(again, self.snapshot)

    def testFabricJson(self):
        topo = topology.Topology.from_snapshot(self.snapshot)
        fabric = southbound.SimulatedFabric.from_topology(topo)
        tmp_json = os.path.join(self.tmp_output_dir, 'fabric.json')
        dumpers.dump_fabric_to_json(fabric, tmp_json)
        self.assertFileNotEmpty(tmp_json)
        with open(tmp_json) as f:
            self.assertEqual(sorted(json.load(f)), ['fogs', 'switches'])

    def testSummaryJson(self):
        tmp_json = os.path.join(self.tmp_output_dir, 'summary.json')
        dumpers.dump_summary_to_json({'successes': 8, 'failures': {}},
                                     tmp_json)
        with open(tmp_json) as f:
            self.assertEqual(json.load(f), {'successes': 8, 'failures': {}})
