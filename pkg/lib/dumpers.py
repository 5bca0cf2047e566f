import json

from pathlib2 import Path


def _format_value(value):
    if isinstance(value, float):
        return repr(value)
    return u"%s" % (value,)


def dump_metrics_to_csv(metrics, csv_filename_local):
    """Dumps the samples of a run to CSV, one row per sample.

    Args:
        metrics: a simnet.MetricSet
        csv_filename_local: a string, the name of the output CSV file
    """
    csv_filename = Path(csv_filename_local).expanduser().absolute()
    with csv_filename.open('wt') as csv:
        csv.write(u"time,series,value\n")
        for at, series, value in metrics.rows():
            csv.write(u"%s,%s,%s\n" % (
                _format_value(at), series, _format_value(value)))


def dump_sweep_to_csv(points, csv_filename_local):
    """Dumps sweep results, one row per (config, metric).

    Args:
        points: a list of simnet.SweepPoint
        csv_filename_local: a string, the name of the output CSV file
    """
    csv_filename = Path(csv_filename_local).expanduser().absolute()
    with csv_filename.open('wt') as csv:
        csv.write(u"config,metric,median,q1,q3,count\n")
        for point in points:
            csv.write(u'"%s",%s,%s,%s,%s,%d\n' % (
                point.config, point.metric, _format_value(point.median),
                _format_value(point.q1), _format_value(point.q3),
                point.count))


def dump_delay_reports_to_csv(reports, csv_filename_local):
    """Dumps simnet.DelayReport objects with their five components."""
    csv_filename = Path(csv_filename_local).expanduser().absolute()
    columns = ('request_id', 'status', 'fog', 'hops') + \
        tuple(reports[0].COMPONENTS if reports else ()) + \
        ('total', 'up_bytes', 'down_bytes')
    with csv_filename.open('wt') as csv:
        csv.write(u",".join(columns) + u"\n")
        for report in reports:
            row = report.as_dict()
            cells = [_format_value(row[c]) for c in columns]
            cells[0] = u'"%s"' % row['request_id']
            csv.write(u",".join(cells))
            csv.write(u"\n")


def _dump_json(obj, json_filename_local):
    json_filename = Path(json_filename_local).expanduser().absolute()
    with json_filename.open('wt') as out:
        out.write(u"%s\n" % json.dumps(obj, indent=2, sort_keys=True))


def dump_summary_to_json(summary, json_filename_local):
    """Dumps a run summary (a JSON-ready dict)."""
    _dump_json(summary, json_filename_local)


def dump_topology_to_json(snapshot, json_filename_local):
    """Dumps a topology.TopologySnapshot in the topology file format."""
    assert snapshot.valid
    _dump_json(snapshot.to_dict(), json_filename_local)


def dump_fabric_to_json(fabric, json_filename_local):
    """Dumps the full state of a southbound.SimulatedFabric."""
    _dump_json(fabric.dump(), json_filename_local)
