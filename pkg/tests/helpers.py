"""Shared test utilities: brute-force oracle comparison for metric engines."""

from dytag.metrics import batch_evidence
from dytag.metrics.oracle import scan_evidence


def edge_tuples(store):
    return list(zip(store.src.tolist(), store.dst.tolist(), store.ts.tolist(), store.label.tolist()))


def assert_matches_oracle(store, queries, force_python=False):
    """Compare every metric from the batch engine against a full-scan oracle."""
    edges = edge_tuples(store)
    got = batch_evidence(store, queries, force_python=force_python)
    for (u, v, t), ev in zip(queries, got):
        want = scan_evidence(edges, u, v, t)
        assert ev.hi == want["hi"], (u, v, t, ev.hi, want["hi"])
        assert ev.cn == want["cn"], (u, v, t, ev.cn, want["cn"])
        for got_act, want_act in (
            (ev.src_activity, want["src_activity"]),
            (ev.dst_activity, want["dst_activity"]),
        ):
            assert got_act.frequency == want_act[0], (u, v, t)
            assert got_act.as_source == want_act[1], (u, v, t)
            assert got_act.as_destination == want_act[2], (u, v, t)
            assert abs(got_act.avg_neighbor_frequency - want_act[3]) < 1e-9, (u, v, t)
        assert dict(ev.eld_src.counts) == want["eld_src"], (u, v, t)
        assert dict(ev.eld_dst.counts) == want["eld_dst"], (u, v, t)
        assert dict(ev.eld_pair.counts) == want["eld_pair"], (u, v, t)
    return got
