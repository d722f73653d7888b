"""Scoring: retrieval hits, weighted F1, accuracy, consistency, coverage."""

import warnings

import numpy as np
import pytest

from dytag.evaluate import (
    EvalReport,
    analyze_consistency,
    config_digest,
    label_consistency,
    pareto_coverage,
    render_consistency_table,
    render_report_table,
    score_ec,
    score_lp,
    score_nr,
    weighted_prf,
)
from dytag.store import DyTagStore, chronological_split
from dytag.tasks.types import TASK_EC, TASK_LP, TASK_NR, PredictionRecord, TaskQuery


def lp_rec(i, truth, answer, fallback=False):
    q = TaskQuery(index=i, task=TASK_LP, source=1, destination=2, t=5.0, truth=truth)
    return PredictionRecord(
        query=q, mode="structure", answer=answer, fallback_used=fallback
    )


def nr_rec(i, rank, pool=(2, 3, 4)):
    q = TaskQuery(
        index=i, task=TASK_NR, source=1, destination=tuple(pool), t=5.0, truth=pool[0]
    )
    return PredictionRecord(
        query=q,
        mode="structure",
        answer={str(n): 0.5 for n in pool},
        fallback_used=False,
        positive_rank=rank,
        ranked_nodes=tuple(pool),
    )


def ec_rec(i, truth, answer):
    q = TaskQuery(index=i, task=TASK_EC, source=1, destination=2, t=5.0, truth=truth)
    return PredictionRecord(query=q, mode="structure", answer=answer, fallback_used=False)


EC_TRUTHS = [0, 0, 0, 1]
EC_ANSWERS = [0, 0, 0, 0]


def test_nr_hand_values():
    recs = [nr_rec(i, r) for i, r in enumerate([1, 2, 11, 102])]
    rep = score_nr(recs, dataset="toy")
    assert rep.metrics == {"hits@1": 0.25, "hits@3": 0.5, "hits@10": 0.5}
    assert rep.n_samples == 4


def test_hits_monotonicity_enforced():
    with pytest.raises(ValueError):
        EvalReport(
            task="nr",
            mode="structure",
            dataset="x",
            n_samples=4,
            metrics={"hits@1": 0.5, "hits@3": 0.25},
        )


def test_ec_hand_value():
    m = weighted_prf(EC_TRUTHS, EC_ANSWERS)
    expect_f1 = (3 * (6 / 7) + 1 * 0) / 4
    assert abs(m["f1"] - expect_f1) < 1e-12
    assert abs(m["f1"] - 0.643) < 1e-3
    recs = [ec_rec(i, t, a) for i, (t, a) in enumerate(zip(EC_TRUTHS, EC_ANSWERS))]
    rep = score_ec(recs, label_count=2, dataset="toy")
    assert abs(rep.metrics["f1"] - expect_f1) < 1e-12


def test_weighted_recall_equals_accuracy():
    rng = np.random.default_rng(5)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        n = int(rng.integers(1, 60))
        t = rng.integers(0, k, size=n).tolist()
        a = rng.integers(0, k, size=n).tolist()
        m = weighted_prf(t, a)
        acc = sum(x == y for x, y in zip(t, a)) / n
        assert abs(m["recall"] - acc) < 1e-12


def test_weighted_prf_matches_reference():
    sklearn_metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(6)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        n = int(rng.integers(1, 60))
        t = rng.integers(0, k, size=n).tolist()
        a = rng.integers(0, k, size=n).tolist()
        m = weighted_prf(t, a)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p, r, f, _ = sklearn_metrics.precision_recall_fscore_support(
                t, a, average="weighted", zero_division=0
            )
        assert abs(m["precision"] - p) < 1e-9
        assert abs(m["recall"] - r) < 1e-9
        assert abs(m["f1"] - f) < 1e-9


def test_lp_accuracy_and_fallback_fraction():
    recs = [
        lp_rec(0, 1, 1),
        lp_rec(1, 0, 0),
        lp_rec(2, 1, 0, fallback=True),
        lp_rec(3, 0, 0),
    ]
    rep = score_lp(recs, dataset="toy", config_digest="abc")
    assert rep.metrics["accuracy"] == 0.75
    assert rep.fallback_fraction == 0.25
    assert rep.config_digest == "abc"


def test_empty_record_list_rejected():
    with pytest.raises(ValueError):
        score_lp([])


@pytest.fixture
def repeat_store():
    return DyTagStore(
        edges=[
            (1, 2, 0.0, 0, 0),
            (2, 1, 1.0, 0, 0),
            (1, 2, 2.0, 1, 1),
            (2, 3, 3.0, 0, 0),
        ],
        node_texts={1: "a", 2: "b", 3: "c"},
        edge_texts={0: "hello", 1: "bye"},
        labels={0: "A", 1: "B"},
    )


def test_pair_consistency_hand_value(repeat_store):
    # unordered fold: {1,2} saw [A, A, B], {2,3} saw [A]
    gc = label_consistency(repeat_store, "pair", min_fraction_repeated=0.10)
    assert gc.qualifying_groups == 1
    assert abs(gc.consistency - 2 / 3) < 1e-12
    assert abs(gc.repeated_fraction - 3 / 4) < 1e-12


def test_directed_pair_variant_differs(repeat_store):
    gcd = label_consistency(
        repeat_store, "pair", directed=True, min_fraction_repeated=0.10
    )
    assert gcd.qualifying_groups == 1
    assert abs(gcd.consistency - 1 / 2) < 1e-12


def test_edge_text_consistency(repeat_store):
    gct = label_consistency(repeat_store, "edge-text", min_fraction_repeated=0.10)
    assert gct.consistency == 1.0 and gct.qualifying_groups == 1


def test_modal_tie_goes_to_earliest():
    store = DyTagStore(
        edges=[
            (1, 2, 0.0, 1, None),
            (1, 2, 1.0, 0, None),
            (1, 2, 2.0, 0, None),
            (1, 2, 3.0, 1, None),
        ],
        node_texts={1: "a", 2: "b"},
        edge_texts={},
        labels={0: "A", 1: "B"},
    )
    gt = label_consistency(store, "pair")
    assert abs(gt.consistency - 0.5) < 1e-12


def test_sparse_repetition_withholds_value():
    store = DyTagStore(
        edges=[(1, 2, 0.0, 0, None), (2, 3, 1.0, 0, None), (3, 4, 2.0, 0, None)],
        node_texts={1: "a", 2: "b", 3: "c", 4: "d"},
        edge_texts={},
        labels={0: "A"},
    )
    gs = label_consistency(store, "pair")
    assert gs.consistency is None and gs.repeated_fraction == 0.0


def test_combined_consistency_report(repeat_store):
    creport = analyze_consistency(repeat_store)
    gc = label_consistency(repeat_store, "pair", min_fraction_repeated=0.10)
    assert creport.pair_consistency == gc.consistency
    assert creport.text_consistency == 1.0
    assert creport.to_json()["pair"]["grouping"] == "pair"
    table = render_consistency_table({"toy": creport})
    assert "toy" in table


def test_pareto_hub_coverage():
    src = np.array([1, 1, 1, 1, 2, 1, 1, 1, 1, 3], dtype=np.int64)
    dst = np.array([2, 3, 4, 5, 3, 6, 7, 8, 9, 4], dtype=np.int64)
    store = DyTagStore(
        edges=[
            (int(s), int(d), float(t), 0, None)
            for t, (s, d) in enumerate(zip(src, dst))
        ],
        node_texts={n: f"n{n}" for n in range(1, 10)},
        edge_texts={},
        labels={0: "A"},
    )
    split = chronological_split(store)
    rep = pareto_coverage(split, fraction=0.12)
    assert rep.selected_nodes >= 1
    ids = np.unique(np.concatenate([src[: split.valid_end], dst[: split.valid_end]]))
    rep_one = pareto_coverage(split, fraction=1.0 / len(ids))
    assert rep_one.selected_nodes == 1
    # node 1 touches 8 of the 10 edges
    assert abs(rep_one.coverage_all - 0.8) < 1e-12


def test_report_save_load_byte_identity(tmp_path):
    digest = config_digest("toy", "nr", "structure", 7, 10240, 256, 0.0, "mock")
    rep = score_nr(
        [nr_rec(i, r) for i, r in enumerate([1, 2, 11, 102])],
        dataset="toy",
        config_digest=digest,
    )
    p = tmp_path / "report.json"
    rep.save(p)
    first = p.read_bytes()
    rep2 = EvalReport.load(p)
    assert rep2 == rep
    rep2.save(p)
    assert p.read_bytes() == first


def test_schema_version_checked():
    with pytest.raises(ValueError):
        EvalReport.from_json({"schema_version": 99})


def test_report_table_renders_all_tasks():
    reports = [
        score_lp([lp_rec(0, 1, 1), lp_rec(1, 0, 0)], dataset="toy"),
        score_nr([nr_rec(i, r) for i, r in enumerate([1, 2, 11, 102])], dataset="toy"),
        score_ec(
            [ec_rec(i, t, a) for i, (t, a) in enumerate(zip(EC_TRUTHS, EC_ANSWERS))],
            label_count=2,
            dataset="toy",
        ),
    ]
    table = render_report_table(reports)
    for needle in ("lp", "nr", "ec", "accuracy", "hits@1", "f1"):
        assert needle in table
