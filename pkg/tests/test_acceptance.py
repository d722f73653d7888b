"""Release gate: ten binding criteria, one test per criterion.

`pytest -v tests/test_acceptance.py` prints exactly one PASSED, FAILED,
or SKIPPED line per criterion. Tolerances are pinned in the assertions;
criterion 7 is gated on the large reference datasets being present and
skips with a notice otherwise. The suite orders this file last so the
prompt-hygiene sweep (criterion 9) sees every transcript the other test
modules produced.
"""

import json
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from dytag import fixtures, rendering
from dytag.config import validate_payload
from dytag.evaluate import (
    EvalReport,
    analyze_consistency,
    pareto_coverage,
    score_ec,
    score_nr,
    weighted_prf,
)
from dytag.knowledge.types import Clause, ThresholdRule
from dytag.metrics import batch_evidence
from dytag.pipeline import run_pipeline
from dytag.recall import (
    DEFAULT_RULE,
    CandidateSet,
    apply_thresholds,
    rank_candidates,
    ranking_key,
)
from dytag.statsprep import (
    BUCKET_KEYS,
    bucket_distribution,
    eld_preference,
    metric_distribution,
    prepare_knowledge_inputs,
)
from dytag.store import chronological_split, export_dataset, import_dtgb, load_store
from dytag.tasks.types import TASK_EC, TASK_NR, PredictionRecord, TaskQuery

from helpers import assert_matches_oracle

REPO = Path(__file__).resolve().parents[1]
REPLAY_FIXTURE = Path(__file__).resolve().parent / "fixtures" / "replay"


def _fake_evidence(hi=0, cn=0, dnf=0, pair_counts=None):
    from dytag.metrics import EdgeLabelDistribution, NodeActivity, PairEvidence

    act = NodeActivity(0, dnf, 0, dnf, 0.0)
    eld = EdgeLabelDistribution("pair", dict(pair_counts or {}))
    return PairEvidence(
        src=0, dst=1, t=0.0, hi=hi, cn=cn, src_activity=act, dst_activity=act,
        eld_src=eld, eld_dst=eld, eld_pair=eld,
    )


# --- criterion 1 ----------------------------------------------------------


def test_criterion_01_metric_oracle_equivalence():
    """1,000 seeded random graphs, 50 queries each, exact oracle match."""
    start = time.perf_counter()
    rng = np.random.default_rng(20260818)
    graphs = 0
    for _ in range(1000):
        n_nodes = int(rng.integers(2, 41))  # at most 40 nodes
        n_edges = int(rng.integers(5, 201))  # at most 200 edges
        n_labels = int(rng.integers(1, 7))  # at most 6 labels
        store = fixtures.random_store(
            int(rng.integers(0, 2**31)),
            n_nodes=n_nodes,
            n_edges=n_edges,
            n_labels=n_labels,
        )
        tmax = float(store.ts[-1]) + 2.0
        queries = [
            (
                int(rng.integers(0, n_nodes)),
                int(rng.integers(0, n_nodes)),
                float(rng.uniform(0.0, tmax)),
            )
            for _ in range(50)
        ]
        queries.sort(key=lambda q: q[2])
        assert_matches_oracle(store, queries)
        graphs += 1
    elapsed = time.perf_counter() - start
    assert graphs == 1000
    assert elapsed < 60.0, f"oracle sweep took {elapsed:.1f}s"


# --- criterion 2 ----------------------------------------------------------


def test_criterion_02_distribution_dictionaries():
    """Hand values exact; bucket keys fixed; percentage sums within 1e-6."""
    assert BUCKET_KEYS == ("=0", ">0", ">1", ">2", ">3", ">4", ">5")

    pos = bucket_distribution([2, 4, 0, 6])
    assert set(pos.buckets) == set(BUCKET_KEYS)
    assert pos.buckets == {
        "=0": 0.25, ">0": 0.75, ">1": 0.75, ">2": 0.5,
        ">3": 0.5, ">4": 0.25, ">5": 0.25,
    }
    neg = bucket_distribution([0, 0, 1, 0])
    assert neg.buckets == {
        "=0": 0.75, ">0": 0.25, ">1": 0.0, ">2": 0.0,
        ">3": 0.0, ">4": 0.0, ">5": 0.0,
    }

    samples = [
        (_fake_evidence(hi=2), "positive"),
        (_fake_evidence(hi=4), "positive"),
        (_fake_evidence(hi=0), "positive"),
        (_fake_evidence(hi=6), "positive"),
        (_fake_evidence(hi=0), "negative"),
        (_fake_evidence(hi=1), "negative"),
    ]
    dist_pos, dist_neg = metric_distribution(samples, "HI")
    assert dist_pos.buckets[">5"] == 0.25 and dist_pos.sample_count == 4
    assert dist_neg.buckets["=0"] == 0.5 and dist_neg.sample_count == 2

    pref = eld_preference(
        [
            (_fake_evidence(pair_counts={0: 3, 1: 1}), 0),
            (_fake_evidence(pair_counts={0: 2, 1: 2}), 1),
            (_fake_evidence(pair_counts={2: 5}), 3),
        ],
        "pair",
    )
    assert pref.top1 == pytest.approx(100 / 3)
    assert pref.top2 == pytest.approx(100 / 3)
    assert pref.top3 == 0.0
    assert pref.others == pytest.approx(100 / 3)

    rng = np.random.default_rng(2)
    for _ in range(50):
        values = rng.integers(0, 9, size=int(rng.integers(1, 40))).tolist()
        dist = bucket_distribution(values)
        assert set(dist.buckets) == set(BUCKET_KEYS)
        assert abs(dist.buckets["=0"] + dist.buckets[">0"] - 1.0) < 1e-6

    payload = prepare_knowledge_inputs(
        chronological_split(fixtures.clustered_store(11)), seed=7
    )
    for scope in ("source", "destination", "pair"):
        pct = payload["preferences"][scope]
        if pct["counted_samples"] == 0:
            continue
        total = pct["top1"] + pct["top2"] + pct["top3"] + pct["others"]
        assert abs(total - 100.0) < 1e-6
    for metric in ("HI", "CN", "DNF"):
        for polarity in ("positive", "negative"):
            buckets = payload["distributions"][metric][polarity]["buckets"]
            assert set(buckets) == set(BUCKET_KEYS)
            assert abs(buckets["=0"] + buckets[">0"] - 1.0) < 1e-6


# --- criterion 3 ----------------------------------------------------------


def test_criterion_03_recall_and_rank_correctness():
    """1,000 pools vs predicate oracle; cap 20; comparator total order."""
    rules = [
        DEFAULT_RULE,
        ThresholdRule(
            clauses=(Clause("HI", "<", 1), Clause("DNF", ">", 5)), combinator="AND"
        ),
    ]
    store = fixtures.random_store(5, n_nodes=40, n_edges=400)
    rng = np.random.default_rng(3)
    pools = 0
    for _ in range(1000):
        src = int(rng.integers(0, 40))
        size = int(rng.integers(5, 31))
        pool = [int(p) for p in rng.choice(40, size=size, replace=False)]
        t = float(rng.integers(1, 400))
        cs = apply_thresholds(src, pool, t, rules, store=store)
        evs = batch_evidence(store, [(src, d, t) for d in pool])
        for node, ev in zip(pool, evs):
            m = {"HI": ev.hi, "CN": ev.cn, "DNF": ev.dnf}
            drop = (m["HI"] < 1 and m["CN"] < 1) or (m["HI"] < 1 and m["DNF"] > 5)
            assert (node in cs.excluded_nodes) == drop
        assert set(cs.kept_nodes) | set(cs.excluded_nodes) == set(pool)
        assert not set(cs.kept_nodes) & set(cs.excluded_nodes)
        pools += 1
    assert pools == 1000

    # cap enforced at 20 on an oversized survivor set
    big = CandidateSet(
        source=0,
        t=0.0,
        candidates=tuple((n, _fake_evidence(hi=n % 9, cn=n % 4)) for n in range(45)),
    )
    ranked = rank_candidates(big, None)
    assert len(ranked.candidates) == 20 and ranked.capped

    # total order under randomized testing: strict, antisymmetric, transitive
    for trial in range(20):
        spec_pool = [("HI", "high"), ("CN", "low"), ("DNF", "high")]
        spec = [s for s in spec_pool if rng.random() < 0.7] or [("HI", "high")]
        key = ranking_key(spec)
        items = [
            (int(n), _fake_evidence(hi=int(rng.integers(0, 4)),
                                    cn=int(rng.integers(0, 4)),
                                    dnf=int(rng.integers(0, 4))))
            for n in rng.permutation(30)
        ]
        keys = {node: key(item) for node, item in ((i[0], i) for i in items)}
        assert len(set(keys.values())) == len(items)  # strict
        sample = [items[int(i)] for i in rng.integers(0, len(items), size=60)]
        for a, b in zip(sample, sample[1:]):
            assert (key(a) < key(b)) != (key(b) < key(a)) or a[0] == b[0]
        for a, b, c in zip(sample, sample[1:], sample[2:]):
            if key(a) <= key(b) <= key(c):
                assert key(a) <= key(c)


# --- criterion 4 ----------------------------------------------------------


def _run_config(root, name, **over):
    payload = {
        "dataset_name": "accept-500",
        "dataset_dir": str(root / "data"),
        "backend": "mock",
        "model": "heuristic-mock",
        "seed": 7,
        "window": 16,
        "batch_size": 4,
        "mode": "gad",
        "tasks": ["lp", "nr", "ec"],
        "out_dir": str(root / name),
    }
    payload.update(over)
    return validate_payload(payload)


@pytest.fixture(scope="module")
def e2e(tmp_path_factory):
    root = tmp_path_factory.mktemp("accept-e2e")
    (root / "data").mkdir()
    store = fixtures.clustered_store(11)
    assert store.num_edges == 500
    export_dataset(store, str(root / "data"))
    results = []
    for name in ("run_a", "run_b"):
        result = run_pipeline(_run_config(root, name))
        assert result.status == 0
        results.append(result)
    return {"root": root, "results": results}


def test_criterion_04_end_to_end_determinism(e2e):
    """Two seed-7 runs byte-identical; LP accuracy matches the oracle script."""
    root = e2e["root"]
    for name in (
        "predictions_lp.jsonl",
        "predictions_nr.jsonl",
        "predictions_ec.jsonl",
        "report_lp.json",
        "report_nr.json",
        "report_ec.json",
        "reports.txt",
    ):
        a = (root / "run_a" / name).read_bytes()
        b = (root / "run_b" / name).read_bytes()
        assert a == b, f"{name} differs between identical runs"

    proc = subprocess.run(
        [
            sys.executable,
            str(REPO / "scripts" / "lp_oracle.py"),
            "--edges", str(root / "data" / "edges.csv"),
            "--predictions", str(root / "run_a" / "predictions_lp.jsonl"),
            "--report", str(root / "run_a" / "report_lp.json"),
        ],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert "match within 1e-12" in proc.stdout


# --- criterion 5 ----------------------------------------------------------


def _nr_record(i, rank, pool=(2, 3, 4)):
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


def test_criterion_05_nr_scoring(e2e):
    """hits@{1,3,10} = {0.25, 0.5, 0.5} for ranks [1,2,11,102]; monotone."""
    report = score_nr(
        [_nr_record(i, r) for i, r in enumerate([1, 2, 11, 102])], dataset="hand"
    )
    assert report.metrics == {"hits@1": 0.25, "hits@3": 0.5, "hits@10": 0.5}

    with pytest.raises(ValueError):
        EvalReport(
            task="nr",
            mode="structure",
            dataset="x",
            n_samples=4,
            metrics={"hits@1": 0.5, "hits@3": 0.25, "hits@10": 0.6},
        )

    produced = [
        e2e["root"] / "run_a" / "report_nr.json",
        e2e["root"] / "run_b" / "report_nr.json",
        REPLAY_FIXTURE / "expected" / "report_nr.json",
    ]
    for path in produced:
        metrics = EvalReport.load(path).metrics
        assert metrics["hits@1"] <= metrics["hits@3"] <= metrics["hits@10"]


# --- criterion 6 ----------------------------------------------------------


def test_criterion_06_ec_scoring():
    """Worked example F1 = 0.643 within 1e-3; reference agreement to 1e-9."""
    truths = [0, 0, 0, 1]
    answers = [0, 0, 0, 0]
    records = [
        PredictionRecord(
            query=TaskQuery(
                index=i, task=TASK_EC, source=1, destination=2, t=5.0, truth=t
            ),
            mode="structure",
            answer=a,
            fallback_used=False,
        )
        for i, (t, a) in enumerate(zip(truths, answers))
    ]
    report = score_ec(records, label_count=2, dataset="hand")
    assert abs(report.metrics["f1"] - 0.643) <= 1e-3

    import warnings

    from sklearn.metrics import precision_recall_fscore_support

    rng = np.random.default_rng(6)
    for _ in range(100):
        k = int(rng.integers(2, 7))
        n = int(rng.integers(1, 60))
        t = rng.integers(0, k, size=n).tolist()
        a = rng.integers(0, k, size=n).tolist()
        mine = weighted_prf(t, a)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            p, r, f, _ = precision_recall_fscore_support(
                t, a, average="weighted", zero_division=0
            )
        assert abs(mine["precision"] - p) < 1e-9
        assert abs(mine["recall"] - r) < 1e-9
        assert abs(mine["f1"] - f) < 1e-9


# --- criterion 7 ----------------------------------------------------------

DTGB_STATS = {
    # dataset: (nodes, edges, categories, bipartite)
    "Enron": (42_711, 797_907, 10, False),
    "GDELT": (6_786, 1_339_245, 237, False),
    "ICEWS1819": (31_796, 1_100_071, 266, False),
    "Googlemap_CT": (674_248, 1_497_006, 2, True),
    "Stack_elec": (397_702, 1_262_225, 2, True),
}

DTGB_CONSISTENCY = {
    # dataset: (pair %, edge-text %); None = withheld, repetition below 10%
    "Enron": (64.9, 68.6),
    "GDELT": (29.4, 100.0),
    "ICEWS1819": (48.5, 100.0),
    "Googlemap_CT": (None, 77.3),
    "Stack_elec": (94.5, None),
}


def _dtgb_root():
    candidates = []
    if os.environ.get("DTGB_DIR"):
        candidates.append(Path(os.environ["DTGB_DIR"]))
    candidates += [REPO / "data" / "DTGB", REPO / "data" / "dtgb"]
    for root in candidates:
        if root and all((root / name / "edge_list.csv").exists() for name in DTGB_STATS):
            return root
    return None


def test_criterion_07_reference_dataset_statistics():
    """Published stats exact; Pareto coverage > 70%; consistency within 0.5pt."""
    root = _dtgb_root()
    if root is None:
        pytest.skip(
            "reference datasets not present; set DTGB_DIR to a directory "
            "containing Enron, GDELT, ICEWS1819, Googlemap_CT, and Stack_elec "
            "(each with edge_list.csv, entity_text.csv, relation_text.csv)"
        )
    for name, (nodes, edges, categories, bipartite) in DTGB_STATS.items():
        started = time.perf_counter()
        store = import_dtgb(str(root / name), bipartite=bipartite)
        assert store.num_nodes == nodes, name
        assert store.num_edges == edges, name
        assert len(store.labels) == categories, name

        split = chronological_split(store)
        coverage = pareto_coverage(split, fraction=0.10)
        assert coverage.coverage_all > 0.70, (name, coverage.coverage_all)

        report = analyze_consistency(store)
        for got, expected in (
            (report.pair_consistency, DTGB_CONSISTENCY[name][0]),
            (report.text_consistency, DTGB_CONSISTENCY[name][1]),
        ):
            if expected is None:
                assert got is None, (name, got)
            else:
                assert got is not None, (name, expected)
                assert abs(100.0 * got - expected) <= 0.5, (name, got, expected)
        assert time.perf_counter() - started < 600.0, name


# --- criterion 8 ----------------------------------------------------------


@pytest.fixture(scope="module")
def replay_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("accept-replay") / "out"
    settings = json.loads((REPLAY_FIXTURE / "settings.json").read_text())
    config = validate_payload(
        dict(
            settings,
            dataset_dir=str(REPLAY_FIXTURE / "data"),
            backend="replay",
            transcript_path=str(REPLAY_FIXTURE / "transcript.jsonl"),
            out_dir=str(out),
        )
    )
    result = run_pipeline(config)
    return out, result


def test_criterion_08_replay_regression(replay_run):
    """The committed transcript replays to byte-identical artifacts."""
    out, result = replay_run
    assert result.status == 0
    for name in (
        "knowledge.json",
        "report_lp.json",
        "report_nr.json",
        "report_ec.json",
        "predictions_lp.jsonl",
        "predictions_nr.jsonl",
        "predictions_ec.jsonl",
    ):
        got = (out / name).read_bytes()
        expected = (REPLAY_FIXTURE / "expected" / name).read_bytes()
        assert got == expected, f"replayed {name} diverged from the fixture"
    queries = sum(
        len((out / f"predictions_{task}.jsonl").read_text().splitlines())
        for task in ("lp", "nr", "ec")
    )
    assert queries == 64


# --- criterion 9 ----------------------------------------------------------


def _prompt_text(record):
    return "\n\n".join(m["content"] for m in record["request"]["messages"])


def _load_transcript(path):
    records = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            records.setdefault(rec["request_digest"], rec)
    return records


def _structural_scan(records):
    """No prompt may carry an answer marker after its query section."""
    scanned = 0
    for rec in records.values():
        text = _prompt_text(rec)
        if (
            rendering.CURRENT_SAMPLE_MARKER in text
            or rendering.CANDIDATES_MARKER in text
        ):
            tail = rendering.query_section(text)
            assert rendering.ANSWER_PREFIX not in tail, text[-400:]
            scanned += 1
    return scanned


def _audit_predictions(run_dir, records, store):
    """Per-query checks: no answer token, no leaked query edge text."""
    prompts = 0
    leak_checks = 0
    for task in ("lp", "nr", "ec"):
        path = run_dir / f"predictions_{task}.jsonl"
        if not path.exists():
            continue
        for line in path.read_text(encoding="utf-8").splitlines():
            payload = json.loads(line)
            truth = payload["truth"]
            true_dst = truth if task == "nr" else payload["destination"]
            edge_idx = None
            if task == "nr" or task == "ec" or truth == 1:
                edge_idx = store.find_edge_at(
                    payload["source"], int(true_dst), payload["t"]
                )
            query_text = None
            if edge_idx is not None:
                tid = int(store.text_id[edge_idx])
                if tid != -1:
                    query_text = store.edge_texts[tid]
            for digest in payload["digests"]:
                rec = records.get(digest)
                assert rec is not None, f"unresolved digest {digest[:12]} in {path}"
                text = _prompt_text(rec)
                tail = rendering.query_section(text)
                assert rendering.ANSWER_PREFIX not in tail
                if task == "lp":
                    assert f"Answer: {truth}" not in tail
                elif task == "ec":
                    assert f"Answer: {store.labels[truth]}" not in tail
                else:
                    for raw in tail.splitlines():
                        if raw.startswith("Destination Node ID:"):
                            rest = raw.split(":", 1)[1].strip()
                            assert rest.isdigit(), f"annotated candidate: {raw!r}"
                if query_text is not None and len(query_text) >= 6:
                    assert query_text not in text, (
                        f"query edge text leaked into a {task} prompt"
                    )
                    leak_checks += 1
                prompts += 1
    return prompts, leak_checks


def test_criterion_09_prompt_hygiene(e2e, replay_run, tmp_path_factory):
    """No rendered prompt contains its query's ground-truth token."""
    audits = []  # (transcript path, run dir or None)
    root = e2e["root"]
    for name in ("run_a", "run_b"):
        audits.append((root / name / "transcript.jsonl", root / name))
    audits.append((REPLAY_FIXTURE / "transcript.jsonl", replay_run[0]))

    seen = {path for path, _ in audits}
    base = tmp_path_factory.getbasetemp()
    for transcript in sorted(base.rglob("transcript.jsonl")):
        if transcript in seen:
            continue
        run_dir = transcript.parent
        has_predictions = any(
            (run_dir / f"predictions_{task}.jsonl").exists()
            for task in ("lp", "nr", "ec")
        )
        audits.append(
            (transcript, run_dir if (run_dir / "store.npz").exists() and has_predictions else None)
        )

    transcripts = 0
    prompts = 0
    leak_checks = 0
    for transcript, run_dir in audits:
        if not transcript.exists():
            continue
        records = _load_transcript(transcript)
        _structural_scan(records)
        if run_dir is not None:
            store = load_store(str(run_dir / "store.npz"))
            audited, leaks = _audit_predictions(run_dir, records, store)
            prompts += audited
            leak_checks += leaks
        transcripts += 1

    assert transcripts >= 3, "hygiene sweep found too few transcripts"
    assert prompts > 0 and leak_checks > 0


# --- criterion 10 ---------------------------------------------------------


def test_criterion_10_bipartite_zero_common_neighbors():
    """10,000 random cross-partition queries all report CN = 0."""
    store = fixtures.bipartite_store(3)
    rng = np.random.default_rng(10)
    tmax = float(store.ts[-1]) + 2.0
    queries = [
        (
            int(rng.integers(0, 30)),
            int(rng.integers(30, 60)),
            float(rng.uniform(0.0, tmax)),
        )
        for _ in range(10_000)
    ]
    queries.sort(key=lambda q: q[2])
    for force_python in (False, True):
        evidences = batch_evidence(store, queries, force_python=force_python)
        assert len(evidences) == 10_000
        assert all(ev.cn == 0 for ev in evidences)
