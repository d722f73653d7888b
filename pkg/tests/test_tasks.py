"""Task runner: prompt assembly, prediction, fallbacks, checkpointed runs."""

import copy
import json

import pytest

from dytag import rendering
from dytag.gateway import Gateway, MockBackend, MockRule, heuristic_mock, heuristic_rules
from dytag.knowledge import (
    AgentRuntime,
    KnowledgeStore,
    collect_trajectories,
    run_global_edge_label_summary,
    run_global_link_summary,
    run_initial_agent,
    run_local_summaries,
    run_reflection,
    select_active_nodes,
)
from dytag.knowledge.types import MetricKnowledge
from dytag.metrics import batch_evidence
from dytag.statsprep import build_negative_validation_samples, prepare_knowledge_inputs
from dytag.tasks import (
    TaskQuery,
    TaskRunner,
    TaskRunSettings,
    assemble_prompt,
    build_few_shot,
    build_queries,
    load_records,
    surrogate_link_predictor,
)
from dytag.tasks.prompts import PromptSettings

TOY_SETTINGS = TaskRunSettings(
    model="mock-model",
    mode="structure",
    seed=7,
    window=16,
    batch_size=4,
    nr_pool_negatives=1,
    max_workers=2,
)

LP_QUERY = TaskQuery(index=0, task="lp", source=1, destination=2, t=5.0, truth=1)
EC_QUERY = TaskQuery(index=0, task="ec", source=1, destination=2, t=5.0, truth=0)


@pytest.fixture
def toy_runner(toy_split):
    return TaskRunner(
        gateway=Gateway(heuristic_mock()), split=toy_split, settings=TOY_SETTINGS
    )


@pytest.fixture
def toy_evidence(toy):
    return batch_evidence(toy, [(1, 2, 5.0)])[0]


def test_structure_lp_prompt_content(toy_evidence):
    req = assemble_prompt(
        LP_QUERY, "structure", toy_evidence, None, PromptSettings(model="m")
    )
    text = req.full_text()
    assert "Historical Interaction Count:" in text
    assert "Source ID 1 and Destination ID 2: 2" in text
    assert "Current Sample:" in text


def test_text_mode_prompt_drops_metrics(toy_evidence):
    req = assemble_prompt(
        LP_QUERY, "text", toy_evidence, None, PromptSettings(model="m")
    )
    text = req.full_text()
    assert "Historical Interaction Count" not in text
    assert "Common Neighbor" not in text
    assert "Frequency" not in text
    assert "Source Node text:" in text


def test_mock_lp_answers(toy, toy_runner, toy_evidence):
    rec = toy_runner.predict_link(LP_QUERY, toy_evidence)
    assert rec.answer == 1 and not rec.fallback_used
    cold = TaskQuery(index=1, task="lp", source=2, destination=3, t=3.0, truth=0)
    cold_ev = batch_evidence(toy, [(2, 3, 3.0)])[0]
    assert cold_ev.hi == 0 and cold_ev.cn == 0
    assert toy_runner.predict_link(cold, cold_ev).answer == 0


def test_lp_prose_fallback(toy_split, toy_evidence):
    prose = MockBackend(
        [
            MockRule(
                "prose",
                lambda r, t: True,
                lambda r, t: "I think they will definitely interact!",
            )
        ]
    )
    runner = TaskRunner(gateway=Gateway(prose), split=toy_split, settings=TOY_SETTINGS)
    rec = runner.predict_link(LP_QUERY, toy_evidence)
    # HI > 0 decides once parsing gives up; the single re-ask leaves two digests
    assert rec.fallback_used and rec.answer == 1
    assert len(rec.digests) == 2


def test_mock_ec_answer(toy_runner, toy_evidence):
    rec = toy_runner.classify_edge(EC_QUERY, toy_evidence)
    assert rec.answer == 0 and rec.answer_text == "A"
    assert not rec.fallback_used


def test_ec_fallback_chain(toy, toy_split, toy_evidence):
    bad = MockBackend(
        [MockRule("bad", lambda r, t: True, lambda r, t: '{"Prediction": "nonsense"}')]
    )
    runner = TaskRunner(gateway=Gateway(bad), split=toy_split, settings=TOY_SETTINGS)
    rec = runner.classify_edge(EC_QUERY, toy_evidence)
    assert rec.fallback_used and rec.answer == 0  # modal pair label
    # cold pair: no pair history, so the source-side label mix decides;
    # node 3 saw one B then one A, tie keeps first occurrence
    cold = TaskQuery(index=1, task="ec", source=3, destination=3, t=5.0, truth=1)
    cold_ev = batch_evidence(toy, [(3, 3, 5.0)])[0]
    assert cold_ev.eld_pair.counts == {}
    rec2 = runner.classify_edge(cold, cold_ev)
    assert rec2.fallback_used and rec2.answer_text == "B"


def test_ec_label_normalization(toy_split, toy_evidence):
    spaced = MockBackend(
        [MockRule("sp", lambda r, t: True, lambda r, t: '{"Prediction": "  a  "}')]
    )
    runner = TaskRunner(gateway=Gateway(spaced), split=toy_split, settings=TOY_SETTINGS)
    rec = runner.classify_edge(EC_QUERY, toy_evidence)
    assert rec.answer == 0 and not rec.fallback_used


# --- node retrieval on the clustered store ------------------------------

NR_SETTINGS = TaskRunSettings(
    model="mock-model",
    mode="structure",
    seed=7,
    window=8,
    batch_size=4,
    nr_pool_negatives=10,
    max_workers=2,
)


@pytest.fixture(scope="module")
def nr_env(clustered, clustered_split):
    queries = build_queries(clustered_split, "nr", NR_SETTINGS)
    first = queries[0]
    evs = batch_evidence(clustered, [(first.source, d, first.t) for d in first.pool])
    runner = TaskRunner(
        gateway=Gateway(heuristic_mock()), split=clustered_split, settings=NR_SETTINGS
    )
    base = runner.retrieve_nodes(first, evs)
    return {"queries": queries, "first": first, "evs": evs, "base": base}


def test_nr_pools_and_record(nr_env):
    assert all(len(q.pool) == 11 for q in nr_env["queries"])
    base = nr_env["base"]
    assert base.positive_rank is not None and base.positive_rank >= 1
    assert isinstance(base.answer, dict)


def test_nr_pessimistic_tie(clustered_split, nr_env):
    ranked = nr_env["base"].ranked_nodes
    tie = MockBackend(
        [
            MockRule(
                "tie",
                lambda r, t: "Candidate Destinations:" in t,
                lambda r, t: json.dumps({str(n): 0.9 for n in ranked}),
            ),
            *heuristic_rules(),
        ]
    )
    runner = TaskRunner(
        gateway=Gateway(tie), split=clustered_split, settings=NR_SETTINGS
    )
    rec = runner.retrieve_nodes(nr_env["first"], nr_env["evs"])
    truth = nr_env["first"].truth
    if truth in rec.ranked_nodes:
        # equal likelihoods must not give the positive the benefit of the doubt
        assert rec.ranked_nodes.index(truth) + 1 == len(rec.ranked_nodes)
        assert rec.positive_rank == len(rec.ranked_nodes)
    else:
        assert rec.positive_rank == len(rec.ranked_nodes) + 1


def test_nr_parse_failure_falls_back_to_recall_order(clustered_split, nr_env):
    noisy = MockBackend(
        [
            MockRule(
                "noise",
                lambda r, t: "Candidate Destinations:" in t,
                lambda r, t: "cannot comply",
            ),
            *heuristic_rules(),
        ]
    )
    runner = TaskRunner(
        gateway=Gateway(noisy), split=clustered_split, settings=NR_SETTINGS
    )
    rec = runner.retrieve_nodes(nr_env["first"], nr_env["evs"])
    assert rec.fallback_used and rec.answer == {}
    assert rec.positive_rank >= 1


# --- few-shot examples ---------------------------------------------------


def test_few_shot_examples(clustered, clustered_split):
    settings = TaskRunSettings(
        model="mock-model",
        mode="structure-fewshot",
        seed=7,
        window=8,
        batch_size=8,
        nr_pool_negatives=10,
        max_workers=2,
    )
    examples = build_few_shot(clustered_split, "lp", settings)
    n_batches = -(-len(list(clustered_split.valid_indices)) // 8)
    assert len(examples) == min(6, n_batches) == 6
    # alternation: odd slots positive, even negative
    assert [e.answer for e in examples] == ["1", "0", "1", "0", "1", "0"]

    q = build_queries(clustered_split, "lp", settings)[0]
    ev = batch_evidence(clustered, [(q.source, q.destination, q.t)])[0]
    req = assemble_prompt(
        q, "structure-fewshot", ev, None, PromptSettings(model="m"), few_shot=examples
    )
    text = req.full_text()
    assert text.count("Example ") >= 6
    assert text.count("Answer:") == 6
    assert "Answer:" not in rendering.query_section(text)

    runner = TaskRunner(
        gateway=Gateway(heuristic_mock()),
        split=clustered_split,
        settings=settings,
        few_shot=examples,
    )
    rec = runner.predict_link(q, ev)
    # the answer must track the current pair's metrics, not the examples
    assert rec.answer == (1 if ev.hi > 0 or ev.cn > 0 else 0)


# --- checkpointed runs ---------------------------------------------------

RUN_SETTINGS = TaskRunSettings(
    model="mock-model", mode="structure", seed=7, window=8, batch_size=4, max_workers=4
)


def _fresh_runner(split):
    return TaskRunner(
        gateway=Gateway(heuristic_mock()), split=split, settings=RUN_SETTINGS
    )


@pytest.fixture(scope="module")
def lp_run(clustered_split, tmp_path_factory):
    out = tmp_path_factory.mktemp("lp-run") / "a.jsonl"
    records = _fresh_runner(clustered_split).run("lp", out_path=out)
    return out, records


def test_run_is_deterministic(clustered_split, lp_run, tmp_path):
    out1, records1 = lp_run
    out2 = tmp_path / "b.jsonl"
    records2 = _fresh_runner(clustered_split).run("lp", out_path=out2)
    assert out1.read_bytes() == out2.read_bytes()
    assert len(records1) == len(records2) == 16  # 8 window edges x (pos+neg)


def test_checkpoint_resume(clustered_split, lp_run, tmp_path):
    out1, records1 = lp_run
    lines = out1.read_text().splitlines(keepends=True)
    partial = tmp_path / "c.jsonl"
    partial.write_text("".join(lines[:8]))
    resumed = _fresh_runner(clustered_split).run("lp", out_path=partial)
    assert partial.read_bytes() == out1.read_bytes()
    assert [r.to_json() for r in resumed] == [r.to_json() for r in records1]


def test_mid_write_crash_resume(clustered_split, lp_run, tmp_path):
    out1, _ = lp_run
    lines = out1.read_text().splitlines(keepends=True)
    broken = tmp_path / "d.jsonl"
    broken.write_bytes(out1.read_bytes()[: len("".join(lines[:9])) - 13])
    _fresh_runner(clustered_split).run("lp", out_path=broken)
    assert broken.read_bytes() == out1.read_bytes()


def test_foreign_checkpoint_rejected(clustered_split, lp_run, tmp_path):
    out1, _ = lp_run
    lines = out1.read_text().splitlines(keepends=True)
    wrong = tmp_path / "e.jsonl"
    wrong.write_text(lines[1] + lines[0])
    with pytest.raises(ValueError):
        _fresh_runner(clustered_split).run("lp", out_path=wrong)


@pytest.mark.parametrize("task", ["lp", "nr", "ec"])
def test_all_tasks_complete(clustered_split, task, tmp_path):
    settings = TaskRunSettings(
        model="mock-model",
        mode="structure",
        seed=7,
        window=6,
        batch_size=4,
        nr_pool_negatives=8,
        max_workers=3,
    )
    runner = TaskRunner(
        gateway=Gateway(heuristic_mock()), split=clustered_split, settings=settings
    )
    out = tmp_path / f"{task}.jsonl"
    recs = runner.run(task, out_path=out)
    assert len(load_records(out)) == len(recs) > 0


# --- knowledge-guided prompt mode ----------------------------------------

GAD_SETTINGS = TaskRunSettings(
    model="mock-model",
    mode="gad",
    seed=7,
    window=6,
    batch_size=4,
    nr_pool_negatives=10,
    max_workers=2,
)


@pytest.fixture(scope="module")
def gad(clustered, clustered_split):
    gw = Gateway(heuristic_mock())
    rt = AgentRuntime(gw, model="mock-model")
    card, d0 = run_initial_agent(
        rt, "Social circle communications with labeled notes.", "link prediction"
    )
    prep = prepare_knowledge_inputs(clustered_split, seed=7)
    link = run_global_link_summary(rt, card, prep)
    el = run_global_edge_label_summary(rt, card, prep)
    active = select_active_nodes(clustered_split)
    profiles, pdig = run_local_summaries(
        rt, clustered_split, card, active, max_workers=4
    )

    ks = KnowledgeStore(dataset_card=card)
    ks.record_provenance("dataset_card", d0)
    ks.global_link = link.knowledge
    ks.record_provenance("global_link", link.structural_digests + link.text_digests)
    ks.global_edge_label = el.knowledge
    ks.record_provenance("global_edge_label", el.text_digests + el.eld_digests)
    ks.thresholds["nr"] = list(link.thresholds)
    ks.record_provenance("thresholds.nr", link.structural_digests)
    ks.local_profiles = profiles
    for n in profiles:
        ks.record_provenance(f"local_profiles.{n}", pdig[n])

    predict = surrogate_link_predictor(gw, clustered_split, GAD_SETTINGS, ks)
    negatives = build_negative_validation_samples(clustered_split, seed=7)
    trajectories, accuracy = collect_trajectories(
        clustered_split, predict, negatives, count=30, seed=7
    )
    outcome, rdig, _ = run_reflection(rt, link.knowledge, trajectories, accuracy)
    ks.reflection["lp"] = outcome
    ks.record_provenance("reflection.lp", rdig)
    return {"ks": ks, "active": active, "outcome": outcome}


def _gad_prompt(clustered, gad):
    active = gad["active"]
    q = TaskQuery(
        index=0, task="lp", source=active[0], destination=active[1], t=260.0, truth=1
    )
    ev = batch_evidence(clustered, [(active[0], active[1], 260.0)])[0]
    return q, ev, assemble_prompt(q, "gad", ev, gad["ks"], PromptSettings(model="m"))


def test_gad_prompt_keeps_significant_blocks(clustered, gad):
    _, _, req = _gad_prompt(clustered, gad)
    text = req.full_text()
    assert "Dataset Knowledge:" in text
    assert (
        "Historical Interaction Count [Extremely Significant, favors high values]"
        in text
    )
    # the most active node carries a profile
    assert "Source Node Profile:" in text
    assert "Neighbor Preference" in text
    if gad["outcome"].significant:
        assert "Knowledge Reflection:" in text


def test_gad_prompt_drops_weak_blocks(clustered, gad):
    _, _, req = _gad_prompt(clustered, gad)
    text = req.full_text()
    # activity metrics judged merely maybe-related stay out of the prompt
    assert "Node-Specific Metrics:" not in text
    assert "- Frequency:" not in text
    # node text judged irrelevant stays out
    assert "Source Node text:" not in text
    # profile lines judged not significant stay out
    assert "Edge Text Preference" not in text


def test_gad_prompt_honors_metric_downgrades(clustered, gad):
    q, ev, _ = _gad_prompt(clustered, gad)
    weak = copy.deepcopy(gad["ks"])
    metrics = dict(weak.global_link.metrics)
    metrics["CN"] = MetricKnowledge(
        significance="Not Relevant", explanation="x", favors="high"
    )
    object.__setattr__(weak.global_link, "metrics", metrics)
    req = assemble_prompt(q, "gad", ev, weak, PromptSettings(model="m"))
    assert "Common Neighbor Count" not in req.full_text()


@pytest.mark.parametrize("task", ["lp", "nr", "ec"])
def test_gad_runs_without_fallbacks(clustered_split, gad, task, tmp_path):
    runner = TaskRunner(
        gateway=Gateway(heuristic_mock()),
        split=clustered_split,
        settings=GAD_SETTINGS,
        knowledge=gad["ks"],
    )
    recs = runner.run(task, out_path=tmp_path / f"{task}.jsonl")
    assert recs
    assert sum(r.fallback_used for r in recs) == 0


def test_gad_nr_ranks_stay_within_pool_bound(clustered, clustered_split, gad):
    runner = TaskRunner(
        gateway=Gateway(heuristic_mock()),
        split=clustered_split,
        settings=GAD_SETTINGS,
        knowledge=gad["ks"],
    )
    queries = build_queries(clustered_split, "nr", GAD_SETTINGS)
    for q in queries:
        evs = batch_evidence(clustered, [(q.source, d, q.t) for d in q.pool])
        rec = runner.retrieve_nodes(q, evs)
        # an excluded positive lands one past the pool, never further
        assert 1 <= rec.positive_rank <= len(q.pool) + 1
