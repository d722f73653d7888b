"""Task execution: query construction, prediction, fallbacks, batching.

The runner walks the evaluation window in chronological batches, keeps
per-batch checkpoints so an interrupted run resumes exactly, and emits
records in query order no matter how the backend interleaves completions.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..gateway import (
    CLASS_PREDICTION,
    Gateway,
    LINK_ANSWER,
    RETRIEVAL_LIKELIHOODS,
    StructuredParseError,
)
from ..knowledge import KnowledgeStore
from ..metrics import PairEvidence, batch_evidence
from ..recall import CandidateSet, recall_and_rank
from ..seeding import rng_for
from ..statsprep import draw_negative, draw_negative_pool
from ..store import DyTagStore, SplitView
from .prompts import (
    FewShotExample,
    PromptSettings,
    assemble_prompt,
    ec_blocks,
    ec_sample_block,
    link_blocks,
    lp_sample_block,
    nr_candidate_block,
    nr_source_block,
)
from .types import (
    FEWSHOT_MODES,
    MODE_GAD,
    TASK_EC,
    TASK_LP,
    TASK_NR,
    TASKS,
    PredictionRecord,
    TaskQuery,
    append_records,
    dump_records,
    load_records,
)
from .. import rendering

log = logging.getLogger("dytag.tasks")

DEFAULT_WINDOW = 10240
DEFAULT_BATCH_SIZE = 256
NR_POOL_NEGATIVES = 100
FEW_SHOT_COUNT = 6


@dataclass(frozen=True)
class TaskRunSettings:
    """Everything a prediction run needs besides data and knowledge."""

    model: str
    mode: str
    seed: int
    temperature: float = 0.0
    max_tokens: int = 1024
    use_edge_text: bool = False
    window: int = DEFAULT_WINDOW
    batch_size: int = DEFAULT_BATCH_SIZE
    nr_pool_negatives: int = NR_POOL_NEGATIVES
    recall_cap: int = 20
    few_shot_count: int = FEW_SHOT_COUNT
    max_workers: int = 8

    def prompt_settings(self) -> PromptSettings:
        return PromptSettings(
            model=self.model,
            temperature=self.temperature,
            max_tokens=self.max_tokens,
            use_edge_text=self.use_edge_text,
        )


def ordered_class_list(split: SplitView) -> list[int]:
    """Label ids by train+validation frequency, descending, ties by id.

    Every registered label appears, so the prompt's class vocabulary is
    complete even for labels unseen before the test window. The head of
    this list doubles as the global modal label for fallbacks.
    """
    store = split.store
    window = store.label[: split.valid_end]
    ids, counts = np.unique(window, return_counts=True)
    count_of = {int(i): int(c) for i, c in zip(ids, counts)}
    return sorted(store.labels, key=lambda lab: (-count_of.get(lab, 0), lab))


def lp_fallback(evidence: PairEvidence) -> int:
    """History-based default when the model reply is unusable."""
    return 1 if evidence.hi > 0 or evidence.cn > 0 else 0


def ec_fallback(evidence: PairEvidence, global_modal: int) -> int:
    """Modal pair label, then modal source label, then the global modal."""
    label = evidence.eld_pair.modal_label()
    if label is None:
        label = evidence.eld_src.modal_label()
    if label is None:
        label = global_modal
    return label


def match_label(text: str, store: DyTagStore) -> Optional[int]:
    """Registered label id whose text matches after trim + casefold."""
    wanted = text.strip().casefold()
    hits = [lab for lab, name in store.labels.items()
            if name.strip().casefold() == wanted]
    return min(hits) if hits else None


# --- query construction -----------------------------------------------------


def build_queries(
    split: SplitView, task: str, settings: TaskRunSettings
) -> list[TaskQuery]:
    """Deterministic query list for the evaluation window.

    All sampling draws from per-purpose generators in a fixed order, so
    the list is identical no matter where a resumed run restarts.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    store = split.store
    eval_indices = list(split.test_indices)[: settings.window]
    if not eval_indices:
        raise ValueError("evaluation window is empty")
    queries: list[TaskQuery] = []
    if task == TASK_LP:
        eligible = store.eligible_destinations()
        where = {node: i for i, node in enumerate(eligible)}
        rng = rng_for(settings.seed, "lp-eval-negatives")
        for i in eval_indices:
            e = store.edge(i)
            queries.append(TaskQuery(
                index=len(queries), task=TASK_LP, source=e.src,
                destination=e.dst, t=e.ts, truth=1))
            negative = draw_negative(
                eligible, e.dst, rng, pos=where.get(e.dst, len(eligible)))
            queries.append(TaskQuery(
                index=len(queries), task=TASK_LP, source=e.src,
                destination=negative, t=e.ts, truth=0))
    elif task == TASK_NR:
        eligible = store.eligible_destinations()
        where = {node: i for i, node in enumerate(eligible)}
        rng = rng_for(settings.seed, "nr-eval-pools")
        for i in eval_indices:
            e = store.edge(i)
            negatives = draw_negative_pool(
                eligible, e.dst, settings.nr_pool_negatives, rng,
                pos=where.get(e.dst, len(eligible)))
            pool = [e.dst] + negatives
            order = rng.permutation(len(pool))
            shuffled = tuple(int(pool[j]) for j in order)
            queries.append(TaskQuery(
                index=len(queries), task=TASK_NR, source=e.src,
                destination=shuffled, t=e.ts, truth=e.dst))
    else:
        for i in eval_indices:
            e = store.edge(i)
            queries.append(TaskQuery(
                index=len(queries), task=TASK_EC, source=e.src,
                destination=e.dst, t=e.ts, truth=e.label))
    return queries


# --- few-shot example construction -------------------------------------------


def _chosen_validation_edges(
    split: SplitView, settings: TaskRunSettings
) -> list[int]:
    """One validation edge per evenly spaced batch, up to the example count."""
    valid = list(split.valid_indices)
    if not valid:
        raise ValueError("few-shot mode needs a nonempty validation window")
    n_batches = math.ceil(len(valid) / settings.batch_size)
    take = min(settings.few_shot_count, n_batches)
    batch_ids = sorted(set(
        int(round(x)) for x in np.linspace(0, n_batches - 1, num=take)))
    rng = rng_for(settings.seed, "few-shot")
    chosen = []
    for b in batch_ids:
        batch = valid[b * settings.batch_size:(b + 1) * settings.batch_size]
        chosen.append(int(batch[int(rng.integers(0, len(batch)))]))
    return chosen


def build_few_shot(
    split: SplitView, task: str, settings: TaskRunSettings,
    knowledge: Optional[KnowledgeStore] = None,
) -> list[FewShotExample]:
    """Rendered validation examples matching the run's mode and formats."""
    if settings.mode not in FEWSHOT_MODES:
        return []
    store = split.store
    chosen = _chosen_validation_edges(split, settings)
    global_link = knowledge.global_link if knowledge is not None else None
    rng = rng_for(settings.seed, "few-shot-negatives")
    eligible = store.eligible_destinations()
    where = {node: i for i, node in enumerate(eligible)}
    examples: list[FewShotExample] = []

    if task == TASK_LP:
        blocks = link_blocks(settings.mode, global_link)
        queries: list[tuple[int, int, float]] = []
        answers: list[str] = []
        for slot, i in enumerate(chosen):
            e = store.edge(i)
            if slot % 2 == 0:
                queries.append((e.src, e.dst, e.ts))
                answers.append("1")
            else:
                negative = draw_negative(
                    eligible, e.dst, rng, pos=where.get(e.dst, len(eligible)))
                queries.append((e.src, negative, e.ts))
                answers.append("0")
        for ev, answer in zip(batch_evidence(store, queries), answers):
            body = f"{rendering.CURRENT_SAMPLE_MARKER}\n{lp_sample_block(ev, blocks)}"
            examples.append(FewShotExample(body=body, answer=answer))
    elif task == TASK_NR:
        blocks = link_blocks(settings.mode, global_link)
        for i in chosen:
            e = store.edge(i)
            negatives = draw_negative_pool(
                eligible, e.dst, 4, rng, pos=where.get(e.dst, len(eligible)))
            pool = [e.dst] + negatives
            order = rng.permutation(len(pool))
            shuffled = [int(pool[j]) for j in order]
            evs = batch_evidence(store, [(e.src, d, e.ts) for d in shuffled])
            source_block = nr_source_block(e.src, evs[0], blocks)
            candidate_blocks = "\n\n".join(
                nr_candidate_block(d, ev, blocks)
                for d, ev in zip(shuffled, evs))
            body = (f"{rendering.CURRENT_SAMPLE_MARKER}\n{source_block}\n"
                    f"{rendering.CANDIDATES_MARKER}\n{candidate_blocks}")
            answer = rendering.render_label_counts(
                {str(d): (1.0 if d == e.dst else 0.0) for d in shuffled})
            examples.append(FewShotExample(body=body, answer=answer))
    else:
        edge_knowledge = (
            knowledge.global_edge_label if knowledge is not None else None)
        blocks = ec_blocks(settings.mode, edge_knowledge, settings.use_edge_text)
        queries = [(store.edge(i).src, store.edge(i).dst, store.edge(i).ts)
                   for i in chosen]
        evs = batch_evidence(store, queries,
                             include_edge_text=settings.use_edge_text)
        for i, ev in zip(chosen, evs):
            e = store.edge(i)
            body = (f"{rendering.CURRENT_SAMPLE_MARKER}\n"
                    f"{ec_sample_block(store, ev, blocks, edge_text=ev.edge_text)}")
            answer = f'{{"Prediction": {_json_str(store.label_text(e.label))}}}'
            examples.append(FewShotExample(body=body, answer=answer))
    return examples


def _json_str(text: str) -> str:
    import json

    return json.dumps(text, ensure_ascii=True)


# --- per-query prediction -----------------------------------------------------


@dataclass
class TaskRunner:
    """Shared context for one prediction run over one task."""

    gateway: Gateway
    split: SplitView
    settings: TaskRunSettings
    knowledge: Optional[KnowledgeStore] = None
    few_shot: Sequence[FewShotExample] = ()
    class_order: list[int] = field(init=False)
    class_names: list[str] = field(init=False)

    def __post_init__(self) -> None:
        if self.settings.mode == MODE_GAD and self.knowledge is None:
            raise ValueError("knowledge-guided mode needs a knowledge store")
        self.class_order = ordered_class_list(self.split)
        self.class_names = [self.split.store.label_text(lab)
                            for lab in self.class_order]

    @property
    def store(self) -> DyTagStore:
        return self.split.store

    def _thresholds(self) -> list:
        if self.settings.mode == MODE_GAD and self.knowledge is not None:
            return list(self.knowledge.thresholds.get(TASK_NR, []))
        return []

    def predict_link(self, query: TaskQuery,
                     evidence: PairEvidence) -> PredictionRecord:
        request = assemble_prompt(
            query, self.settings.mode, evidence, self.knowledge,
            self.settings.prompt_settings(), few_shot=self.few_shot)
        try:
            result = self.gateway.complete_structured(request, LINK_ANSWER)
            return PredictionRecord(
                query=query, mode=self.settings.mode, answer=result.value,
                fallback_used=False, digests=result.digests)
        except StructuredParseError as exc:
            return PredictionRecord(
                query=query, mode=self.settings.mode,
                answer=lp_fallback(evidence),
                fallback_used=True, digests=exc.digests)

    def retrieve_nodes(self, query: TaskQuery,
                       evidences: Sequence[PairEvidence]) -> PredictionRecord:
        pool = list(query.pool)
        global_link = (self.knowledge.global_link
                       if self.knowledge is not None else None)
        candidate_set = recall_and_rank(
            query.source, pool, query.t, self._thresholds(), global_link,
            evidences=list(evidences), cap=self.settings.recall_cap)
        miss_rank = len(pool) + 1
        if not candidate_set.candidates:
            return PredictionRecord(
                query=query, mode=self.settings.mode, answer={},
                fallback_used=False, digests=(),
                positive_rank=miss_rank, ranked_nodes=())
        request = assemble_prompt(
            query, self.settings.mode, candidate_set, self.knowledge,
            self.settings.prompt_settings(), few_shot=self.few_shot)
        kept = candidate_set.kept_nodes
        try:
            result = self.gateway.complete_structured(request, RETRIEVAL_LIKELIHOODS)
            likelihoods = {str(n): float(result.value.get(str(n), 0.0))
                           for n in kept}
            # Pessimistic tie handling: the positive sorts after every
            # candidate with an equal likelihood; negatives tie-break by
            # recall order.
            def rank_key(item: tuple[int, int]) -> tuple:
                position, node = item
                return (-likelihoods[str(node)], node == query.truth, position)

            ranked = [node for _, node in
                      sorted(((p, n) for p, n in enumerate(kept)), key=rank_key)]
            rank = (ranked.index(query.truth) + 1
                    if query.truth in ranked else miss_rank)
            return PredictionRecord(
                query=query, mode=self.settings.mode, answer=likelihoods,
                fallback_used=False, digests=result.digests,
                positive_rank=rank, ranked_nodes=tuple(ranked))
        except StructuredParseError as exc:
            rank = (kept.index(query.truth) + 1
                    if query.truth in kept else miss_rank)
            return PredictionRecord(
                query=query, mode=self.settings.mode, answer={},
                fallback_used=True, digests=exc.digests,
                positive_rank=rank, ranked_nodes=tuple(kept))

    def classify_edge(self, query: TaskQuery,
                      evidence: PairEvidence) -> PredictionRecord:
        store = self.store
        global_modal = self.class_order[0]
        request = assemble_prompt(
            query, self.settings.mode, evidence, self.knowledge,
            self.settings.prompt_settings(), few_shot=self.few_shot,
            store=store, edge_text=evidence.edge_text,
            class_names=self.class_names)
        try:
            result = self.gateway.complete_structured(request, CLASS_PREDICTION)
            label = match_label(result.value["Prediction"], store)
            if label is None:
                fallback = ec_fallback(evidence, global_modal)
                return PredictionRecord(
                    query=query, mode=self.settings.mode, answer=fallback,
                    fallback_used=True, digests=result.digests,
                    answer_text=store.label_text(fallback))
            return PredictionRecord(
                query=query, mode=self.settings.mode, answer=label,
                fallback_used=False, digests=result.digests,
                answer_text=store.label_text(label))
        except StructuredParseError as exc:
            fallback = ec_fallback(evidence, global_modal)
            return PredictionRecord(
                query=query, mode=self.settings.mode, answer=fallback,
                fallback_used=True, digests=exc.digests,
                answer_text=store.label_text(fallback))

    # --- batched execution ---------------------------------------------

    def _answer_batch(self, task: str,
                      batch: list[TaskQuery]) -> list[PredictionRecord]:
        store = self.store
        if task == TASK_NR:
            flat = [(q.source, d, q.t) for q in batch for d in q.pool]
            evidences = batch_evidence(store, flat)
            sliced: list[Sequence[PairEvidence]] = []
            offset = 0
            for q in batch:
                sliced.append(evidences[offset:offset + len(q.pool)])
                offset += len(q.pool)
            worker = self.retrieve_nodes
            inputs = list(zip(batch, sliced))
        else:
            include_text = task == TASK_EC and self.settings.use_edge_text
            evidences = batch_evidence(
                store, [(q.source, q.destination, q.t) for q in batch],
                include_edge_text=include_text)
            worker = self.predict_link if task == TASK_LP else self.classify_edge
            inputs = list(zip(batch, evidences))
        workers = min(self.settings.max_workers, max(1, len(inputs)))
        if workers <= 1 or len(inputs) <= 1:
            records = [worker(q, ev) for q, ev in inputs]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                records = list(pool.map(lambda qe: worker(qe[0], qe[1]), inputs))
        records.sort(key=lambda r: r.query.index)
        return records

    def run(self, task: str,
            out_path: str | Path | None = None) -> list[PredictionRecord]:
        """Answer every query in the window, checkpointing per batch.

        With ``out_path`` set, completed batches are appended as they
        finish; an interrupted run restarted with the same arguments
        continues after the last complete batch and produces the same
        records as an uninterrupted run.
        """
        queries = build_queries(self.split, task, self.settings)
        done: list[PredictionRecord] = []
        if out_path is not None and Path(out_path).exists():
            done = load_records(out_path, tolerate_partial=True)
            for i, record in enumerate(done):
                if record.query != queries[i]:
                    raise ValueError(
                        f"checkpoint mismatch at record {i}: the existing "
                        f"predictions file belongs to a different run")
            if done:
                log.info("resuming after %d completed records", len(done))
        batch_size = self.settings.batch_size
        if len(done) % batch_size:
            # a crash mid-append can leave a prefix of a batch; drop it and
            # redo that whole batch so checkpoint granularity stays one batch
            keep = (len(done) // batch_size) * batch_size
            log.info("dropping %d records from an incomplete batch", len(done) - keep)
            done = done[:keep]
            dump_records(done, out_path)
        records = list(done)
        start = len(done)
        for begin in range(start, len(queries), batch_size):
            batch = queries[begin:begin + batch_size]
            answered = self._answer_batch(task, batch)
            records.extend(answered)
            if out_path is not None:
                append_records(answered, out_path)
        return records


def surrogate_link_predictor(
    gateway: Gateway, split: SplitView, settings: TaskRunSettings,
    knowledge: KnowledgeStore,
) -> Callable[[int, int, float], int]:
    """Single-pair link predictor over partial knowledge.

    Used while collecting reflection trajectories: same prompts as the
    real run, no few-shot, reflection not yet injected (it does not exist
    at that point).
    """
    runner = TaskRunner(
        gateway=gateway, split=split, settings=settings, knowledge=knowledge)

    def predict(src: int, dst: int, t: float) -> int:
        evidence = batch_evidence(split.store, [(src, dst, t)])[0]
        query = TaskQuery(
            index=0, task=TASK_LP, source=src, destination=dst, t=t, truth=0)
        return int(runner.predict_link(query, evidence).answer)

    return predict
