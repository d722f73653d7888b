"""Stage orchestration: ingest -> prep -> summarize -> reflect -> predict -> evaluate.

Every stage writes named artifacts under the run directory and records
them in ``manifest.json`` with content hashes. A stage is skipped when
its recorded input hashes match the current inputs and its outputs
still verify; ``force_regenerate`` bypasses all caching. Hashing is
content-based (never timestamps), so copied files still hit the cache,
and wall-clock fields inside artifacts are excluded so two equal runs
agree byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import zipfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from . import evaluate as ev
from .config import RunConfig
from .gateway import Gateway, HttpBackend, ReplayBackend, heuristic_mock
from .knowledge import (
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
from .statsprep import build_negative_validation_samples, prepare_knowledge_inputs
from .store import (
    DyTagStore,
    SplitView,
    chronological_split,
    import_dtgb,
    ingest_dataset,
    load_store,
    save_store,
)
from .tasks import (
    TaskRunner,
    TaskRunSettings,
    build_few_shot,
    load_records,
    surrogate_link_predictor,
)
from .tasks.prompts import default_description
from .tasks.types import FEWSHOT_MODES, TASK_EC, TASK_LP, TASK_NR

log = logging.getLogger(__name__)

MANIFEST_SCHEMA_VERSION = 1

TASK_TITLES = {
    TASK_LP: "link prediction",
    TASK_NR: "destination node retrieval",
    TASK_EC: "edge classification",
}


class PipelineError(RuntimeError):
    pass


@dataclass(frozen=True)
class PipelineResult:
    status: int
    artifacts: Dict[str, str]
    manifest_path: str


# --- content hashing ---------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def transcript_hash(path: str | Path) -> str:
    """Content hash of a transcript as a record multiset.

    Wall-clock fields are dropped and lines are hashed in sorted order:
    concurrent stages append in completion order, which is scheduling
    noise, and replay keys records by digest rather than position.
    """
    lines = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            record.pop("wall_time", None)
            lines.append(json.dumps(record, sort_keys=True,
                                    separators=(",", ":")))
    h = hashlib.sha256()
    for line in sorted(lines):
        h.update(line.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def artifact_hash(path: str | Path) -> str:
    """Content hash of one artifact.

    Zip containers (the store cache) are hashed by member content, and
    transcripts by records minus wall time; both formats embed wall
    clocks in their raw bytes, which must never affect caching.
    """
    path = Path(path)
    if path.suffix == ".npz":
        h = hashlib.sha256()
        with zipfile.ZipFile(path) as zf:
            for name in sorted(zf.namelist()):
                h.update(name.encode("utf-8"))
                h.update(zf.read(name))
        return h.hexdigest()
    if path.suffix == ".jsonl" and "transcript" in path.name:
        return transcript_hash(path)
    return _sha256(path.read_bytes())


def settings_hash(**values) -> str:
    canonical = json.dumps(values, sort_keys=True, separators=(",", ":"))
    return _sha256(canonical.encode("utf-8"))


# --- backend wiring ----------------------------------------------------------


def make_gateway(config: RunConfig) -> Gateway:
    """Backend per config; only live generation records a transcript."""
    if config.backend == "mock":
        return Gateway(heuristic_mock(), transcript_path=config.transcript_path)
    if config.backend == "http":
        backend = HttpBackend(config.endpoint,
                              api_key=os.environ.get("LLM_API_KEY"))
        return Gateway(backend, transcript_path=config.transcript_path)
    if config.backend == "replay":
        return Gateway(ReplayBackend(config.transcript_path))
    raise ValueError(f"unknown backend {config.backend!r}")


def task_settings(config: RunConfig) -> TaskRunSettings:
    return TaskRunSettings(
        model=config.model,
        mode=config.mode,
        seed=config.seed,
        temperature=config.temperature,
        use_edge_text=config.use_edge_text,
        window=config.window,
        batch_size=config.batch_size,
    )


# --- pipeline ----------------------------------------------------------------


class Pipeline:
    """Stage runner bound to one config and its run directory."""

    def __init__(self, config: RunConfig):
        self.config = config.resolved()
        self.out = Path(self.config.out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.out / "manifest.json"
        self._manifest = self._load_manifest()
        self._store: Optional[DyTagStore] = None
        self._split: Optional[SplitView] = None

    # -- paths

    def path(self, name: str) -> Path:
        return self.out / name

    @property
    def store_path(self) -> Path:
        return self.path("store.npz")

    @property
    def prep_path(self) -> Path:
        return self.path("prep.json")

    def knowledge_stage_path(self, stage: str) -> Path:
        if stage == "global":
            return self.path("knowledge_global.json")
        if stage == "local":
            return self.path("knowledge_local.json")
        return Path(self.config.knowledge_path)

    def predictions_path(self, task: str) -> Path:
        return self.path(f"predictions_{task}.jsonl")

    def report_path(self, task: str) -> Path:
        return self.path(f"report_{task}.json")

    # -- manifest

    def _load_manifest(self) -> dict:
        if self.manifest_path.exists():
            payload = json.loads(self.manifest_path.read_text(encoding="utf-8"))
            if payload.get("schema_version") == MANIFEST_SCHEMA_VERSION:
                return payload
            log.warning("manifest schema mismatch; starting fresh")
        return {
            "schema_version": MANIFEST_SCHEMA_VERSION,
            "stages": {},
            "artifacts": {},
        }

    def _save_manifest(self) -> None:
        payload = dict(self._manifest)
        payload["stages"] = {k: payload["stages"][k]
                             for k in sorted(payload["stages"])}
        payload["artifacts"] = {k: payload["artifacts"][k]
                                for k in sorted(payload["artifacts"])}
        self.manifest_path.write_text(
            json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=True) + "\n",
            encoding="utf-8")

    def _note_artifact(self, label: str, path: Path) -> None:
        rel = os.path.relpath(path, self.out)
        self._manifest["artifacts"][label] = {
            "path": rel,
            "sha256": artifact_hash(path),
        }

    def _run_stage(self, name: str, inputs: Dict[str, str],
                   outputs: Dict[str, Path], fn: Callable[[], None]) -> bool:
        """Execute one stage with content-hash caching.

        Returns True when the stage body actually ran. Outputs are
        removed before a re-run with changed inputs so stale progress
        files cannot leak into the new run; an interrupted stage with
        unchanged inputs keeps them, letting resumable stages continue.
        """
        entry = self._manifest["stages"].get(name)
        same_inputs = entry is not None and entry.get("inputs") == inputs
        resumable = same_inputs and not self.config.force_regenerate
        if resumable and entry.get("complete"):
            ok = all(
                path.exists() and artifact_hash(path) == entry["outputs"].get(label)
                for label, path in outputs.items())
            if ok:
                log.info("stage %s: cache hit, skipping", name)
                for label, path in outputs.items():
                    self._note_artifact(label, path)
                return False
            log.info("stage %s: outputs missing or changed, re-running", name)
            resumable = False  # recorded outputs no longer trustworthy
        if not resumable:
            for path in outputs.values():
                if path.exists():
                    path.unlink()
        log.info("stage %s: running", name)
        self._manifest["stages"][name] = {
            "complete": False, "inputs": inputs, "outputs": {}}
        try:
            fn()
        except Exception:
            partial = {label: artifact_hash(path)
                       for label, path in outputs.items() if path.exists()}
            self._manifest["stages"][name]["outputs"] = partial
            self._save_manifest()
            raise
        recorded = {}
        for label, path in outputs.items():
            if not path.exists():
                raise PipelineError(f"stage {name} did not produce {path}")
            recorded[label] = artifact_hash(path)
            self._note_artifact(label, path)
        self._manifest["stages"][name].update(complete=True, outputs=recorded)
        self._save_manifest()
        return True

    # -- shared state

    def _input_hash(self, path: Path, producer: str) -> str:
        if not path.exists():
            raise PipelineError(f"{path} missing; run the {producer} stage first")
        return artifact_hash(path)

    def store(self) -> DyTagStore:
        if self._store is None:
            if not self.store_path.exists():
                raise PipelineError(
                    f"{self.store_path} missing; run the ingest stage first")
            self._store = load_store(str(self.store_path))
        return self._store

    def split(self) -> SplitView:
        if self._split is None:
            self._split = chronological_split(self.store())
        return self._split

    def runtime(self, gateway: Gateway) -> AgentRuntime:
        return AgentRuntime(gateway, model=self.config.model,
                            temperature=self.config.temperature)

    def _transcript_note(self) -> None:
        path = Path(self.config.transcript_path)
        if path.exists():
            self._note_artifact("transcript", path)
            self._save_manifest()

    # -- stages

    def stage_ingest(self) -> bool:
        cfg = self.config
        inputs = {f"raw:{os.path.basename(p)}": artifact_hash(p)
                  for p in cfg.dataset_files()}
        inputs["settings"] = settings_hash(
            bipartite=cfg.bipartite, dataset_format=cfg.dataset_format)
        summary_path = self.path("dataset_summary.json")

        def body() -> None:
            if cfg.dataset_format == "canonical":
                d = cfg.dataset_dir
                store = ingest_dataset(
                    os.path.join(d, "edges.csv"),
                    os.path.join(d, "node_texts.csv"),
                    os.path.join(d, "edge_texts.csv"),
                    os.path.join(d, "labels.csv"),
                    bipartite=cfg.bipartite)
            else:
                store = import_dtgb(cfg.dataset_dir, bipartite=cfg.bipartite)
            save_store(store, str(self.store_path))
            self._store = store
            self._split = None
            split = self.split()
            summary = {
                "dataset": cfg.dataset_name,
                "num_nodes": store.num_nodes,
                "num_edges": store.num_edges,
                "num_categories": len(store.labels),
                "num_edge_texts": len(store.edge_texts),
                "bipartite": store.bipartite,
                "train_edges": len(split.train_indices),
                "valid_edges": len(split.valid_indices),
                "test_edges": len(split.test_indices),
                "timespan": [float(store.ts[0]), float(store.ts[-1])],
            }
            summary_path.write_text(
                json.dumps(summary, indent=2, sort_keys=True) + "\n",
                encoding="utf-8")

        return self._run_stage(
            "ingest", inputs,
            {"store": self.store_path, "dataset_summary": summary_path}, body)

    def stage_prep(self) -> bool:
        cfg = self.config
        inputs = {
            "store": self._input_hash(self.store_path, "ingest"),
            "settings": settings_hash(seed=cfg.seed),
        }

        def body() -> None:
            payload = prepare_knowledge_inputs(self.split(), cfg.seed)
            self.prep_path.write_text(
                json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=True)
                + "\n", encoding="utf-8")

        return self._run_stage("prep", inputs, {"prep": self.prep_path}, body)

    def _agent_settings_hash(self) -> str:
        return settings_hash(model=self.config.model,
                             temperature=self.config.temperature)

    def stage_summarize_global(self) -> bool:
        cfg = self.config
        out_path = self.knowledge_stage_path("global")
        inputs = {
            "prep": self._input_hash(self.prep_path, "prep"),
            "settings": self._agent_settings_hash(),
        }

        def body() -> None:
            prep = json.loads(self.prep_path.read_text(encoding="utf-8"))
            gateway = make_gateway(cfg)
            runtime = self.runtime(gateway)
            task_name = ", ".join(TASK_TITLES[t] for t in cfg.tasks)
            card, card_digests = run_initial_agent(
                runtime, default_description(), task_name)
            link = run_global_link_summary(runtime, card, prep)
            elabel = run_global_edge_label_summary(runtime, card, prep)
            ks = KnowledgeStore(
                dataset_card=card,
                global_link=link.knowledge,
                global_edge_label=elabel.knowledge,
            )
            ks.record_provenance("dataset_card", card_digests)
            ks.record_provenance(
                "global_link", link.structural_digests + link.text_digests)
            ks.record_provenance(
                "global_edge_label", elabel.text_digests + elabel.eld_digests)
            if link.thresholds:
                ks.thresholds[TASK_NR] = list(link.thresholds)
                ks.record_provenance(
                    f"thresholds.{TASK_NR}", link.structural_digests)
            ks.save(out_path)

        ran = self._run_stage(
            "summarize-global", inputs, {"knowledge_global": out_path}, body)
        self._transcript_note()
        return ran

    def stage_summarize_local(self) -> bool:
        cfg = self.config
        out_path = self.knowledge_stage_path("local")
        inputs = {
            "knowledge_global": self._input_hash(
                self.knowledge_stage_path("global"), "summarize-global"),
            "store": self._input_hash(self.store_path, "ingest"),
            "settings": settings_hash(
                model=cfg.model, temperature=cfg.temperature,
                local_fraction=cfg.local_fraction),
        }

        def body() -> None:
            ks = KnowledgeStore.load(self.knowledge_stage_path("global"))
            gateway = make_gateway(cfg)
            runtime = self.runtime(gateway)
            active = select_active_nodes(self.split(), cfg.local_fraction)
            profiles, digest_map = run_local_summaries(
                runtime, self.split(), ks.dataset_card, active)
            for node, profile in profiles.items():
                ks.local_profiles[node] = profile
                ks.record_provenance(f"local_profiles.{node}", digest_map[node])
            ks.save(out_path)

        ran = self._run_stage(
            "summarize-local", inputs, {"knowledge_local": out_path}, body)
        self._transcript_note()
        return ran

    def stage_reflect(self) -> bool:
        cfg = self.config
        out_path = self.knowledge_stage_path("final")
        inputs = {
            "knowledge_local": self._input_hash(
                self.knowledge_stage_path("local"), "summarize-local"),
            "store": self._input_hash(self.store_path, "ingest"),
            "settings": settings_hash(
                model=cfg.model, temperature=cfg.temperature,
                seed=cfg.seed, mode=cfg.mode),
        }

        def body() -> None:
            ks = KnowledgeStore.load(self.knowledge_stage_path("local"))
            gateway = make_gateway(cfg)
            runtime = self.runtime(gateway)
            negatives = build_negative_validation_samples(self.split(), cfg.seed)
            predict = surrogate_link_predictor(
                gateway, self.split(), task_settings(cfg), ks)
            trajectories, accuracy = collect_trajectories(
                self.split(), predict, negatives, seed=cfg.seed)
            outcome, digests, fallback = run_reflection(
                runtime, ks.global_link, trajectories, accuracy)
            if fallback:
                log.warning("reflection reply was malformed; knowledge unchanged")
            # the reflection inspects link-formation errors, so both
            # link-style tasks receive the supplement
            for task in (TASK_LP, TASK_NR):
                ks.reflection[task] = outcome
                ks.record_provenance(f"reflection.{task}", digests)
            ks.save(out_path)

        ran = self._run_stage(
            "reflect", inputs, {"knowledge": out_path}, body)
        self._transcript_note()
        return ran

    def _knowledge_for_predict(self) -> Optional[KnowledgeStore]:
        path = self.knowledge_stage_path("final")
        if path.exists():
            return KnowledgeStore.load(path)
        if self.config.mode == "gad":
            raise PipelineError(
                f"{path} missing; knowledge-guided mode needs the summarize "
                "and reflect stages first")
        return None

    def stage_predict(self, task: str) -> bool:
        cfg = self.config
        out_path = self.predictions_path(task)
        knowledge_path = self.knowledge_stage_path("final")
        inputs = {
            "store": self._input_hash(self.store_path, "ingest"),
            "settings": settings_hash(
                task=task, mode=cfg.mode, seed=cfg.seed, window=cfg.window,
                batch_size=cfg.batch_size, temperature=cfg.temperature,
                model=cfg.model, use_edge_text=cfg.use_edge_text),
        }
        if knowledge_path.exists():
            inputs["knowledge"] = artifact_hash(knowledge_path)

        def body() -> None:
            knowledge = self._knowledge_for_predict()
            gateway = make_gateway(cfg)
            settings = task_settings(cfg)
            few_shot = ()
            if cfg.mode in FEWSHOT_MODES:
                few_shot = build_few_shot(self.split(), task, settings, knowledge)
            runner = TaskRunner(gateway, self.split(), settings,
                                knowledge=knowledge, few_shot=few_shot)
            runner.run(task, out_path=out_path)

        ran = self._run_stage(
            f"predict:{task}", inputs, {f"predictions_{task}": out_path}, body)
        self._transcript_note()
        return ran

    def stage_evaluate(self, task: str) -> bool:
        cfg = self.config
        out_path = self.report_path(task)
        inputs = {
            "predictions": self._input_hash(self.predictions_path(task), "predict"),
            "store": self._input_hash(self.store_path, "ingest"),
            "settings": settings_hash(dataset=cfg.dataset_name),
        }

        def body() -> None:
            records = load_records(self.predictions_path(task))
            digest = ev.config_digest(
                cfg.dataset_name, task, cfg.mode, cfg.seed, cfg.window,
                cfg.batch_size, cfg.temperature, cfg.model)
            if task == TASK_LP:
                report = ev.score_lp(records, dataset=cfg.dataset_name,
                                     config_digest=digest)
            elif task == TASK_NR:
                report = ev.score_nr(records, dataset=cfg.dataset_name,
                                     config_digest=digest)
            else:
                report = ev.score_ec(records, label_count=len(self.store().labels),
                                     dataset=cfg.dataset_name,
                                     config_digest=digest)
            report.save(out_path)

        return self._run_stage(
            f"evaluate:{task}", inputs, {f"report_{task}": out_path}, body)

    # -- full run

    def run(self) -> PipelineResult:
        """All stages in order; a stage failure stops the run with the
        manifest marking the failed stage incomplete."""
        try:
            if self.config.force_regenerate and self.config.backend != "replay":
                # every recording stage is about to re-run, so the
                # append-only transcript starts over instead of doubling
                transcript = Path(self.config.transcript_path)
                if transcript.exists():
                    transcript.unlink()
            self.stage_ingest()
            self.stage_prep()
            self.stage_summarize_global()
            self.stage_summarize_local()
            self.stage_reflect()
            for task in self.config.tasks:
                self.stage_predict(task)
            reports = []
            for task in self.config.tasks:
                self.stage_evaluate(task)
                reports.append(ev.EvalReport.load(self.report_path(task)))
            table_path = self.path("reports.txt")
            table_path.write_text(ev.render_report_table(reports) + "\n",
                                  encoding="utf-8")
            self._note_artifact("reports_table", table_path)
            self._save_manifest()
        except Exception:
            log.exception("pipeline failed; partial artifacts retained in %s",
                          self.out)
            return PipelineResult(1, self._artifact_paths(), str(self.manifest_path))
        return PipelineResult(0, self._artifact_paths(), str(self.manifest_path))

    def _artifact_paths(self) -> Dict[str, str]:
        return {label: str(self.out / entry["path"])
                for label, entry in sorted(self._manifest["artifacts"].items())}


def run_pipeline(config: RunConfig) -> PipelineResult:
    return Pipeline(config).run()
