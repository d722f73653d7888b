#!/usr/bin/env python3
"""Regenerate the committed replay regression fixture.

Runs the full pipeline (scripted deterministic backend) on a small
synthetic dataset and freezes the transcript plus every downstream
artifact under tests/fixtures/replay/. The regression test replays the
transcript and requires byte-identical knowledge and reports, so this
script should only be re-run when an intentional behavior change makes
the frozen artifacts stale; commit the refreshed fixture with the
change that caused it.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from dytag import fixtures  # noqa: E402
from dytag.config import RunConfig  # noqa: E402
from dytag.pipeline import run_pipeline  # noqa: E402
from dytag.store import export_dataset  # noqa: E402

FIXTURE = Path(__file__).resolve().parents[1] / "tests" / "fixtures" / "replay"

# window 16 w/ all three tasks = 32 lp + 16 nr + 16 ec = 64 queries
SETTINGS = dict(seed=7, window=16, batch_size=4, mode="gad",
                tasks=("lp", "nr", "ec"))


def main() -> int:
    if FIXTURE.exists():
        shutil.rmtree(FIXTURE)
    (FIXTURE / "data").mkdir(parents=True)
    (FIXTURE / "expected").mkdir()

    store = fixtures.clustered_store(11)
    export_dataset(store, str(FIXTURE / "data"))

    with tempfile.TemporaryDirectory() as tmp:
        config = RunConfig(
            dataset_name="replay-fixture",
            dataset_dir=str(FIXTURE / "data"),
            backend="mock",
            out_dir=tmp,
            **SETTINGS,
        )
        result = run_pipeline(config)
        if result.status != 0:
            print("pipeline failed; fixture not written", file=sys.stderr)
            return 1
        tmp_path = Path(tmp)
        shutil.copy(tmp_path / "transcript.jsonl", FIXTURE / "transcript.jsonl")
        for name in ["knowledge.json",
                     "predictions_lp.jsonl", "predictions_nr.jsonl",
                     "predictions_ec.jsonl",
                     "report_lp.json", "report_nr.json", "report_ec.json"]:
            shutil.copy(tmp_path / name, FIXTURE / "expected" / name)

    (FIXTURE / "settings.json").write_text(
        json.dumps({"dataset_name": "replay-fixture", **SETTINGS},
                   indent=2, sort_keys=True) + "\n",
        encoding="utf-8")

    total = sum(p.stat().st_size for p in FIXTURE.rglob("*") if p.is_file())
    print(f"fixture written to {FIXTURE} ({total / 1024:.0f} KiB)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
