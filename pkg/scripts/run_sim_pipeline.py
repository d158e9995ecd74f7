#!/usr/bin/env python3
"""Run one simulated deletion study end to end and print the key numbers.

Drives the probe CLI in-process through every stage: ingest a tree bank,
generate experiment runs, answer them with a simulated agent, classify the
deletions, compute per-run metrics, reconstruct latent trees from the pooled
spans, and test the constituent rate against its random-span chance model.
All artifacts and their manifest sidecars land in --out; rerunning with the
same seed reproduces them byte for byte.

Example:
    python3 scripts/run_sim_pipeline.py --out /tmp/study \
        --agent "mix(parent=0.8,random-span=0.15,other=0.05)" --runs 10
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from delprobe.cli import main as probe  # noqa: E402
from delprobe.manifest import read_csv  # noqa: E402

REPO = Path(__file__).resolve().parents[1]


def stage(*argv) -> None:
    code = probe([str(a) for a in argv])
    if code != 0:
        raise SystemExit(code)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trees", default=REPO / "fixtures/en_large.trees",
                        help="bracketed tree file to ingest")
    parser.add_argument("--lang", default="en", choices=["en", "zh"])
    parser.add_argument("--experiment", default="1a",
                        choices=["1a", "1b", "2"])
    parser.add_argument("--agent", default="node",
                        help="simulated agent spec, e.g. node or "
                             "mix(parent=0.8,random-span=0.15,other=0.05)")
    parser.add_argument("--runs", type=int, default=5)
    parser.add_argument("--trials-per-run", type=int, default=24)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args()

    out = Path(args.out)
    stage("ingest", "--trees", args.trees, "--lang", args.lang,
          "--out", out, "--seed", args.seed, "--quiet")
    stage("gen", "--experiment", args.experiment,
          "--bank", out / "bank.jsonl", "--runs", args.runs,
          "--trials-per-run", args.trials_per_run,
          "--out", out, "--seed", args.seed, "--quiet")
    stage("respond", "--backend", f"sim:{args.agent}",
          "--trials", out / "trials.jsonl",
          "--out", out, "--seed", args.seed, "--quiet")
    stage("classify", "--responses", out / "responses.jsonl",
          "--trials", out / "trials.jsonl",
          "--out", out, "--seed", args.seed, "--quiet")
    stage("analyze", "--classified", out / "classified.jsonl",
          "--trials", out / "trials.jsonl",
          "--out", out, "--seed", args.seed, "--quiet")
    stage("reconstruct", "--classified", out / "classified.jsonl",
          "--trials", out / "trials.jsonl",
          "--out", out, "--seed", args.seed, "--quiet")
    stage("stats", "--metric", "constituent_rate",
          "--classified", out / "classified.jsonl",
          "--trials", out / "trials.jsonl",
          "--out", out, "--seed", args.seed, "--quiet")

    _, rows = read_csv(out / "metrics.csv")
    print(f"agent {args.agent}, {len(rows)} runs "
          f"of {args.trials_per_run} trials:")
    for row in rows:
        print(f"  run {row['run_id']}: constituent {row['constituent_rate']} "
              f"node_ratio {row['node_ratio']} "
              f"parent_ratio {row['parent_ratio']}")

    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    for entry in report["reports"]:
        print(f"{entry['metric']}: observed {entry['observed']:.4f} "
              f"chance {entry['chance_mean']:.4f} p {entry['p_raw']}")
    print(f"artifacts and manifests: {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
