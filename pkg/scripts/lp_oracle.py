#!/usr/bin/env python3
"""Independent link-prediction accuracy oracle.

Recomputes, from the raw edge CSV alone, what a memorization-style
predictor (answer 1 iff the pair interacted before, extended with a
shared-neighbor check) should have answered for every query in a
predictions file, and compares the resulting accuracy with the scored
report. Deliberately brute force and dependency-free so it shares no
code with the package it audits.

Usage:
    python3 scripts/lp_oracle.py --edges edges.csv \
        --predictions predictions_lp.jsonl [--report report_lp.json]

Exits 0 when the report matches to 1e-12, 1 otherwise.
"""

import argparse
import csv
import json
import sys


def load_edges(path):
    edges = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            edges.append((float(row["ts"]), int(row["src"]), int(row["dst"])))
    edges.sort(key=lambda e: e[0])
    return edges


def predict(edges, u, v, t):
    """1 iff the pair interacted strictly before t or shares a neighbor."""
    pair = 0
    nu = set()
    nv = set()
    for ts, a, b in edges:
        if ts >= t:
            break
        if (a == u and b == v) or (a == v and b == u):
            pair += 1
        if a == u:
            nu.add(b)
        if b == u:
            nu.add(a)
        if a == v:
            nv.add(b)
        if b == v:
            nv.add(a)
    if pair > 0:
        return 1
    # a node shares every neighbor with itself
    common = len(nu) if u == v else len(nu & nv)
    return 1 if common > 0 else 0


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--edges", required=True, help="raw edges.csv")
    parser.add_argument("--predictions", required=True,
                        help="predictions jsonl from the link task")
    parser.add_argument("--report", help="scored report.json to compare against")
    args = parser.parse_args()

    edges = load_edges(args.edges)
    total = 0
    correct = 0
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if record["task"] != "lp":
                raise SystemExit(f"not a link-prediction record: {record}")
            total += 1
            expected = predict(edges, record["source"], record["destination"],
                               record["t"])
            correct += int(expected == record["truth"])
    if total == 0:
        raise SystemExit("no records")
    accuracy = correct / total
    print(f"oracle accuracy over {total} queries: {accuracy!r}")

    if args.report:
        with open(args.report, encoding="utf-8") as fh:
            reported = json.load(fh)["metrics"]["accuracy"]
        print(f"reported accuracy: {reported!r}")
        if abs(reported - accuracy) > 1e-12:
            print("MISMATCH beyond 1e-12", file=sys.stderr)
            return 1
        print("match within 1e-12")
    return 0


if __name__ == "__main__":
    sys.exit(main())
