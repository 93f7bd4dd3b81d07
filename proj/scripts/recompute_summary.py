#!/usr/bin/env python3
"""Recomputes the per-topology, per-method summary from an experiment records CSV.

With --check SUMMARY the result is compared against a summary CSV written by
`rbb experiment`: counts and fractions must match exactly, the mean relative
improvement and median step time to 1e-12 relative. Exits 1 on any mismatch.
"""

import argparse
import csv
import math
import statistics
import sys

RBB_METHODS = {"rbb", "rbb+ls"}


def recompute(records_path):
    groups = {}
    with open(records_path, newline="") as f:
        for row in csv.DictReader(f):
            key = (row["topology"], row["method"])
            g = groups.setdefault(key, {"ok": [], "failed": 0})
            if row["error"]:
                g["failed"] += 1
            else:
                g["ok"].append(row)
    out = []
    for (topology, method), g in groups.items():
        ok = g["ok"]
        n = len(ok)
        initial = [float(r["initial"]) for r in ok]
        final = [float(r["final"]) for r in ok]
        out.append({
            "topology": topology,
            "method": method,
            "samples": n,
            "failed": g["failed"],
            "mean_relative_improvement": math.fsum((i - f) / i for i, f in zip(initial, final)) / n if n else 0.0,
            "fraction_improved": sum(f < i for i, f in zip(initial, final)) / n if n else 0.0,
            "fraction_below_one": sum(f < 1.0 for f in final) / n if n else 0.0,
            "median_step_ms": statistics.median(float(r["step_ms"]) for r in ok)
            if n and method in RBB_METHODS else 0.0,
        })
    return out


def close(a, b, rel):
    return a == b or abs(a - b) <= rel * max(abs(a), abs(b))


def check(recomputed, summary_path):
    with open(summary_path, newline="") as f:
        emitted = {(r["topology"], r["method"]): r for r in csv.DictReader(f)}
    problems = []
    if set(emitted) != {(r["topology"], r["method"]) for r in recomputed}:
        problems.append("summary rows do not match the record groups")
    for r in recomputed:
        e = emitted.get((r["topology"], r["method"]))
        if e is None:
            continue
        where = f"{r['topology']}/{r['method']}"
        for key in ("samples", "failed"):
            if int(e[key]) != r[key]:
                problems.append(f"{where} {key}: {e[key]} vs {r[key]}")
        for key in ("fraction_improved", "fraction_below_one"):
            if float(e[key]) != r[key]:
                problems.append(f"{where} {key}: {e[key]} vs {r[key]!r}")
        for key in ("mean_relative_improvement", "median_step_ms"):
            if not close(float(e[key]), r[key], 1e-12):
                problems.append(f"{where} {key}: {e[key]} vs {r[key]!r}")
    return problems


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("records")
    ap.add_argument("--check", metavar="SUMMARY")
    args = ap.parse_args()
    rows = recompute(args.records)
    if args.check:
        problems = check(rows, args.check)
        for p in problems:
            print(p, file=sys.stderr)
        print(f"{len(rows)} summary rows, {len(problems)} mismatches")
        return 1 if problems else 0
    w = csv.DictWriter(sys.stdout, fieldnames=list(rows[0]) if rows else ["topology"])
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return 0


if __name__ == "__main__":
    sys.exit(main())
