#!/usr/bin/env python3
"""Writes synthetic SNDlib-native topologies with the node and link counts of
cost266, geant, janos-us and nobel-germany.

The real SNDlib files are not redistributed here. Each stand-in places nodes
uniformly in the unit square, connects them with a Euclidean minimum spanning
tree, closes every bridge with the shortest link across it (backbones
have no single-link cuts) and then adds the shortest remaining node pairs until
the link count matches. Drop the real files next to these to use them instead.
"""

import argparse
import itertools
import math
import pathlib
import random

SIZES = {
    "cost266": (37, 57),
    "geant": (22, 36),
    "janos-us": (26, 84),
    "nobel-germany": (17, 26),
}


def build(nodes, links, rng):
    pts = [(rng.random(), rng.random()) for _ in range(nodes)]
    dist = lambda a, b: math.dist(pts[a], pts[b])
    # Prim's algorithm for the spanning tree.
    in_tree = {0}
    chosen = []
    while len(in_tree) < nodes:
        a, b = min(
            ((a, b) for a in in_tree for b in range(nodes) if b not in in_tree),
            key=lambda e: dist(*e),
        )
        in_tree.add(b)
        chosen.append((min(a, b), max(a, b)))
    while (cut := bridge(nodes, chosen)) is not None:
        side = reachable(nodes, [e for e in chosen if e != cut], cut[0])
        chosen.append(min(
            ((min(a, b), max(a, b)) for a in side for b in range(nodes)
             if b not in side and (min(a, b), max(a, b)) not in chosen),
            key=lambda e: dist(*e),
        ))
    if len(chosen) > links:
        raise SystemExit(f"{len(chosen)} links needed to remove bridges, budget {links}")
    rest = sorted(
        (e for e in itertools.combinations(range(nodes), 2) if e not in set(chosen)),
        key=lambda e: dist(*e),
    )
    chosen += rest[: links - len(chosen)]
    return pts, chosen


def reachable(nodes, edges, start):
    adj = {v: [] for v in range(nodes)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen, stack = {start}, [start]
    while stack:
        for w in adj[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def bridge(nodes, edges):
    for e in edges:
        if len(reachable(nodes, [f for f in edges if f != e], 0)) < nodes:
            return e
    return None


def render(name, pts, chosen):
    out = [
        "?SNDlib native format; type: network; version: 1.0",
        f"# network {name}",
        "# synthetic stand-in with the node and link counts of the SNDlib original",
        "",
        "NODES (",
    ]
    out += [f"  N{i} ( {x * 100:.2f} {y * 100:.2f} )" for i, (x, y) in enumerate(pts)]
    out += [")", "", "LINKS ("]
    out += [
        f"  L{k + 1} ( N{a} N{b} ) 0.00 0.00 0.00 0.00 ( 1.00 1.00 )"
        for k, (a, b) in enumerate(chosen)
    ]
    out += [")", ""]
    return "\n".join(out)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=pathlib.Path(__file__).resolve().parent.parent / "data" / "topologies")
    ap.add_argument("--seed", type=int, default=2023)
    args = ap.parse_args()
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, (name, (n, m)) in enumerate(SIZES.items()):
        rng = random.Random(args.seed + i)
        pts, chosen = build(n, m, rng)
        (out / f"{name}.txt").write_text(render(name, pts, chosen))
        print(f"{name}: {n} nodes, {len(chosen)} links")


if __name__ == "__main__":
    main()
