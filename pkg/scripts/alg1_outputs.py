"""Distribution of output sets and LeadersOutputSets shapes for Algorithm 1.

    python scripts/alg1_outputs.py --seeds 2000 --sos "{{1},{3},{1,2},{1,3},{2,3}}" --n 6 --t 1
"""

from __future__ import annotations

import argparse
import time
from collections import Counter
from dataclasses import dataclass

from soslab.harness import SeedRange, build_protocol, sweep_crash_patterns
from soslab.protocols import leaders_output_sets
from soslab.sos import Sos, format_set


@dataclass(frozen=True)
class Config:
    sos: str = "{{1},{3},{1,2},{1,3},{2,3}}"
    n: int = 6
    t: int = 1
    seeds: int = 2000


def main(cfg: Config) -> None:
    sos = Sos.parse(cfg.sos)
    p = build_protocol("alg1", n=cfg.n, t=cfg.t, sos=sos)
    outputs, shapes, crashed = Counter(), Counter(), Counter()

    def record(r):
        outputs[format_set(r.output_set)] += 1
        shapes[len(leaders_output_sets(r, p.config))] += 1
        crashed[len(r.crashed)] += 1

    start = time.perf_counter()
    rep = sweep_crash_patterns(p, cfg.t, SeedRange(range(cfg.seeds)), {}, on_run=record)
    took = time.perf_counter() - start
    print(f"walk: {' -> '.join(format_set(o) for o in p.config.walk)}")
    print(f"{rep.runs_examined} runs in {took:.1f} s")
    print("output set     runs")
    for o, k in sorted(outputs.items(), key=lambda kv: -kv[1]):
        print(f"  {o:<12} {k}")
    print("|LeadersOutputSets|:", dict(sorted(shapes.items())))
    print("crashes per run:   ", dict(sorted(crashed.items())))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sos", default=Config.sos)
    ap.add_argument("--n", type=int, default=Config.n)
    ap.add_argument("--t", type=int, default=Config.t)
    ap.add_argument("--seeds", type=int, default=Config.seeds)
    a = ap.parse_args()
    main(Config(a.sos, a.n, a.t, a.seeds))
