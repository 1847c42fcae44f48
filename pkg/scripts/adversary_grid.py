"""Freezing adversary against Algorithm 2 just below the lower bound and at the
algorithm's own n, over a grid of (d, t)."""

from __future__ import annotations

import argparse
from dataclasses import dataclass

from soslab.adversary import freeze_adversary
from soslab.harness import build_protocol
from soslab.sos import disagreement_lower_bound, disagreement_upper_bound_n, format_set


@dataclass(frozen=True)
class Config:
    max_d: int = 4
    max_t: int = 4
    seeds: int = 50


def attack(d: int, t: int, n: int, relaxed: bool, seeds: int) -> tuple[int, str]:
    values = tuple(range(1, d + 1))
    p = build_protocol("alg2", n=n, t=t, d=d, values=values, relaxed=relaxed)
    _, canonical = freeze_adversary(p, t, d, values)
    wins = canonical.violated + sum(freeze_adversary(p, t, d, values, seed=s)[1].violated
                                    for s in range(seeds))
    return wins, format_set(canonical.output_set)


def main(cfg: Config) -> None:
    print(f"{'d':>2} {'t':>2} {'lower':>5} {'upper':>5}   below-bound wins   at-upper wins")
    for d in range(1, cfg.max_d + 1):
        for t in range(0, cfg.max_t + 1):
            lo, hi = disagreement_lower_bound(d, t), disagreement_upper_bound_n(d, t)
            below = "-"
            if lo > 1:
                wins, out = attack(d, t, lo - 1, True, cfg.seeds)
                below = f"{wins}/{cfg.seeds + 1} ({out})"
            wins, _ = attack(d, t, hi, False, cfg.seeds)
            print(f"{d:>2} {t:>2} {lo:>5} {hi:>5}   {below:<18} {wins}/{cfg.seeds + 1}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-d", type=int, default=Config.max_d)
    ap.add_argument("--max-t", type=int, default=Config.max_t)
    ap.add_argument("--seeds", type=int, default=Config.seeds)
    a = ap.parse_args()
    main(Config(a.max_d, a.max_t, a.seeds))
