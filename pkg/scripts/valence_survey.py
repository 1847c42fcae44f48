"""Valence analysis of Algorithm 3 state graphs for a few small SOSes."""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass, field

from soslab.harness import build_protocol
from soslab.sos import Sos, build_sos_graph, is_connected
from soslab.valence import analyze, extract_state_graph


@dataclass(frozen=True)
class Config:
    instances: tuple[tuple[str, int], ...] = field(default=(
        ("{{0},{1}}", 1),
        ("{{0},{1}}", 2),
        ("{{0},{0,1}}", 2),
        ("{{1},{1,2},{1,3},{2,3}}", 2),
    ))
    max_states: int = 200_000


def main(cfg: Config) -> None:
    print(f"{'SOS':<26} {'n':>2} {'connected':>9} {'states':>7} {'critical':>8}  axioms (async/term/resil)")
    for text, n in cfg.instances:
        sos = Sos.parse(text)
        start = time.perf_counter()
        g = extract_state_graph(build_protocol("alg3", n=n, t=0, sos=sos), max_states=cfg.max_states)
        rep = analyze(g)
        ax = "/".join("y" if rep.axioms[k].holds else "n" for k in ("asynchrony", "termination", "resilience"))
        conn = is_connected(build_sos_graph(sos))
        print(f"{text:<26} {n:>2} {str(conn):>9} {len(g.states):>7} {len(rep.critical):>8}  {ax}"
              f"   ({time.perf_counter() - start:.1f} s)")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-states", type=int, default=Config.max_states)
    main(Config(max_states=ap.parse_args().max_states))
