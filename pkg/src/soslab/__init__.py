"""Simulator and analysis toolkit for SOS (set of output sets) tasks."""

from .sos import Sos, build_sos_graph, construct_walk, decide_solvability

__all__ = ["Sos", "build_sos_graph", "construct_walk", "decide_solvability"]
