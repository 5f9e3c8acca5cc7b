"""Shared construction of the coded alphabet and its derived objects.

Building the quotient graph, the coding and the two alphabets is the
expensive common prefix of most experiments, so results are memoized per
parameter tuple.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import measurecone as mc
from . import mixlab as ml
from . import splitflow as sf
from . import symcode as sc
from . import thermo as th
from . import tracknet as tn

FIXTURES = Path(__file__).resolve().parent / "fixtures"
FLAGSHIP = "genus2_type4"
CORPUS = ("genus2_type22", "genus2_type4", "genus1_type2_punct2", "genus2_type13")


def fixture_path(name: str) -> Path:
    return FIXTURES / (name if name.endswith(".tt") else f"{name}.tt")


def load_fixture(name: str) -> tn.TrainTrack:
    return tn.load(fixture_path(name))


@dataclass
class CodedAlphabet:
    track: tn.TrainTrack
    graph: sf.QuotientGraph
    coding: sc.Coding
    S: list
    A: list
    Bs: list
    cell: th.Cell

    @property
    def omegas(self) -> np.ndarray:
        """``log lambda_1`` per letter, the roof on periodic points."""
        return np.array([math.log(th.pf_eigen(B).lam) for B in self.Bs])

    @property
    def returns(self) -> np.ndarray:
        return np.array([a.ret for a in self.A])


def base_cell(coding: sc.Coding) -> th.Cell:
    """Normalized image of the first marked sequence: the domain ``C``."""
    s1 = coding.marked[0]
    rays = mc.vertex_cycle_matrix(coding.end_track(s1))
    return th.cone_cell(coding.constraint.matrix(), np.asarray(s1.matrix, dtype=float), rays)


@functools.lru_cache(maxsize=8)
def coded_alphabet(name: str = FLAGSHIP, loop_cap: int = 10, marks: int = 2, s_cap: int = 16,
                   max_return: int = 3) -> CodedAlphabet:
    track = load_fixture(name)
    graph, _ = sf.build_quotient(track)
    coding = sc.make_coding(graph, loop_cap, marks=marks)
    S = sc.build_alphabet_S(coding, s_cap)
    A = sc.build_alphabet_A(S, 1, max_return=max_return)
    Bs = [a.float_matrix() for a in A]
    return CodedAlphabet(track, graph, coding, S, A, Bs, base_cell(coding))


@dataclass
class FlowSetup:
    flow: ml.SuspensionFlow
    shift: th.RoofShift
    density: th.DensityEstimate
    weights: np.ndarray


def fixture_flow(alph: CodedAlphabet, dt: float, seed: int = 0) -> FlowSetup:
    """Suspension flow over the letter shift: two-letter roof and letter
    weights from the invariant density of the base map."""
    rng = np.random.default_rng(seed)
    dens = th.acip(alph.Bs, alph.cell, rng=rng)
    w = ml.letter_weights(alph.Bs, dens, alph.cell, rng=rng)
    shift = th.letter_shift(alph.Bs)
    return FlowSetup(ml.SuspensionFlow(shift.roof, w, dt), shift, dens, w)


def heaviest_cylinder(weights: np.ndarray, size: int = 5) -> tuple[int, ...]:
    return tuple(int(i) for i in np.argsort(-np.asarray(weights), kind="stable")[:size])
