"""Two-level symbolic coding of splitting sequences.

Level one (``LetterS``) cuts a splitting sequence at occurrences of marked
sequences: a letter starts with marked sequence ``i``, continues through
numbered first-return loops at the base track and ends with marked sequence
``m``; no marked sequence starts at an interior loop boundary.  Level two
(``LetterA``) groups level-one letters into first returns to a distinguished
marker class.  Every ``LetterA`` is a loop at the base track, so its carrying
matrix ``B`` acts on the weight space of a single track.

Roof functions are logarithms of mass ratios:

* ``roof_rho``   one split step,
* ``roof_phi``   the non-overlapping part of a ``LetterS``,
* ``roof_omega`` a whole ``LetterA``; on the Perron-Frobenius direction of
  ``B`` it equals ``log lambda_1(B)``.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy

from . import measurecone as mc
from . import splitflow as sf
from . import tracknet as tn
from .splitflow import Path, QuotientGraph
from .tracknet import TrainTrack


class CodingError(ValueError):
    pass


class NoMarkedSequences(CodingError):
    pass


class EmptyClass(CodingError):
    pass


class CorpusTooSmall(CodingError):
    pass


# ----------------------------------------------------------- affine spaces
def _qmat(rows) -> sympy.Matrix:
    return sympy.Matrix([[sympy.Rational(Fraction(x).numerator, Fraction(x).denominator) for x in r]
                         for r in rows])


@dataclass(frozen=True)
class AffineConstraint:
    """A linear subspace ``W`` of branch-weight space, given by a spanning set
    (rows), and optionally a subspace ``W*`` on the tangential side."""
    basis: tuple
    dual_basis: tuple | None = None

    @classmethod
    def full(cls, track: TrainTrack) -> "AffineConstraint":
        return cls(tuple(tuple(v) for v in mc.solution_space(track)))

    @classmethod
    def hyperplane(cls, track: TrainTrack, functional: Sequence) -> "AffineConstraint":
        """``V`` intersected with the kernel of ``functional``."""
        A = np.vstack([track.switch_matrix, np.array([functional], dtype=object)])
        return cls(tuple(tuple(v) for v in mc.nullspace_basis(A)))

    @property
    def dim(self) -> int:
        return _qmat(self.basis).rank() if self.basis else 0

    def matrix(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.basis]).T

    def equations(self) -> list[list[Fraction]]:
        """Rows whose common kernel is ``W``."""
        return mc.nullspace_basis(np.array(self.basis, dtype=object))

    def contains(self, other: "AffineConstraint") -> bool:
        return subspace_contains(self.basis, other.basis)


def subspace_contains(big: Sequence, small: Sequence) -> bool:
    """Exact rational test ``span(small) <= span(big)``."""
    if not small:
        return True
    if not big:
        return all(all(x == 0 for x in v) for v in small)
    A = _qmat(big)
    return A.rank() == _qmat(list(big) + list(small)).rank()


def image_basis(M: np.ndarray, basis: Sequence) -> list[list]:
    Mo = np.asarray(M, dtype=object)
    return [list(Mo.dot(np.array([Fraction(x) for x in v], dtype=object))) for v in basis]


def affine_feasible(M: np.ndarray, end: TrainTrack, W: AffineConstraint, eps: float = mc.LP_EPS) -> bool:
    """Is there a positive transverse measure ``mu`` on ``end`` with
    ``M mu`` in ``W``?  Maximizes the least branch weight by LP."""
    p = end.num_branches
    eqs = [list(map(float, r)) for r in end.switch_matrix]
    Wm = np.array([[float(x) for x in r] for r in W.equations()]) if W.equations() else np.zeros((0, p))
    if Wm.size:
        eqs += list(Wm @ np.asarray(M, dtype=float))
    A = np.array(eqs, dtype=float)
    # scale rows so that the LP is well conditioned for long words
    norms = np.maximum(np.abs(A).max(axis=1, initial=0.0), 1e-300)
    return mc.recurrence_margin(A / norms[:, None]) > eps


# -------------------------------------------------------------- the coding
@dataclass
class Coding:
    graph: QuotientGraph
    base: TrainTrack
    k: int
    marked: list[Path]
    loops: list[Path]
    constraint: AffineConstraint

    @property
    def p(self) -> int:
        return self.base.num_branches

    def marker_of(self, path: Path) -> int | None:
        """1-based index of the marked sequence ``path`` starts with."""
        for i, s in enumerate(self.marked, start=1):
            if path.labels[: self.k] == s.labels:
                return i
        return None

    def end_track(self, path: Path) -> TrainTrack:
        return end_track(self.graph, path)


def end_track(graph: QuotientGraph, path: Path) -> TrainTrack:
    """The numbered endpoint of ``path`` in base-transported numbering."""
    rep = graph.reps[path.end]
    return tn.relabel_numbers(rep, {r: n for n, r in enumerate(path.perm, start=1)})


def find_marked_sequences(graph: QuotientGraph, loops: Sequence[Path], count: int,
                          k_max: int = 12) -> tuple[int, list[Path]]:
    """Least ``k`` such that ``count`` distinct length-``k`` loop prefixes have
    carrying matrices positive on the vertex cycles of their endpoints.

    Prefixes are ranked by how many loops start with them, then by label.
    """
    for k in range(1, k_max + 1):
        freq = Counter(l.labels[:k] for l in loops if len(l) >= k)
        ranked = sorted(freq, key=lambda lab: (-freq[lab], lab))
        good = []
        for lab in ranked:
            P = sf.walk(graph, lab)
            if sf.positive_on_vertex_cycles(P.matrix, end_track(graph, P)):
                good.append(P)
                if len(good) == count:
                    return k, good
    raise NoMarkedSequences(f"fewer than {count} positive marked sequences up to length {k_max}")


def make_coding(graph: QuotientGraph, loop_cap: int, marks: int = 2,
                constraint: AffineConstraint | None = None) -> Coding:
    loops = sf.first_return_loops(graph, loop_cap)
    k, marked = find_marked_sequences(graph, loops, marks)
    base = graph.reps[graph.base]
    return Coding(graph, base, k, marked, loops, constraint or AffineConstraint.full(base))


@dataclass(frozen=True)
class LetterS:
    loops: tuple  # Paths; the first starts with marked sequence i
    i: int
    m: int
    matrix: np.ndarray = field(compare=False, hash=False, repr=False)  # loops only
    full_matrix: np.ndarray = field(compare=False, hash=False, repr=False)  # including the suffix
    constraint: AffineConstraint = field(compare=False, hash=False, repr=False, default=None)

    @property
    def labels(self) -> tuple:
        return tuple(lab for l in self.loops for lab in l.labels)

    @property
    def steps(self) -> int:
        """Length of the non-overlapping part (``s - k``)."""
        return sum(len(l) for l in self.loops)

    @property
    def cls(self) -> tuple[int, int]:
        return (self.i, self.m)


def build_alphabet_S(coding: Coding, cap: int, constraint: AffineConstraint | None = None) -> list[LetterS]:
    """All level-one letters with at most ``cap`` split steps in total,
    ordered by (length, labels, suffix marker).

    A letter is a chain of loops followed by a marked sequence.  The first
    loop starts with a marked sequence; no later loop does; the total length
    is at least ``2k``; and some positive measure on the final track is
    carried into the constraint subspace.
    """
    if not coding.marked:
        raise NoMarkedSequences("no marked sequences")
    W = constraint or coding.constraint
    k = coding.k
    starters = [(l, coding.marker_of(l)) for l in coding.loops if coding.marker_of(l)]
    fillers = [l for l in coding.loops if coding.marker_of(l) is None]
    ends = [(m, coding.end_track(s)) for m, s in enumerate(coding.marked, start=1)]
    out: list[LetterS] = []

    def emit(chain, i, M):
        steps = sum(len(l) for l in chain)
        if steps + k > cap or steps + k < 2 * k:
            return
        for (m, end), s in zip(ends, coding.marked):
            F = M.dot(s.matrix)
            if W.dim < mc.dimension(coding.base) and not affine_feasible(F, end, W):
                continue
            out.append(LetterS(tuple(chain), i, m, M, F, W))

    def grow(chain, i, M, steps):
        emit(chain, i, M)
        for f in fillers:
            if steps + len(f) + k > cap:
                continue
            grow(chain + [f], i, M.dot(f.matrix), steps + len(f))

    for l, i in starters:
        if len(l) + k <= cap:
            grow([l], i, l.matrix, len(l))
    out.sort(key=lambda x: (x.steps, x.labels, x.m))
    return out


def transition_allowed(x: LetterS, y: LetterS) -> bool:
    """Overlap of the marked sequences plus nesting of constraint subspaces:
    ``B_x W_y`` inside ``W_x`` and, on the tangential side,
    ``B_x^T W*_x`` inside ``W*_y``."""
    if x.m != y.i:
        return False
    Wx, Wy = x.constraint, y.constraint
    if Wx is not None and Wy is not None:
        if not subspace_contains(Wx.basis, image_basis(x.matrix, Wy.basis)):
            return False
        if Wx.dual_basis is not None and Wy.dual_basis is not None:
            pushed = image_basis(np.asarray(x.matrix, dtype=object).T, Wx.dual_basis)
            if not subspace_contains(Wy.dual_basis, pushed):
                return False
        elif Wy.dual_basis is not None:
            return False
    return True


@dataclass(frozen=True)
class LetterA:
    letters: tuple  # LetterS
    matrix: np.ndarray = field(compare=False, hash=False, repr=False)

    @property
    def ret(self) -> int:
        return len(self.letters)

    @property
    def labels(self) -> tuple:
        return tuple(lab for y in self.letters for lab in y.labels)

    @property
    def steps(self) -> int:
        return sum(y.steps for y in self.letters)

    def float_matrix(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=float)


def build_alphabet_A(S: Sequence[LetterS], i: int = 1, cap: int | None = None,
                     max_return: int | None = None) -> list[LetterA]:
    """First-return words at marker class ``i``: start in some ``S^{i,j}``,
    end in some ``S^{j,i}``, no interior letter in ``S^{j,i}``.

    ``cap`` bounds the total number of split steps and ``max_return`` the
    number of level-one letters; at least one of them must be given.
    """
    if cap is None and max_return is None:
        raise ValueError("give a step cap or a return-length cap")
    first = [y for y in S if y.i == i]
    if not first or not any(y.m == i for y in S):
        raise EmptyClass(f"no letters start or end in class {i}")
    cap = math.inf if cap is None else cap
    max_return = math.inf if max_return is None else max_return
    succ = {id(x): [y for y in S if transition_allowed(x, y)] for x in S}
    out: list[LetterA] = []

    def grow(word, M, steps):
        last = word[-1]
        if last.m == i:
            out.append(LetterA(tuple(word), M))
            return
        if len(word) >= max_return:
            return
        for y in succ[id(last)]:
            if steps + y.steps <= cap:
                grow(word + [y], M.dot(y.matrix), steps + y.steps)

    for y in first:
        if y.steps <= cap:
            grow([y], y.matrix, y.steps)
    out.sort(key=lambda a: (a.ret, a.steps, a.labels))
    return out


# ------------------------------------------------------------------ roofs
def _mass(v) -> float:
    return float(sum(v))


def roof_rho(mu, E: np.ndarray) -> float:
    """``log(mass(E mu) / mass(mu))`` for one split step ``E``."""
    mu = np.asarray(mu, dtype=float)
    m1 = _mass(mu)
    if m1 <= 0:
        raise mc.ZeroMass("measure has no mass on the split track")
    return math.log(_mass(np.asarray(E, dtype=float) @ mu) / m1)


def roof_rho_masses(mass_before: float, mass_after: float) -> float:
    if mass_after <= 0 or mass_before <= 0:
        raise mc.ZeroMass("zero mass")
    return math.log(mass_before / mass_after)


def _log_mass_ratio(M: np.ndarray, mu) -> float:
    vals = list(mu)
    if all(isinstance(v, (int, Fraction)) for v in vals):
        num = sum(np.asarray(M, dtype=object).dot(np.array(vals, dtype=object)))
        den = sum(vals)
        if den <= 0:
            raise mc.ZeroMass("zero mass")
        return math.log(Fraction(num) / Fraction(den))
    mu = np.asarray(vals, dtype=float)
    den = mu.sum()
    if den <= 0:
        raise mc.ZeroMass("zero mass")
    return math.log(float((np.asarray(M, dtype=float) @ mu).sum()) / den)


def roof_phi(y: LetterS, mu) -> float:
    """Sum of the step roofs over the non-overlapping part of ``y``; ``mu`` is
    the measure on the base track reached after those steps."""
    return _log_mass_ratio(y.matrix, mu)


def roof_omega(x: LetterA, mu) -> float:
    """Roof of a level-two letter at the future point ``mu`` in the base cell."""
    return _log_mass_ratio(x.matrix, mu)


def h_value(mu, x0_mass_matrix: np.ndarray) -> float:
    """``log`` of the mass of ``mu`` pushed to the start track."""
    return math.log(float((np.asarray(x0_mass_matrix, dtype=float) @ np.asarray(mu, dtype=float)).sum()))


# -------------------------------------------------------------- variation
def cylinder_phi_range(y0: LetterS, future: Sequence[LetterS], coding: Coding) -> tuple[Fraction, Fraction]:
    """Exact extreme values of ``mass(M_y0 mu) / mass(mu)`` over normalized
    ``mu`` in the cylinder determined by ``future``.

    The cylinder is the cone spanned by the images of the vertex cycles of
    the last track; a ratio of linear functions is extremal at vertices.
    """
    M = np.eye(coding.p, dtype=object)
    for y in future:
        M = M.dot(y.matrix)
    last_m = future[-1].m if future else y0.m
    s = coding.marked[last_m - 1]
    M = M.dot(s.matrix)
    R = np.array(mc.extreme_rays(coding.end_track(s).switch_matrix), dtype=object).T
    gens = M.dot(R)
    img = np.asarray(y0.matrix, dtype=object).dot(gens)
    ratios = [Fraction(int(img[:, j].sum()), int(gens[:, j].sum())) for j in range(gens.shape[1])]
    return min(ratios), max(ratios)


def variation(words: Sequence[Sequence[LetterS]], n: int, coding: Coding) -> float:
    """``var_n`` of ``phi`` over the corpus: the largest oscillation of
    ``phi`` on the ``n``-cylinders of the corpus words."""
    if not words or any(len(w) < n for w in words):
        raise CorpusTooSmall(f"need words of length >= {n}")
    best = 0.0
    for w in words:
        if n == 0:
            raise CorpusTooSmall("n must be positive")
        lo, hi = cylinder_phi_range(w[0], w[1:n], coding)
        best = max(best, math.log1p(float((hi - lo) / lo)))
    return best


def variation_series(words: Sequence[Sequence[LetterS]], coding: Coding, depth: int) -> list[float]:
    """``var_n`` for ``n = 1..depth``."""
    return [variation(words, n, coding) for n in range(1, depth + 1)]


def random_words(S: Sequence[LetterS], length: int, count: int, rng: np.random.Generator) -> list[list[LetterS]]:
    """Random admissible level-one words (uniform choice among successors)."""
    succ = {id(x): [y for y in S if transition_allowed(x, y)] for x in S}
    out = []
    while len(out) < count:
        w = [S[int(rng.integers(len(S)))]]
        while len(w) < length:
            nxt = succ[id(w[-1])]
            if not nxt:
                break
            w.append(nxt[int(rng.integers(len(nxt)))])
        if len(w) == length:
            out.append(w)
    return out


# ------------------------------------------------------------------- dumps
def alphabet_records(A: Sequence[LetterA]) -> list[dict]:
    from .thermo import pf_eigen

    recs = []
    for idx, x in enumerate(A):
        pf = pf_eigen(x.float_matrix())
        recs.append({
            "id": idx,
            "word": list(x.labels),
            "class": [x.letters[0].i, x.letters[-1].m],
            "return_length": x.ret,
            "B": [[int(v) for v in row] for row in np.asarray(x.matrix)],
            "log_lambda1": math.log(pf.lam),
            "omega_pf": roof_omega(x, pf.right),
        })
    return recs
