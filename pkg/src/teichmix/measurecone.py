"""Transverse and tangential measure cones of a train track.

Extreme rays are computed exactly over the integers with the double
description method; a brute-force enumeration over supports is kept as an
independent oracle.  Everything else works on float or ``Fraction`` vectors
indexed by branch number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy
from scipy.optimize import linprog

from .tracknet import TrainTrack

LP_EPS = 1e-9


class ConeError(ValueError):
    pass


class ZeroMass(ConeError):
    pass


class NonPositiveBase(ConeError):
    pass


class NotNormalized(ConeError):
    pass


class BranchMismatch(ConeError):
    pass


TRANSVERSE = "transverse"
TANGENTIAL = "tangential"
SIGNED_TANGENT = "signed-tangent"


@dataclass(frozen=True)
class WeightVector:
    values: tuple  # indexed by branch number - 1
    kind: str = TRANSVERSE

    def array(self) -> np.ndarray:
        return np.array([float(v) for v in self.values])

    def serialize(self) -> list[str]:
        return [_fmt(v) for v in self.values]

    @classmethod
    def parse(cls, items: Sequence[str], kind: str = TRANSVERSE) -> "WeightVector":
        return cls(tuple(Fraction(s) for s in items), kind)


def _fmt(v) -> str:
    f = Fraction(v)
    return str(f.numerator) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


@dataclass
class MeasureCone:
    constraints: np.ndarray  # integer equality rows
    subspace: np.ndarray | None = None  # optional extra equality rows (affine restriction)
    _rays: list[tuple[int, ...]] | None = field(default=None, repr=False)

    @property
    def equations(self) -> np.ndarray:
        if self.subspace is None:
            return self.constraints
        return np.vstack([self.constraints, self.subspace])

    @property
    def rays(self) -> list[tuple[int, ...]]:
        if self._rays is None:
            self._rays = extreme_rays(self.equations)
        return self._rays


# ------------------------------------------------------------ linear algebra
def _as_int_rows(A) -> list[list[int]]:
    rows = []
    for r in np.atleast_2d(np.asarray(A, dtype=object)):
        fr = [Fraction(x) for x in r]
        den = 1
        for x in fr:
            den = den * x.denominator // math.gcd(den, x.denominator)
        rows.append([int(x * den) for x in fr])
    return rows


def nullspace_basis(A) -> list[list[Fraction]]:
    M = sympy.Matrix(_as_int_rows(A))
    return [[Fraction(int(sympy.fraction(x)[0]), int(sympy.fraction(x)[1])) for x in v] for v in M.nullspace()]


def solution_space(track: TrainTrack) -> list[list[Fraction]]:
    """Rational basis of the switch-condition solution space ``V``."""
    return nullspace_basis(track.switch_matrix)


def dimension(track: TrainTrack) -> int:
    return track.num_branches - int(np.linalg.matrix_rank(track.switch_matrix.astype(float)))


def _primitive(v: Sequence[int]) -> tuple[int, ...]:
    g = 0
    for x in v:
        g = math.gcd(g, x)
    return tuple(x // g for x in v) if g > 1 else tuple(v)


# ------------------------------------------------------ double description
def extreme_rays(A) -> list[tuple[int, ...]]:
    """Extreme rays of ``{x >= 0, A x = 0}`` as primitive integer vectors.

    Double description: start from the coordinate rays of the orthant and cut
    by one hyperplane at a time, combining adjacent rays of opposite sign.
    Adjacency is decided combinatorially from zero sets (bitmasks).  Output
    is sorted in decreasing lexicographic order.
    """
    rows = _as_int_rows(A) if np.size(A) else []
    p = np.shape(A)[1] if np.ndim(A) == 2 else len(A)
    rays = [tuple(1 if i == j else 0 for i in range(p)) for j in range(p)]

    def zeros(r):
        z = 0
        for i, x in enumerate(r):
            if x == 0:
                z |= 1 << i
        return z

    for a in rows:
        vals = [sum(ai * ri for ai, ri in zip(a, r)) for r in rays]
        pos = [i for i, v in enumerate(vals) if v > 0]
        neg = [i for i, v in enumerate(vals) if v < 0]
        keep = [rays[i] for i, v in enumerate(vals) if v == 0]
        if pos and neg:
            zs = [zeros(r) for r in rays]
            for i in pos:
                for j in neg:
                    common = zs[i] & zs[j]
                    adjacent = True
                    for t in range(len(rays)):
                        if t != i and t != j and (zs[t] & common) == common:
                            adjacent = False
                            break
                    if not adjacent:
                        continue
                    vi, vj = vals[i], -vals[j]
                    new = [vj * x + vi * y for x, y in zip(rays[i], rays[j])]
                    keep.append(_primitive(new))
        rays = list(dict.fromkeys(keep))
        if not rays:
            break
    return sorted(rays, reverse=True)


def extreme_rays_bruteforce(A) -> list[tuple[int, ...]]:
    """Oracle: a support ``S`` carries an extreme ray iff the kernel of ``A``
    restricted to ``S`` is one-dimensional and spanned by a strictly positive
    vector on ``S``.

    All supports are screened at once in floating point (zeroing the columns
    outside ``S`` keeps the rank); survivors are confirmed exactly."""
    rows = _as_int_rows(A)
    A = sympy.Matrix(rows)
    Af = np.array(rows, dtype=float).reshape(len(rows), -1)
    p = Af.shape[1]
    masks = ((np.arange(1, 2 ** p)[:, None] >> np.arange(p)) & 1).astype(bool)
    stack = Af[None, :, :] * masks[:, None, :]
    # append a zero row so every SVD has at least p rows and a full right basis
    stack = np.concatenate([stack, np.zeros((len(masks), max(p - Af.shape[0], 0), p))], axis=1)
    _, sv, Vt = np.linalg.svd(stack)
    tol = 1e-9 * max(1.0, np.abs(Af).max(initial=0.0)) * p
    out = set()
    for m, S_mask in enumerate(masks):
        size = int(S_mask.sum())
        rank = int((sv[m] > tol).sum())
        if size - rank != 1:
            continue
        # kernel restricted to S: right singular vectors beyond the rank, supported on S
        K = Vt[m, rank:].T
        v = K[:, np.abs(K[S_mask]).sum(axis=0).argmax()]
        v = v[S_mask]
        if not (np.all(v > 1e-9 * np.abs(v).max()) or np.all(v < -1e-9 * np.abs(v).max())):
            continue
        S = list(np.flatnonzero(S_mask))
        ns = A[:, S].nullspace()
        if len(ns) != 1:
            continue
        w = ns[0]
        den = math.lcm(*[int(sympy.fraction(x)[1]) for x in w])
        iv = [int(x * den) for x in w]
        if all(x < 0 for x in iv):
            iv = [-x for x in iv]
        if not all(x > 0 for x in iv):
            continue
        full = [0] * p
        for k, idx in enumerate(S):
            full[idx] = iv[k]
        out.add(_primitive(full))
    return sorted(out, reverse=True)


def vertex_cycles(track: TrainTrack) -> list[WeightVector]:
    return [WeightVector(tuple(Fraction(x) for x in r)) for r in extreme_rays(track.switch_matrix)]


def vertex_cycle_matrix(track: TrainTrack) -> np.ndarray:
    """Vertex cycles as columns (float)."""
    return np.array(extreme_rays(track.switch_matrix), dtype=float).T


# --------------------------------------------------------------- recurrence
def recurrence_margin(A) -> float:
    """max over normalized solutions of the minimal branch weight (LP)."""
    A = np.asarray(A, dtype=float)
    p = A.shape[1]
    c = np.zeros(p + 1)
    c[-1] = -1.0
    A_eq = np.vstack([np.hstack([A, np.zeros((A.shape[0], 1))]), np.r_[np.ones(p), 0.0]])
    b_eq = np.r_[np.zeros(A.shape[0]), 1.0]
    A_ub = np.hstack([-np.eye(p), np.ones((p, 1))])
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(p), A_eq=A_eq, b_eq=b_eq,
                  bounds=[(0, None)] * p + [(None, None)], method="highs")
    if res.status != 0:
        return 0.0
    return float(-res.fun)


def is_recurrent(track: TrainTrack, eps: float = LP_EPS) -> bool:
    return recurrence_margin(track.switch_matrix) > eps


def is_recurrent_exact(track: TrainTrack) -> bool:
    support = 0
    for r in extreme_rays(track.switch_matrix):
        for i, x in enumerate(r):
            if x:
                support |= 1 << i
    return support == (1 << track.num_branches) - 1


# ---------------------------------------------------------- measure helpers
def _vals(mu) -> list:
    if isinstance(mu, WeightVector):
        return list(mu.values)
    return list(mu)


def mass(mu) -> float | Fraction:
    return sum(_vals(mu))


def normalize(mu):
    vals = _vals(mu)
    tot = sum(vals)
    if tot == 0:
        raise ZeroMass("total mass is zero")
    if all(isinstance(v, (int, Fraction)) for v in vals):
        out = tuple(Fraction(v) / tot for v in vals)
    else:
        out = tuple(float(v) / float(tot) for v in vals)
    if isinstance(mu, WeightVector):
        return WeightVector(out, mu.kind)
    return np.array(out, dtype=float) if isinstance(mu, np.ndarray) else out


def finsler_norm(alpha, nu):
    """``max_b |alpha(b)| / nu(b)`` for a tangent vector ``alpha`` at ``nu``."""
    a, n = _vals(alpha), _vals(nu)
    if len(a) != len(n):
        raise BranchMismatch("length mismatch")
    if any(x <= 0 for x in n):
        raise NonPositiveBase("base measure must be positive on every branch")
    return max(abs(x) / y for x, y in zip(a, n))


def min_ratio(mu, nu, tol: float = 1e-9):
    m, n = _vals(mu), _vals(nu)
    if len(m) != len(n):
        raise BranchMismatch("length mismatch")
    for v in (m, n):
        s = sum(v)
        if abs(float(s) - 1.0) > tol:
            raise NotNormalized(f"mass {float(s)} != 1")
        if any(x <= 0 for x in v):
            raise NonPositiveBase("measures must be positive")
    return min(min(x / y, y / x) for x, y in zip(m, n))


def pairing(mu, nu):
    m, n = _vals(mu), _vals(nu)
    if len(m) != len(n):
        raise BranchMismatch(f"{len(m)} branches vs {len(n)}")
    return sum(x * y for x, y in zip(m, n))


def positivity_floor(mu):
    vals = _vals(mu)
    tot = sum(vals)
    if tot == 0:
        raise ZeroMass("total mass is zero")
    return min(vals) / tot


# ------------------------------------------------------------ vectorized
def min_ratio_rows(M: np.ndarray, N: np.ndarray) -> np.ndarray:
    """Row-wise ``min_ratio`` for arrays of positive normalized measures."""
    R = M / N
    return np.minimum(R.min(axis=1), (1.0 / R).min(axis=1))


def finsler_rows(alpha: np.ndarray, nu: np.ndarray) -> np.ndarray:
    return np.max(np.abs(alpha) / nu, axis=-1)
