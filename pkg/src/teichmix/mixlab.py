"""Suspension semiflow over the truncated letter shift.

The flow is discretized in the flow direction with step ``dt``: a state is a
triple ``(x, y, j)`` where ``x`` is the current letter, ``y`` the next one
(the roof depends on the future only through ``y``) and ``j`` counts elapsed
steps in the fiber of height ``round(roof[x, y] / dt)``.  Letters are drawn
independently with the base weights, so the discrete flow is a finite
Markov chain and correlations are computed exactly by evolving observables
with its Koopman operator.  No randomness is involved.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import thermo as th
from .measurecone import finsler_rows


class MixError(ValueError):
    pass


class GridTooFine(MixError):
    pass


class NotMeanZero(MixError):
    pass


class NonPositiveSeries(MixError):
    pass


MAX_STATES = 4_000_000


# ------------------------------------------------------------------- flow
@dataclass
class SuspensionFlow:
    roof: np.ndarray  # roof[x, y]: return time of x when followed by y
    weights: np.ndarray  # base probabilities of letters, sum 1
    dt: float
    heights: np.ndarray = field(init=False, repr=False)
    start: np.ndarray = field(init=False, repr=False)
    letter: np.ndarray = field(init=False, repr=False)
    pi: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.roof = np.asarray(self.roof, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if self.roof.ndim != 2 or self.roof.shape[0] != self.roof.shape[1] or len(w) != self.roof.shape[0]:
            raise MixError("roof must be square and match the weights")
        if np.any(w < 0) or w.sum() <= 0:
            raise MixError("weights must be nonnegative with positive total")
        if np.any(self.roof <= 0):
            raise MixError("roof must be positive")
        self.weights = w / w.sum()
        if not self.dt > 0 or self.dt < 1e-6 * self.roof.min():
            raise GridTooFine(f"dt={self.dt} below resolution")
        H = np.maximum(1, np.rint(self.roof / self.dt)).astype(np.int64)
        total = int(H.sum())
        if total > MAX_STATES:
            raise GridTooFine(f"{total} flow states exceed the budget of {MAX_STATES}")
        self.heights = H
        flat = H.ravel()
        self.start = np.concatenate([[0], np.cumsum(flat)[:-1]])
        self.letter = np.repeat(np.arange(flat.size), flat)  # pair index per state
        pw = np.outer(self.weights, self.weights).ravel()
        mass = pw[self.letter]
        self.pi = mass / mass.sum()

    @property
    def k(self) -> int:
        return len(self.weights)

    @property
    def states(self) -> int:
        return int(self.heights.sum())

    @property
    def min_roof(self) -> float:
        return float(self.roof.min())

    @property
    def mean_roof(self) -> float:
        """``int roof d(base)`` at this truncation; finite by construction."""
        return float(self.weights @ self.roof @ self.weights)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(current letter, next letter, fiber position in [0, 1)) per state."""
        pair = self.letter
        x, y = np.divmod(pair, self.k)
        j = np.arange(self.states) - self.start[pair]
        u = (j + 0.5) / self.heights.ravel()[pair]
        return x, y, u

    def koopman(self, u: np.ndarray) -> np.ndarray:
        """``(K u)(s) = E[u(next state) | s]`` for one time step."""
        out = np.empty_like(u)
        out[:-1] = u[1:]
        entry = u[self.start].reshape(self.k, self.k) @ self.weights  # per new current letter
        ends = self.start + self.heights.ravel() - 1
        _, y = np.divmod(np.arange(self.k * self.k), self.k)
        out[ends] = entry[y]
        return out

    def integral(self, values: np.ndarray) -> float:
        return float(self.pi @ values)


# ------------------------------------------------------------ observables
def _bump(u: np.ndarray, a: float, b: float) -> np.ndarray:
    v = (2 * u - a - b) / (b - a)
    out = np.zeros_like(u)
    inside = np.abs(v) < 1
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - v[inside] ** 2))
    return out


@dataclass(frozen=True)
class Observable:
    """Bump in the flow direction over a base cylinder of first letters.

    With ``mean_zero`` the bump is shifted by a constant on its own cylinder
    so that the integral vanishes; the support stays inside the cylinder."""
    cylinder: tuple[int, ...]
    window: tuple[float, float] = (0.1, 0.9)
    mean_zero: bool = True

    def values(self, flow: SuspensionFlow) -> np.ndarray:
        a, b = self.window
        if not 0 <= a < b <= 1:
            raise MixError(f"bad window {self.window}")
        x, _, u = flow.coordinates()
        on = np.isin(x, np.asarray(self.cylinder))
        f = np.where(on, _bump(u, a, b), 0.0)
        if self.mean_zero:
            m = flow.pi[on].sum()
            if m <= 0:
                raise MixError("cylinder has zero measure")
            f = np.where(on, f - flow.integral(f) / m, 0.0)
        return f


def correlation(flow: SuspensionFlow, f: Observable | np.ndarray, g: Observable | np.ndarray,
                t_max: float, tol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """``C(t) = int f * (g o flow_t)`` on the grid ``0, dt, ..., t_max``."""
    fv = f.values(flow) if isinstance(f, Observable) else np.asarray(f, dtype=float)
    gv = g.values(flow) if isinstance(g, Observable) else np.asarray(g, dtype=float)
    for name, v in (("f", fv), ("g", gv)):
        if abs(flow.integral(v)) > tol:
            raise NotMeanZero(f"{name} has integral {flow.integral(v):.3g}")
    steps = int(round(t_max / flow.dt))
    w = flow.pi * fv
    C = np.empty(steps + 1)
    u = gv.copy()
    for n in range(steps + 1):
        C[n] = float(w @ u)
        u = flow.koopman(u)
    return flow.dt * np.arange(steps + 1), C


def evolve_integral(flow: SuspensionFlow, g: np.ndarray, steps: int) -> np.ndarray:
    """``int g o flow_t`` along the grid; constant for an invariant measure."""
    out = np.empty(steps + 1)
    u = np.asarray(g, dtype=float).copy()
    for n in range(steps + 1):
        out[n] = flow.integral(u)
        u = flow.koopman(u)
    return out


# -------------------------------------------------------------- decay fit
@dataclass
class DecayFit:
    rate: float
    r2: float
    t_range: tuple[float, float]
    points: int

    def mixing(self) -> bool:
        """Exponential fit of good quality with visible decay over the window."""
        span = self.t_range[1] - self.t_range[0]
        return self.rate > 0 and self.r2 >= 0.9 and self.rate * span >= 1.0


def envelope(t: np.ndarray, C: np.ndarray, floor: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """Points of ``|C|`` not exceeded later on, above ``floor * max|C|``."""
    a = np.abs(np.asarray(C, dtype=float))
    later = np.maximum.accumulate(a[::-1])[::-1]
    keep = (a >= later) & (a > floor * a.max())
    return np.asarray(t)[keep], a[keep]


def decay_rate_fit(t: Sequence[float], C: Sequence[float], floor: float = 1e-12) -> DecayFit:
    """Least-squares line through the log of the decreasing envelope of |C|."""
    t = np.asarray(t, dtype=float)
    C = np.asarray(C, dtype=float)
    if len(C) < 20:
        raise MixError("need at least 20 points")
    if not np.any(np.abs(C) > 0):
        raise NonPositiveSeries("series vanishes identically")
    te, ae = envelope(t, C, floor)
    if len(te) < 2:
        raise NonPositiveSeries("envelope has fewer than two points")
    s, r2 = th.slope(te, np.log(ae))
    return DecayFit(-s, r2, (float(t[0]), float(te[-1])), len(te))


# ------------------------------------------------------------- good roof
@dataclass
class GoodRoofReport:
    r1: float
    r2: float
    bounded_below: bool
    lipschitz: bool
    eigen_status: str  # "distinct" or "inconclusive"
    eigen_pair: tuple[int, int] | None
    eigen_distance: float
    periodic_residual: float
    periodic_words: int
    not_cohomologous: bool

    @property
    def verdicts(self) -> tuple[bool, bool, bool]:
        return self.bounded_below, self.lipschitz, self.not_cohomologous


def _periodic_words(k: int, length: int) -> list[tuple[int, ...]]:
    """One representative per rotation class of words of length ``<= length``."""
    out = []
    for n in range(1, length + 1):
        for w in itertools.product(range(k), repeat=n):
            if w == min(w[i:] + w[:i] for i in range(n)):
                out.append(w)
    return out


def periodic_obstruction(sums: dict[tuple[int, ...], float], k: int) -> float:
    """Relative residual of the best one-letter locally constant candidate
    ``alpha`` with ``sum_i alpha(w_i) = S(w)`` on the given periodic words."""
    words = list(sums)
    A = np.zeros((len(words), k))
    for r, w in enumerate(words):
        for x in w:
            A[r, x] += 1
    S = np.array([sums[w] for w in words])
    alpha, *_ = np.linalg.lstsq(A, S, rcond=None)
    return float(np.linalg.norm(A @ alpha - S) / max(np.linalg.norm(S), 1e-300))


def good_roof_check(Bs: Sequence[np.ndarray] | None = None, base: th.Cell | None = None,
                    constant: float | None = None, letters: int | None = None,
                    samples: int = 200, rng: np.random.Generator | None = None,
                    word_letters: int = 6, word_length: int = 3, tol: float = 1e-8) -> GoodRoofReport:
    """Three verdicts for the roof ``log sum(B_x mu)`` of a letter alphabet,
    or for the constant roof when ``constant`` is given.

    (1) positive lower bound over letters; (2) Lipschitz bound of the roof on
    inverse branches in the Finsler metric (sampled); (3) no locally constant
    cohomologous candidate, via periodic words over the first
    ``word_letters`` letters.  PF eigendirections are compared as supporting
    evidence and reported as distinct or inconclusive."""
    rng = rng or np.random.default_rng(0)
    if constant is not None:
        k = letters or 2
        m = min(k, word_letters)
        sums = {w: constant * len(w) for w in _periodic_words(m, word_length)}
        res = periodic_obstruction(sums, m)
        return GoodRoofReport(float(constant), 0.0, constant > 0, True, "inconclusive", None, 0.0,
                              res, len(sums), res > tol)
    Bs = [np.asarray(B, dtype=float) for B in Bs]
    # (1) log of a linear functional is minimized at a vertex of the cell
    V = base.vertices
    r1 = min(float(np.log((B @ V.T).sum(axis=0)).min()) for B in Bs)
    # (2) directional difference quotients along Finsler-unit directions
    Z = th.hit_and_run(base, samples, rng)
    sl = base.slice
    D = rng.standard_normal((samples, sl.dim)) @ sl.U.T
    D /= finsler_rows(D, Z)[:, None]
    h = 1e-6
    lo = np.clip(Z - h * D, 1e-300, None)
    hi = Z + h * D
    r2 = 0.0
    for B in Bs:
        w = B.sum(axis=0)
        q = np.abs(np.log(hi @ w) - np.log(lo @ w)) / (2 * h)
        r2 = max(r2, float(q.max()))
    # (3) eigendirections and periodic words
    vecs = np.array([th.pf_eigen(B).right for B in Bs])
    best, pair = 0.0, None
    for i in range(len(Bs)):
        dist = np.abs(vecs - vecs[i]).max(axis=1)
        j = int(dist.argmax())
        if dist[j] > best:
            best, pair = float(dist[j]), (i, j)
    status = "distinct" if best > 1e-9 else "inconclusive"
    m = min(len(Bs), word_letters)
    sums = {}
    for w in _periodic_words(m, word_length):
        M = np.eye(Bs[0].shape[0])
        for x in w:
            M = M @ Bs[x]
        sums[w] = math.log(th.pf_eigen(M).lam)
    res = periodic_obstruction(sums, m)
    return GoodRoofReport(r1, r2, r1 > 0, math.isfinite(r2), status, pair if status == "distinct" else None,
                          best, res, len(sums), res > tol)


# ------------------------------------------------------- skew contraction
def hilbert_distance(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Row-wise Hilbert projective distance between positive vectors."""
    R = np.log(P) - np.log(Q)
    return R.max(axis=-1) - R.min(axis=-1)


@dataclass
class SkewReport:
    kappa: float  # uniform contraction factor, min over letters
    per_letter: np.ndarray
    pairs: int


def skew_contract_check(Bs: Sequence[np.ndarray], samples: int = 10_000,
                        rng: np.random.Generator | None = None) -> SkewReport:
    """Contraction of the dual side: for pairs of positive tangential
    weights, ``d(nu1, nu2) / d(B^T nu1, B^T nu2)`` in the Hilbert metric,
    minimized over pairs for each letter."""
    rng = rng or np.random.default_rng(0)
    Bs = [np.asarray(B, dtype=float) for B in Bs]
    p = Bs[0].shape[0]
    per = np.empty(len(Bs))
    for i, B in enumerate(Bs):
        N1 = rng.dirichlet(np.ones(p), samples)
        N2 = rng.dirichlet(np.ones(p), samples)
        d0 = hilbert_distance(N1, N2)
        d1 = hilbert_distance(N1 @ B, N2 @ B)
        ok = d1 > 0
        per[i] = float((d0[ok] / d1[ok]).min()) if ok.any() else math.inf
    return SkewReport(float(per.min()), per, samples)


# ------------------------------------------------------------ construction
def letter_weights(Bs: Sequence[np.ndarray], density: Callable[[np.ndarray], np.ndarray], base: th.Cell,
                   samples: int = 4000, rng: np.random.Generator | None = None) -> np.ndarray:
    """``psi(C(x)) = int_C psi(L_x z) J_x(z) dz`` by uniform sampling of the cell."""
    rng = rng or np.random.default_rng(0)
    Z = th.hit_and_run(base, samples, rng, thin=3)
    vol = base.exact_volume()
    out = np.empty(len(Bs))
    for i, B in enumerate(Bs):
        B = np.asarray(B, dtype=float)
        out[i] = vol * float(np.mean(density(th.normalize_rows(Z @ B.T)) * th.letter_jacobian(B, base.slice, Z)))
    return out


def constant_flow(letters: int, c: float, dt: float) -> SuspensionFlow:
    return SuspensionFlow(np.full((letters, letters), float(c)), np.ones(letters), dt)


def write_csv(path, t: np.ndarray, C: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("t,C\n")
        for a, b in zip(t, C):
            fh.write(f"{a:.6f},{b:.12e}\n")


def write_svg(path, t: np.ndarray, C: np.ndarray, width: int = 640, height: int = 320) -> None:
    """Plain line plot of ``log10 |C|`` against ``t``."""
    y = np.log10(np.maximum(np.abs(C), 1e-300))
    lo = max(float(y.min()), float(y.max()) - 16)
    y = np.maximum(y, lo)
    t0, t1 = float(t[0]), float(t[-1]) if t[-1] > t[0] else float(t[0]) + 1
    span = max(float(y.max()) - lo, 1e-12)
    pts = " ".join(f"{40 + (a - t0) / (t1 - t0) * (width - 60):.1f},{20 + (y.max() - b) / span * (height - 40):.1f}"
                   for a, b in zip(t, y))
    with open(path, "w") as fh:
        fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
                 f'<polyline fill="none" stroke="black" stroke-width="1" points="{pts}"/>'
                 f'<text x="4" y="14" font-size="11">log10|C(t)|</text></svg>\n')
