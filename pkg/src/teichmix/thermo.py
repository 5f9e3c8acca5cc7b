"""Perron-Frobenius analysis, cell geometry, pressure and invariant density.

Cells live on the normalized slice ``{z in W : sum(z) = 1}`` of a linear
subspace ``W`` of branch-weight space.  A cell is stored by its vertices and
by an inequality matrix ``G`` with ``z in cell  <=>  G z >= 0``.  Letter maps
are the projective maps ``L_B(z) = B z / sum(B z)``; their inverses are the
expanding branches of the induced map.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import ConvexHull


class ThermoError(ValueError):
    pass


class NotPrimitive(ThermoError):
    pass


class DegenerateCell(ThermoError):
    pass


class AnchorMissing(ThermoError):
    pass


class EmptyRestriction(ThermoError):
    pass


class NoSignChange(ThermoError):
    pass


class NoConvergence(ThermoError):
    pass


# -------------------------------------------------------- Perron-Frobenius
@dataclass
class PFResult:
    lam: float
    right: np.ndarray  # positive, mass 1
    left: np.ndarray  # positive, left @ right == 1
    gap: float
    iterations: int


def is_primitive(B: np.ndarray) -> bool:
    """Wielandt: a nonnegative ``n x n`` matrix is primitive iff its
    ``(n-1)^2 + 1``-th power is positive."""
    A = (np.asarray(B, dtype=float) > 0).astype(np.int64)
    n = A.shape[0]
    target = (n - 1) ** 2 + 1
    P = np.eye(n, dtype=np.int64)
    base = A.copy()
    e = target
    while e:
        if e & 1:
            P = (P @ base > 0).astype(np.int64)
        base = (base @ base > 0).astype(np.int64)
        e >>= 1
    return bool(P.all())


def _power(B: np.ndarray, tol: float, max_iter: int) -> tuple[float, np.ndarray, int, float]:
    n = B.shape[0]
    v = np.full(n, 1.0 / n)
    lam = 0.0
    prev_step = None
    rate = 0.0
    for it in range(1, max_iter + 1):
        w = B @ v
        lam_new = w.sum()
        w /= lam_new
        step = np.abs(w - v).max()
        # ratios of rounding-level steps carry no rate information
        if prev_step is not None and step > 1e-14:
            rate = step / prev_step
        prev_step = step
        v = w
        if step < tol and abs(lam_new - lam) <= tol * lam_new:
            return lam_new, v, it, rate
        lam = lam_new
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps")


def pf_eigen(B: np.ndarray, tol: float = 1e-12, max_iter: int = 200000) -> PFResult:
    """Leading eigenvalue and positive eigenvectors of a primitive matrix by
    power iteration (mass-normalized iterates)."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1] or (B < 0).any():
        raise ThermoError("need a square nonnegative matrix")
    if not is_primitive(B):
        raise NotPrimitive("matrix is not primitive")
    scale = B.max()
    lam, v, it, rate = _power(B / scale, tol, max_iter)
    _, u, _, _ = _power(B.T / scale, tol, max_iter)
    u = u / (u @ v)
    return PFResult(lam * scale, v, u, max(0.0, 1.0 - rate), it)


def dense_lambda1(B: np.ndarray) -> float:
    """Dense eigensolver value, used as an independent check."""
    return float(np.max(np.abs(np.linalg.eigvals(np.asarray(B, dtype=float)))))


# ------------------------------------------------------------------ slices
@dataclass
class Slice:
    """Orthonormal coordinates on ``{z in W : sum(z) = 1}``."""
    W: np.ndarray  # p x d spanning columns
    center: np.ndarray  # a point of the slice
    U: np.ndarray = field(init=False)  # p x n orthonormal basis of W  intersect  ones-perp

    def __post_init__(self):
        Q, _ = np.linalg.qr(self.W)
        ones = Q.T @ np.ones(Q.shape[0])
        # directions inside W orthogonal to the all-ones functional
        _, _, Vt = np.linalg.svd(ones[None, :])
        self.U = Q @ Vt[1:].T
        self.Wq = Q

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    @property
    def d(self) -> int:
        """Dimension of the cone (``dim + 1``)."""
        return self.Wq.shape[1]

    def coords(self, Z: np.ndarray) -> np.ndarray:
        return (np.atleast_2d(Z) - self.center) @ self.U

    def point(self, Y: np.ndarray) -> np.ndarray:
        return self.center + np.atleast_2d(Y) @ self.U.T

    def restricted(self, B: np.ndarray) -> np.ndarray:
        """Matrix of ``B`` on ``W`` in the orthonormal basis ``Wq``."""
        return self.Wq.T @ B @ self.Wq


def normalize_rows(X: np.ndarray) -> np.ndarray:
    return X / X.sum(axis=-1, keepdims=True)


@dataclass
class Cell:
    slice: Slice
    vertices: np.ndarray  # rows, normalized points
    G: np.ndarray  # z in cell  <=>  G z >= 0

    def contains(self, Z: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        Z = np.atleast_2d(Z)
        V = Z @ self.G.T
        scale = np.abs(self.G).sum(axis=1) * np.abs(Z).max(axis=1, keepdims=True)
        return np.all(V >= -tol * scale, axis=1)

    def exact_volume(self) -> float:
        Y = self.slice.coords(self.vertices)
        if self.slice.dim == 1:
            return float(Y.max() - Y.min())
        try:
            return float(ConvexHull(Y).volume)
        except Exception as exc:  # qhull raises its own error type
            raise DegenerateCell(str(exc)) from exc

    def image(self, B: np.ndarray) -> "Cell":
        B = np.asarray(B, dtype=float)
        verts = normalize_rows(self.vertices @ B.T)
        return Cell(self.slice, verts, self.G @ np.linalg.inv(B))

    def barycenter(self) -> np.ndarray:
        return self.vertices.mean(axis=0)


def cone_cell(W: np.ndarray, M: np.ndarray, rays: np.ndarray) -> Cell:
    """The normalized image ``M (cone of rays)``, where ``M`` is invertible
    and maps the cone of ``rays`` onto the cone of its image."""
    M = np.asarray(M, dtype=float)
    verts = normalize_rows((M @ rays).T)
    sl = Slice(W, verts.mean(axis=0))
    return Cell(sl, verts, np.linalg.inv(M))


def simplex_cell(p: int) -> Cell:
    """The standard simplex slice of the orthant in ``R^p``."""
    I = np.eye(p)
    return Cell(Slice(I, np.full(p, 1.0 / p)), I.copy(), I.copy())


# ------------------------------------------------------------ sampling
def _chord(cell: Cell, z: np.ndarray, d: np.ndarray) -> tuple[float, float]:
    a = cell.G @ z
    b = cell.G @ d
    lo, hi = -np.inf, np.inf
    pos = b > 1e-300
    neg = b < -1e-300
    if pos.any():
        lo = max(lo, float(np.max(-a[pos] / b[pos])))
    if neg.any():
        hi = min(hi, float(np.min(-a[neg] / b[neg])))
    return lo, hi


def hit_and_run(cell: Cell, n: int, rng: np.random.Generator, start: np.ndarray | None = None,
                burn: int | None = None, thin: int = 1) -> np.ndarray:
    """Approximately uniform points of ``cell`` (rows, ambient coordinates)."""
    sl = cell.slice
    z = cell.barycenter() if start is None else start.copy()
    burn = 10 * sl.dim if burn is None else burn
    out = np.empty((n, z.size))
    k = 0
    total = burn + n * thin
    for it in range(total):
        y = rng.standard_normal(sl.dim)
        d = sl.U @ (y / np.linalg.norm(y))
        lo, hi = _chord(cell, z, d)
        if not (np.isfinite(lo) and np.isfinite(hi)) or hi <= lo:
            raise DegenerateCell("cell has empty or unbounded chord")
        z = z + rng.uniform(lo, hi) * d
        if it >= burn and (it - burn) % thin == 0:
            out[k] = z
            k += 1
    return out


def rejection_volume(cell: Cell, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Bounding-box Monte Carlo volume with its standard error."""
    Y = cell.slice.coords(cell.vertices)
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    box = float(np.prod(hi - lo))
    pts = cell.slice.point(rng.uniform(lo, hi, size=(samples, Y.shape[1])))
    inside = cell.contains(pts)
    f = inside.mean()
    return box * f, box * math.sqrt(max(f * (1 - f), 0.0) / samples)


# ------------------------------------------------- letter maps and Jacobians
def letter_jacobian(B: np.ndarray, sl: Slice, Z: np.ndarray) -> np.ndarray:
    """Jacobian of ``L_B`` on the slice at rows ``Z``:
    ``|det(B on W)| / sum(B z)^d`` for normalized ``z``."""
    det = abs(np.linalg.det(sl.restricted(np.asarray(B, dtype=float))))
    m = np.atleast_2d(Z) @ np.asarray(B, dtype=float).T
    return det / m.sum(axis=1) ** sl.d


def log_det_restricted(B: np.ndarray, sl: Slice) -> float:
    return float(np.linalg.slogdet(sl.restricted(np.asarray(B, dtype=float)))[1])


@dataclass
class VolumeEstimate:
    volume: float
    stderr: float
    base_volume: float
    lam: float
    n: int


def cell_volume(B: np.ndarray, base: Cell, samples: int, rng: np.random.Generator,
                chains: int = 4) -> VolumeEstimate:
    """Volume of ``L_B(base)`` as ``vol(base) * E[Jacobian]`` under
    hit-and-run sampling of ``base``; the standard error comes from
    independent chains and batch means."""
    B = np.asarray(B, dtype=float)
    per = max(samples // chains, 1)
    means = []
    for c in range(chains):
        Z = hit_and_run(base, per, rng, thin=2)
        J = letter_jacobian(B, base.slice, Z)
        nb = 10
        means.extend(np.array_split(J, nb))
    bm = np.array([m.mean() for m in means])
    vb = base.exact_volume()
    mean = bm.mean()
    se = bm.std(ddof=1) / math.sqrt(len(bm))
    lam = pf_eigen(B).lam if is_primitive(B) else dense_lambda1(B)
    return VolumeEstimate(vb * mean, vb * se, vb, lam, base.slice.dim)


def cell_volumes(Bs: Sequence[np.ndarray], base: Cell, samples: int, rng: np.random.Generator,
                 chains: int = 4) -> list[VolumeEstimate]:
    """``cell_volume`` for many letters on one shared set of chains."""
    per = max(samples // chains, 1)
    Z = np.vstack([hit_and_run(base, per, rng, thin=2) for _ in range(chains)])
    vb = base.exact_volume()
    out = []
    for B in Bs:
        B = np.asarray(B, dtype=float)
        J = letter_jacobian(B, base.slice, Z)
        bm = np.array([m.mean() for m in np.array_split(J, 10 * chains)])
        lam = pf_eigen(B).lam if is_primitive(B) else dense_lambda1(B)
        out.append(VolumeEstimate(vb * bm.mean(), vb * bm.std(ddof=1) / math.sqrt(len(bm)), vb, lam,
                                  base.slice.dim))
    return out


def expansion_bounds(B: np.ndarray, base: Cell, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Sampled min and max of ``|DH v|_sup / |v|_sup`` over ``C(x)``, where
    ``H`` inverts ``L_B`` and ``|a|_sup`` at ``z`` is ``max |a_b| / z_b``.

    Computed through ``L_B``: for ``z`` in the base cell and a tangent ``w``
    at ``z``, ``DL w = (B w - sum(B w) L(z)) / sum(B z)`` and the ratio is
    ``|w|_z / |DL w|_{L(z)}``.
    """
    B = np.asarray(B, dtype=float)
    sl = base.slice
    Z = hit_and_run(base, samples, rng)
    Y = rng.standard_normal((samples, sl.dim))
    Wd = Y @ sl.U.T
    BZ = Z @ B.T
    mz = BZ.sum(axis=1, keepdims=True)
    LZ = BZ / mz
    BW = Wd @ B.T
    DL = (BW - BW.sum(axis=1, keepdims=True) * LZ) / mz
    num = np.max(np.abs(Wd) / Z, axis=1)
    den = np.max(np.abs(DL) / LZ, axis=1)
    r = num / den
    return float(r.min()), float(r.max())


def jacobian_bound(B: np.ndarray, base: Cell, samples: int, rng: np.random.Generator,
                   h: float = 1e-6) -> float:
    """Sampled sup of the Finsler-normalized derivative of
    ``log J(x) o H^{-1} = d log sum(B z) - log|det|`` on the base cell,
    by central difference quotients along random unit directions."""
    B = np.asarray(B, dtype=float)
    sl = base.slice
    Z = hit_and_run(base, samples, rng)
    Y = rng.standard_normal((samples, sl.dim))
    Wd = Y @ sl.U.T
    Wd /= np.max(np.abs(Wd) / Z, axis=1, keepdims=True)  # Finsler unit length at z

    def f(X):
        return sl.d * np.log((X @ B.T).sum(axis=1))

    dq = (f(Z + h * Wd) - f(Z - h * Wd)) / (2 * h)
    return float(np.max(np.abs(dq)))


def eigen_band(Bs: Sequence[np.ndarray], base: Cell, samples: int, rng: np.random.Generator) -> np.ndarray:
    """Per-letter band ``max(r, 1/r)`` of ``r = exp(omega(mu)) / lambda_1``
    over sampled future points ``mu`` of the base cell."""
    Z = hit_and_run(base, samples, rng)
    out = []
    for B in Bs:
        B = np.asarray(B, dtype=float)
        lam = pf_eigen(B).lam
        r = (Z @ B.T).sum(axis=1) / lam
        out.append(max(r.max(), 1.0 / r.min()))
    return np.array(out)


# ------------------------------------------------------------- regression
def slope(x: Sequence[float], y: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope and ``R^2``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid ** 2).sum() / ss if ss > 0 else 0.0
    return float(coef[0]), float(r2)


# ---------------------------------------------------------------- pressure
@dataclass
class RoofShift:
    """Finite shift with a transition matrix and a roof on transitions:
    ``roof[x, y]`` is the roof of ``x`` when followed by ``y``."""
    transitions: np.ndarray  # 0/1
    roof: np.ndarray

    @classmethod
    def full_constant(cls, letters: int, c: float) -> "RoofShift":
        return cls(np.ones((letters, letters)), np.full((letters, letters), float(c)))

    @property
    def size(self) -> int:
        return self.transitions.shape[0]

    def restrict(self, keep: Sequence[int]) -> "RoofShift":
        keep = list(keep)
        return RoofShift(self.transitions[np.ix_(keep, keep)], self.roof[np.ix_(keep, keep)])

    def kernel(self, s: float) -> np.ndarray:
        return self.transitions * np.exp(-s * self.roof)


def letter_shift(Bs: Sequence[np.ndarray]) -> RoofShift:
    """Full shift on letters with the two-letter roof
    ``log sum(B_x v_y)`` where ``v_y`` is the mass-one PF vector of ``B_y``."""
    Bf = [np.asarray(B, dtype=float) for B in Bs]
    V = np.column_stack([pf_eigen(B).right for B in Bf])
    rows = np.vstack([B.sum(axis=0) for B in Bf])
    R = np.log(rows @ V)
    return RoofShift(np.ones_like(R), R)


@dataclass
class PressureEstimate:
    s: float
    N: int
    Z: list[float]  # log Z_n for n = 1..N
    rates: list[float]  # (1/n) log Z_n
    P: float
    band: float


def gurevich_pressure(shift: RoofShift, s: float, anchor: int, N: int) -> PressureEstimate:
    """Anchored partition sums ``Z_n = sum exp(-s * roof-sum)`` over periodic
    words of length ``n`` through ``anchor``; the estimate is the Aitken
    extrapolation of ``log(Z_{n+1} / Z_n)``."""
    if not 0 <= anchor < shift.size:
        raise AnchorMissing(f"anchor {anchor} not in alphabet of size {shift.size}")
    K = shift.kernel(s)
    logZ = []
    # track the anchored row in log-scale to avoid underflow
    row = K[anchor].copy()
    offset = 0.0
    for n in range(1, N + 1):
        z = row[anchor]
        logZ.append(math.log(z) + offset if z > 0 else -math.inf)
        row = row @ K
        m = row.max()
        if m <= 0:
            break
        row /= m
        offset += math.log(m)
    logZ += [-math.inf] * (N - len(logZ))
    a = [logZ[n + 1] - logZ[n] for n in range(N - 1) if math.isfinite(logZ[n]) and math.isfinite(logZ[n + 1])]
    if not a:
        raise NoConvergence("partition sums vanish")
    if len(a) >= 3:
        x0, x1, x2 = a[-3:]
        den = x2 - 2 * x1 + x0
        P = x2 - (x2 - x1) ** 2 / den if abs(den) > 1e-15 else x2
    else:
        P = a[-1]
    band = abs(P - a[-1])
    rates = [lz / (n + 1) for n, lz in enumerate(logZ)]
    return PressureEstimate(s, N, logZ, rates, float(P), float(band))


def pressure_exact(Bs: Sequence[np.ndarray], s: float, anchor: int, N: int) -> list[float]:
    """Oracle: ``log Z_n`` by enumerating anchored words and using
    ``roof-sum = log lambda_1(B_word)`` for their periodic points."""
    import itertools

    k = len(Bs)
    out = []
    for n in range(1, N + 1):
        tot = 0.0
        for tail in itertools.product(range(k), repeat=n - 1):
            M = np.asarray(Bs[anchor], dtype=float)
            for j in tail:
                M = M @ np.asarray(Bs[j], dtype=float)
            tot += dense_lambda1(M) ** (-s)
        out.append(math.log(tot))
    return out


@dataclass
class TailReport:
    delta: float
    pressure_at_zero: float
    partial_sums: list[float]
    increments: list[float]
    ratios: list[float]


def tail_exponent(shift: RoofShift, keep: Sequence[int], N: int = 12, tol: float = 1e-6,
                  anchor: int = 0) -> float:
    """Root of ``s -> P(-s * roof)`` on the restricted shift, by bisection
    inside a bracket found by doubling."""
    keep = list(keep)
    if not keep:
        raise EmptyRestriction("restricted alphabet is empty")
    sub = shift.restrict(keep)

    def P(s):
        return gurevich_pressure(sub, s, anchor, N).P

    p0 = P(0.0)
    if p0 <= tol:
        raise NoSignChange("pressure at s = 0 is not positive")
    lo, hi = 0.0, 1.0
    while P(hi) > 0:
        lo, hi = hi, 2 * hi
        if hi > 1e6:
            raise NoSignChange("pressure stays positive")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if P(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tail_sums(omegas: Sequence[float], caps: Sequence[int], sizes: Sequence[float],
              delta: float) -> TailReport:
    """Partial sums of ``exp(-delta * omega)`` over nested caps; ``sizes``
    gives the cap value of each letter."""
    om = np.asarray(omegas, dtype=float)
    sz = np.asarray(sizes)
    sums = [float(np.exp(-delta * om[sz <= c]).sum()) for c in caps]
    inc = [sums[0]] + [sums[i] - sums[i - 1] for i in range(1, len(sums))]
    ratios = [inc[i] / inc[i - 1] for i in range(1, len(inc)) if inc[i - 1] > 0]
    return TailReport(delta, float("nan"), sums, inc, ratios)


# -------------------------------------------------------------------- acip
def _monomials(dim: int, degree: int) -> list[tuple[int, ...]]:
    import itertools

    out = []
    for total in range(degree + 1):
        for c in itertools.combinations_with_replacement(range(dim), total):
            e = [0] * dim
            for i in c:
                e[i] += 1
            out.append(tuple(e))
    return out


def _design(Y: np.ndarray, mons: Sequence[tuple[int, ...]], scale: np.ndarray) -> np.ndarray:
    Ys = Y / scale
    return np.column_stack([np.prod(Ys ** np.array(m), axis=1) for m in mons])


@dataclass
class DensityEstimate:
    coefficients: np.ndarray
    monomials: list
    scale: np.ndarray
    slice: Slice
    lower: float
    upper: float
    residual: float
    iterations: int
    history: list[float]
    nodes: np.ndarray = field(repr=False)  # collocation points
    operator: np.ndarray = field(repr=False)  # transfer operator on coefficients
    integrals: np.ndarray = field(repr=False)  # integrals of the basis functions

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        return _design(self.slice.coords(Z), self.monomials, self.scale) @ self.coefficients

    def pushed(self) -> np.ndarray:
        """Coefficients after one more normalized transfer step."""
        c = self.operator @ self.coefficients
        return c / (self.integrals @ c)


def acip(Bs: Sequence[np.ndarray], base: Cell, degree: int = 2, points: int = 400,
         iterations: int = 200, tol: float = 1e-8, rng: np.random.Generator | None = None) -> DensityEstimate:
    """Invariant density of the expanding map whose inverse branches are the
    letter maps ``L_B``, by iterating the transfer operator
    ``(P f)(z) = sum_x f(L_x z) J_x(z)`` from the uniform density on a
    polynomial collocation space.  Each iterate is renormalized to integral
    one (the truncated alphabet leaks mass)."""
    rng = rng or np.random.default_rng(0)
    sl = base.slice
    Z = hit_and_run(base, points, rng, thin=3)
    Yv = sl.coords(base.vertices)
    scale = np.maximum(np.abs(Yv).max(axis=0), 1e-300)
    mons = _monomials(sl.dim, degree)
    X = _design(sl.coords(Z), mons, scale)
    Xp = np.linalg.pinv(X)
    # integrals of the basis over the cell, from a fresh uniform sample
    Zi = hit_and_run(base, 4 * points, rng, thin=3)
    vol = base.exact_volume()
    integ = vol * _design(sl.coords(Zi), mons, scale).mean(axis=0)
    # transfer matrix in coefficient space
    T = np.zeros((len(mons), len(mons)))
    for B in Bs:
        B = np.asarray(B, dtype=float)
        LZ = normalize_rows(Z @ B.T)
        J = letter_jacobian(B, sl, Z)
        T += Xp @ (_design(sl.coords(LZ), mons, scale) * J[:, None])
    c = np.zeros(len(mons))
    c[0] = 1.0 / vol
    hist = []
    for it in range(1, iterations + 1):
        c_new = T @ c
        c_new /= integ @ c_new
        res = float(np.max(np.abs(X @ (c_new - c))))
        hist.append(res)
        c = c_new
        if res < tol:
            vals = X @ c
            return DensityEstimate(c, mons, scale, sl, float(vals.min()), float(vals.max()), res, it, hist,
                                   Z, T, integ)
    raise NoConvergence(f"transfer iteration residual {hist[-1]:.3g} after {iterations} steps")


def transfer_step(density: DensityEstimate, Bs: Sequence[np.ndarray], Z: np.ndarray,
                  integral: float) -> np.ndarray:
    """One normalized transfer-operator step evaluated at rows ``Z``."""
    sl = density.slice
    out = np.zeros(len(Z))
    for B in Bs:
        B = np.asarray(B, dtype=float)
        out += density(normalize_rows(Z @ B.T)) * letter_jacobian(B, sl, Z)
    return out / integral
