"""Rotated hypercubic grids, dual-norm radii and trimmed point sets.

A grid with ``n`` bits per axis holds the points ``x = O^T y / 2^n`` where
every coordinate of ``y`` is one of the centred odd half-integers
``-2^{n-1}+1/2, ..., 2^{n-1}-1/2``. Point ``i`` has the base-``2^n`` digits
of ``i`` (first axis most significant) as its per-axis register values.
Points are stored as rows, so ``X = Y @ O``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import EmptySet, GridTooLarge, NonPowerOfTwoHadamard
from .mrp import lp_norm

MATERIALIZE_CAP = 2**24
ENUMERATE_CAP = 2**20
_CHUNK = 2**16


def dual_index(q: float) -> float:
    """q* with 1/q + 1/q* = 1."""
    if q == 1:
        return math.inf
    if math.isinf(q):
        return 1.0
    return q / (q - 1.0)


def dual_norm(points: np.ndarray, q: float) -> np.ndarray:
    return lp_norm(points, dual_index(q))


def check_orthogonal(O: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    O = np.array(O, dtype=float)
    if O.ndim != 2 or O.shape[0] != O.shape[1]:
        raise ValueError("rotation must be a square matrix")
    if np.abs(O.T @ O - np.eye(O.shape[0])).max() > tol:
        raise ValueError("rotation is not orthogonal")
    O.setflags(write=False)
    return O


def random_orthogonal(d: int, rng_seed: int | np.random.Generator | None) -> np.ndarray:
    """Haar-random orthogonal matrix (QR of a Gaussian matrix, signs fixed)."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.where(np.diag(R) < 0, -1.0, 1.0)
    return check_orthogonal(Q)


def hadamard(d: int) -> np.ndarray:
    """Normalized Sylvester-Hadamard matrix of order d (a power of two)."""
    if d < 1 or d & (d - 1):
        raise NonPowerOfTwoHadamard(f"Hadamard order must be a power of two, got {d}")
    H = np.ones((1, 1))
    while H.shape[0] < d:
        H = np.block([[H, H], [H, -H]])
    return check_orthogonal(H / math.sqrt(d))


def resolution_bits(d: int, p: float, eps: float) -> int:
    """ceil(log2(24 d^{1/2+1/p} / eps)), clamped to at least 1."""
    inv_p = 0.0 if math.isinf(p) else 1.0 / p
    ratio = 24.0 * d ** (0.5 + inv_p) / eps
    return max(1, math.ceil(math.log2(ratio) - 1e-12))


@dataclass(frozen=True, eq=False)
class Grid:
    d: int
    n: int
    rotation: np.ndarray
    p: float = math.inf
    eps: float = math.nan

    @property
    def side(self) -> int:
        return 2**self.n

    @property
    def size(self) -> int:
        return self.side**self.d

    @property
    def enumerable(self) -> bool:
        return self.size <= ENUMERATE_CAP

    def axis_values(self) -> np.ndarray:
        """Per-axis coordinates y/2^n of register values 0..2^n-1."""
        return (np.arange(self.side) - (self.side / 2 - 0.5)) / self.side

    def digits(self, index: np.ndarray) -> np.ndarray:
        index = np.asarray(index, dtype=np.int64)
        return np.stack(np.unravel_index(index, (self.side,) * self.d), axis=-1)

    def unrotated(self, index: np.ndarray) -> np.ndarray:
        return self.axis_values()[self.digits(index)]

    def point(self, index: np.ndarray) -> np.ndarray:
        return self.unrotated(index) @ self.rotation

    def points(self) -> np.ndarray:
        if self.size > MATERIALIZE_CAP:
            raise GridTooLarge(f"{self.size} points exceed the materialization cap")
        return self.point(np.arange(self.size))

    def chunks(self, chunk: int = _CHUNK) -> Iterator[np.ndarray]:
        if self.size > MATERIALIZE_CAP:
            raise GridTooLarge(f"{self.size} points exceed the enumeration cap")
        for start in range(0, self.size, chunk):
            yield self.point(np.arange(start, min(start + chunk, self.size)))

    def corners(self) -> np.ndarray:
        """The 2^d extreme grid points; every norm peaks on one of them."""
        if self.d > 24:
            raise GridTooLarge("too many corners")
        top = self.axis_values()[-1]
        signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * self.d), indexing="ij")).reshape(self.d, -1).T
        return (top * signs) @ self.rotation


def build_grid(
    d: int, p: float, eps: float, rotation: np.ndarray | None = None, extra_bits: int = 0
) -> Grid:
    """The rotated grid sized for precision ``eps`` in the l_p norm.

    ``extra_bits`` adds guard bits on top of the sizing formula.
    """
    if d < 1 or eps <= 0 or not p >= 1:
        raise ValueError("need d>=1, eps>0, p>=1")
    O = np.eye(d) if rotation is None else check_orthogonal(rotation)
    if O.shape != (d, d):
        raise ValueError("rotation has the wrong dimension")
    n = resolution_bits(d, p, eps) + extra_bits
    if n * d > 4096:
        raise GridTooLarge("register would exceed 4096 qubits")
    return Grid(d, n, O, p, eps)


# -- point sets ----------------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    """``dual_norm(x, q) <= threshold`` or, with a direction, ``|x.y| <= threshold``."""

    q: float
    threshold: float
    direction: tuple | None = None

    def mask(self, pts: np.ndarray) -> np.ndarray:
        if self.direction is None:
            vals = dual_norm(pts, self.q)
        else:
            vals = np.abs(pts @ np.asarray(self.direction))
        return vals <= self.threshold


@dataclass(frozen=True, eq=False)
class TrimmedSet:
    grid: Grid
    constraints: tuple
    delta: float

    def mask(self, pts: np.ndarray) -> np.ndarray:
        keep = np.ones(len(pts), dtype=bool)
        for c in self.constraints:
            keep &= c.mask(pts)
        return keep

    def indices(self) -> np.ndarray:
        if not self.grid.enumerable:
            raise GridTooLarge("membership can only be listed on enumerable grids")
        kept, offset = [], 0
        for pts in self.grid.chunks():
            kept.append(offset + np.flatnonzero(self.mask(pts)))
            offset += len(pts)
        return np.concatenate(kept)

    def points(self) -> np.ndarray:
        return self.grid.point(self.indices())

    def retained_fraction(self) -> float | None:
        """Exact fraction on enumerable grids, else None (bound-only)."""
        if not self.grid.enumerable:
            return None
        return len(self.indices()) / self.grid.size

    def threshold(self, q: float) -> float | None:
        ts = [c.threshold for c in self.constraints if c.direction is None and c.q == q]
        return min(ts) if ts else None

    def radius_bound(self, q: float) -> float:
        """A guaranteed upper bound on radius(self, q) that never enumerates."""
        t = self.threshold(q)
        return t if t is not None else radius(self.grid, q)

    def intersect(self, other: "TrimmedSet") -> "TrimmedSet":
        if other.grid is not self.grid:
            raise ValueError("trimmed sets live on different grids")
        return TrimmedSet(self.grid, self.constraints + other.constraints, self.delta + other.delta)


def radius(obj: Grid | TrimmedSet | np.ndarray, q: float) -> float:
    """Largest dual norm over the set."""
    if isinstance(obj, Grid):
        return float(dual_norm(obj.corners(), q).max())
    pts = obj.points() if isinstance(obj, TrimmedSet) else np.asarray(obj, dtype=float)
    if len(pts) == 0:
        raise EmptySet("radius of an empty set")
    return float(dual_norm(pts, q).max())


def _grid_dual_norms(grid: Grid, q: float) -> np.ndarray:
    return np.concatenate([dual_norm(pts, q) for pts in grid.chunks()])


def quantile_radius(norms: np.ndarray, delta: float) -> float:
    """Smallest norm value v with at most a delta fraction strictly above v.

    This is the infimum of the t with P[norm >= t] <= delta; thresholding at it
    keeps at least a (1-delta) fraction of points.
    """
    v = np.sort(np.asarray(norms, dtype=float))
    if v.size == 0:
        raise EmptySet("quantile of an empty set")
    above = v.size - np.searchsorted(v, v, side="right")
    ok = above <= delta * v.size + 1e-9
    return float(v[np.argmax(ok)])


def radius_bounds(d: int, q: float, delta: float) -> tuple[float, float]:
    """Analytic bounds on the approximate and effective radius of any G_O."""
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    approx = d ** (1.0 - inv_q) * math.sqrt(max(0.0, math.log(2.0 * d / delta)) / 2.0)
    effective = d ** max(0.0, 0.5 - inv_q) * math.sqrt(max(0.0, math.log(2.0 / delta)) / 2.0)
    return approx, effective


def approximate_radius(grid: Grid, q: float, delta: float, method: str = "auto") -> float:
    """r_{G,delta}(q): enumerated quantile, or the analytic bound.

    ``method`` is ``"auto"`` (enumerate when feasible), ``"enumerate"`` or
    ``"analytic"``.
    """
    if method == "analytic" or (method == "auto" and not grid.enumerable):
        return radius_bounds(grid.d, q, delta)[0]
    if not grid.enumerable:
        raise GridTooLarge("grid too large to enumerate")
    return quantile_radius(_grid_dual_norms(grid, q), delta)


def _unit_directions(d: int, q: float, count: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((count, d))
    return g / lp_norm(g, q)[:, None]


def effective_radius_estimate(
    grid: Grid, q: float, delta: float, directions: int = 64, rng_seed: int | None = 0
) -> float:
    """Empirical effective radius: max over random unit directions of the
    delta-quantile of |x.y|. A lower estimate of the true min-max value."""
    rng = np.random.default_rng(rng_seed)
    pts = grid.points() if grid.enumerable else grid.point(rng.integers(0, grid.size, 2**16))
    ys = _unit_directions(grid.d, q, directions, rng)
    return max(quantile_radius(np.abs(pts @ y), delta) for y in ys)


@dataclass(frozen=True)
class RadiusReport:
    q: float
    delta: float
    exact: float
    approx: float
    effective_bound: float
    effective_estimate: float | None
    approx_from_bound: bool


def radius_report(grid: Grid, q: float, delta: float) -> RadiusReport:
    exact = radius(grid, q)
    bound, eff = radius_bounds(grid.d, q, delta)
    if grid.enumerable:
        approx, flagged = approximate_radius(grid, q, delta, "enumerate"), False
        estimate = effective_radius_estimate(grid, q, delta)
    else:
        approx, flagged, estimate = min(bound, exact), True, None
    return RadiusReport(q, delta, exact, approx, eff, estimate, flagged)


def trimmed_set(grid: Grid, q: float, delta: float, method: str = "auto") -> TrimmedSet:
    """G_delta^(q): points whose dual norm is at most r_{G,delta}(q)."""
    t = approximate_radius(grid, q, delta, method)
    return TrimmedSet(grid, (Constraint(q, t),), delta)


def trimmed_set_directional(
    grid: Grid, q: float, delta: float, y: Sequence[float], threshold: float | None = None
) -> TrimmedSet:
    """G_{delta,y}^(q): points with |x.y| at most the effective-radius bound."""
    y = np.asarray(y, dtype=float)
    if lp_norm(y, q) > 1 + 1e-12:
        raise ValueError("direction must satisfy ||y||_q <= 1")
    t = radius_bounds(grid.d, q, delta)[1] if threshold is None else threshold
    return TrimmedSet(grid, (Constraint(q, t, tuple(y)),), delta)


# -- concentration check -----------------------------------------------------


@dataclass(frozen=True)
class TailReport:
    empirical: float
    bound: float
    samples: int
    exhaustive: bool


def hamming_l1_bound(d: int) -> float:
    """2^{-(log2(e)/2)(1/(2 sqrt 2) - 1/4)^2 d} = exp(-(d/2)(...)^2)."""
    gap = 1.0 / (2.0 * math.sqrt(2.0)) - 0.25
    return math.exp(-0.5 * gap * gap * d)


def hamming_l1_tail(rotation: np.ndarray, d: int, trials: int, rng_seed: int | None) -> TailReport:
    """Fraction of bit vectors x in {0,1}^d with ||O x||_1 <= d/4.

    Exhaustive when 2^d <= trials, Monte Carlo otherwise.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials")
    O = check_orthogonal(rotation)
    if 2**d <= trials:
        bits = ((np.arange(2**d)[:, None] >> np.arange(d)) & 1).astype(float)
        exhaustive = True
    else:
        bits = np.random.default_rng(rng_seed).integers(0, 2, (trials, d)).astype(float)
        exhaustive = False
    hits = 0
    for start in range(0, len(bits), _CHUNK):
        block = bits[start : start + _CHUNK]
        hits += int((np.abs(block @ O.T).sum(axis=1) <= d / 4).sum())
    return TailReport(hits / len(bits), hamming_l1_bound(d), len(bits), exhaustive)
