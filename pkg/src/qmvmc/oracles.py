"""Simulated oracles, the conversions between them, and their query costs.

Every handle acts on a small numpy register array:

===============  =====================  =====================================
kind             register shape         action
===============  =====================  =====================================
Transition       ``(S, S)``             ``|s>|0> -> |s> sum sqrt(P(s,s')) |s'>``
Phase            ``(X, d)``             phase ``(f_j - (a_j+b_j)/2)/(b_j-a_j)``
Probability      ``(X, d, 2)``          flag amplitude ``sqrt(f_j/b_j)`` on ``|1>``
Distribution     ``(X, d+1)``           ``sqrt(f_j/B)`` on ``|j>``, rest on ``|0>``
Lattice          ``(points, X)``        phase ``x.f / (2 r_G(q) R_max)``
===============  =====================  =====================================

Conversions build the target oracle's map directly from the known function
values and charge the base oracle's counter with the conversion's per-call
cost. In injected-error mode the converted action carries a fixed random
phase (or rotation-angle) jitter of at most ``delta`` per entry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import (
    NegativeRewardForAmplitudeOracle,
    NonpositiveDelta,
    UnsupportedConversionEdge,
)
from .grid import Grid, TrimmedSet, radius
from .mrp import MrpInstance, Setting
from .qsim import QueryCounter, make_rng

_CEIL_TOL = 1e-9


class OracleKind(str, Enum):
    PHASE = "phase"
    PROBABILITY = "probability"
    DISTRIBUTION = "distribution"
    LATTICE = "lattice"
    TRANSITION = "transition"


REWARD_KINDS = (OracleKind.PHASE, OracleKind.PROBABILITY, OracleKind.DISTRIBUTION, OracleKind.LATTICE)


@dataclass(frozen=True)
class CostModel:
    """Per-call charges with explicit constants.

    ``mode`` is ``"exact"`` (ideal semantics) or ``"injected"`` (converted
    operations carry bounded random errors).
    """

    c1: float = 1.0
    c2: float = 1.0
    mode: str = "exact"

    def __post_init__(self) -> None:
        if self.c1 <= 0 or self.c2 < 0:
            raise ValueError("need c1 > 0 and c2 >= 0")
        if self.mode not in ("exact", "injected"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def injected(self) -> bool:
        return self.mode == "injected"

    def polylog(self, delta: float) -> float:
        """1 + c2 log2(1/delta), floored at 1."""
        if delta <= 0:
            raise NonpositiveDelta(f"delta must be positive, got {delta}")
        return max(1.0, 1.0 + self.c2 * math.log2(1.0 / delta))

    def multiplier(self, leading: float, delta: float) -> int:
        """ceil(c1 * leading * (1 + c2 log2(1/delta))), at least 1."""
        return max(1, math.ceil(self.c1 * leading * self.polylog(delta) - _CEIL_TOL))

    def kickback(self, delta: float) -> int:
        """ceil(1 + c2 log2(1/delta)): calls per fractional or kickback step."""
        return max(1, math.ceil(self.polylog(delta) - _CEIL_TOL))


@dataclass(frozen=True)
class ErrorInjector:
    """Uniform jitter in [-budget, budget], reproducible per (seed, stream)."""

    budget: float
    seed: int = 0

    def jitter(self, shape: tuple, stream: int = 0) -> np.ndarray:
        if self.budget <= 0:
            return np.zeros(shape)
        return make_rng(self.seed, stream).uniform(-self.budget, self.budget, size=shape)


def complete_unitary(first_column: np.ndarray) -> np.ndarray:
    """Real orthogonal matrix with the given unit first column (Gram-Schmidt
    over the standard basis for the remaining columns)."""
    v = np.asarray(first_column, dtype=float)
    k = len(v)
    basis = [v / np.linalg.norm(v)]
    for i in range(k):
        if len(basis) == k:
            break
        e = np.zeros(k)
        e[i] = 1.0
        for _ in range(2):  # re-orthogonalize for stability
            for b in basis:
                e = e - (b @ e) * b
        nrm = np.linalg.norm(e)
        if nrm > 1e-8:
            basis.append(e / nrm)
    return np.column_stack(basis)


class OracleHandle:
    """A simulated oracle with a call counter.

    ``apply`` charges ``charge`` calls to ``counter[counter_key]`` and returns
    the transformed register array; ``apply_ideal`` is the error-free action
    and is never charged.
    """

    def __init__(
        self,
        kind: OracleKind,
        counter: QueryCounter,
        counter_key: str,
        charge: int,
        action: Callable[[np.ndarray, bool], np.ndarray],
        register_shape: tuple,
        **meta,
    ) -> None:
        self.kind = OracleKind(kind)
        self.counter = counter
        self.counter_key = counter_key
        self.charge = int(charge)
        self._action = action
        self.register_shape = tuple(register_shape)
        self.meta = meta

    def apply(self, psi: np.ndarray) -> np.ndarray:
        self.counter.charge(self.counter_key, self.charge)
        return self._action(np.asarray(psi, dtype=complex), False)

    def apply_ideal(self, psi: np.ndarray) -> np.ndarray:
        return self._action(np.asarray(psi, dtype=complex), True)

    def matrix(self, ideal: bool = False) -> np.ndarray:
        """Dense matrix of the action (uncharged; small registers only)."""
        dim = math.prod(self.register_shape)
        cols = []
        for i in range(dim):
            e = np.zeros(dim, dtype=complex)
            e[i] = 1.0
            cols.append(self._action(e.reshape(self.register_shape), ideal).reshape(-1))
        return np.column_stack(cols)

    # convenience accessors
    def __getattr__(self, name: str):
        meta = self.__dict__.get("meta", {})
        if name in meta:
            return meta[name]
        raise AttributeError(name)


# -- transition oracle ---------------------------------------------------------


def make_transition_oracle(instance: MrpInstance, counter: QueryCounter | None = None) -> OracleHandle:
    """D_P on two state registers, completed to a unitary per first-register value."""
    counter = counter or QueryCounter()
    P = instance.transitions
    W = np.stack([complete_unitary(np.sqrt(row)) for row in P])  # W[s] e_0 = sqrt(P[s])
    n = instance.num_states

    def action(psi: np.ndarray, ideal: bool) -> np.ndarray:
        return np.einsum("sij,...sj->...si", W, psi)

    return OracleHandle(OracleKind.TRANSITION, counter, "transition", 1, action, (n, n), unitaries=W)


def prepare_path_state(d_p: OracleHandle, s0: int, depth: int) -> np.ndarray:
    """Amplitudes sum_tau sqrt(P(tau)) |tau> over S^{depth+1}, built with
    ``depth`` applications of D_P on adjacent registers."""
    n = d_p.register_shape[0]
    psi = np.zeros(n ** (depth + 1), dtype=complex)
    psi[s0 * n**depth] = 1.0
    for t in range(1, depth + 1):
        # registers t-1 and t as the middle axes of a 4-d view
        view = psi.reshape(n ** (t - 1), n, n, n ** (depth - t))
        moved = np.moveaxis(view, (1, 2), (-2, -1))
        psi = np.moveaxis(d_p.apply(moved), (-2, -1), (1, 2)).reshape(-1)
    return psi.reshape(-1)


# -- reward oracles ------------------------------------------------------------


def reward_table(instance: MrpInstance, depth: int | None = None) -> np.ndarray:
    """Reward vectors over the oracle's input set: states, depth-T paths, or
    depth-``depth`` paths (cumulative)."""
    rw = instance.rewards
    if rw.setting is Setting.CUMULATIVE:
        if depth is None:
            raise ValueError("cumulative reward oracles need a depth")
        return rw.depth_table(depth, instance.num_states)
    return rw.payload


def set_radius(points: Grid | TrimmedSet, q: float) -> float:
    """Radius used for oracle scales: exact for grids, the threshold bound for
    trimmed sets."""
    return radius(points, q) if isinstance(points, Grid) else points.radius_bound(q)


def _set_points(points: Grid | TrimmedSet) -> np.ndarray:
    return points.points()


def _phase_handle(
    counter: QueryCounter,
    key: str,
    charge: int,
    values: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
    jitter: np.ndarray | None = None,
    **meta,
) -> OracleHandle:
    phases = (values - (lo + hi) / 2) / (hi - lo)

    def action(psi: np.ndarray, ideal: bool) -> np.ndarray:
        ph = phases if ideal or jitter is None else phases + jitter
        return psi * np.exp(1j * ph)

    return OracleHandle(
        OracleKind.PHASE, counter, key, charge, action, values.shape,
        values=values, lo=lo, hi=hi, phases=phases, jitter=jitter, **meta,
    )


def _probability_handle(
    counter: QueryCounter,
    key: str,
    charge: int,
    values: np.ndarray,
    hi: np.ndarray,
    jitter: np.ndarray | None = None,
    **meta,
) -> OracleHandle:
    ratio = values / hi
    if np.any(ratio < -1e-12) or np.any(ratio > 1 + 1e-12):
        raise NegativeRewardForAmplitudeOracle("probability oracle values must lie in [0, b]")
    angles = np.arcsin(np.sqrt(np.clip(ratio, 0.0, 1.0)))

    def action(psi: np.ndarray, ideal: bool) -> np.ndarray:
        th = angles if ideal or jitter is None else angles + jitter
        c, s = np.cos(th), np.sin(th)
        out = np.empty_like(psi)
        out[..., 0] = c * psi[..., 0] - s * psi[..., 1]
        out[..., 1] = s * psi[..., 0] + c * psi[..., 1]
        return out

    return OracleHandle(
        OracleKind.PROBABILITY, counter, key, charge, action, values.shape + (2,),
        values=values, lo=np.zeros_like(hi), hi=hi, angles=angles, jitter=jitter, **meta,
    )


def _lattice_handle(
    counter: QueryCounter,
    key: str,
    charge: int,
    values: np.ndarray,
    R_max: float,
    q: float,
    points: Grid | TrimmedSet,
    injector: ErrorInjector | None = None,
    **meta,
) -> OracleHandle:
    scale = 2.0 * set_radius(points, q) * R_max
    cache: dict = {}

    def tables() -> tuple:
        if "phases" not in cache:
            pts = _set_points(points)
            cache["points"] = pts
            cache["phases"] = pts @ values.T / scale
            cache["jitter"] = (
                None if injector is None else injector.jitter(cache["phases"].shape, stream=1)
            )
        return cache["phases"], cache["jitter"]

    def action(psi: np.ndarray, ideal: bool) -> np.ndarray:
        ph, jit = tables()
        if not ideal and jit is not None:
            ph = ph + jit
        return psi * np.exp(1j * ph)

    def point_array() -> np.ndarray:
        tables()
        return cache["points"]

    grid = points if isinstance(points, Grid) else points.grid
    rows = len(point_array()) if grid.enumerable else 0  # 0: not materialized
    return OracleHandle(
        OracleKind.LATTICE, counter, key, charge, action, (rows, len(values)),
        values=values, R_max=R_max, q=q, point_set=points, scale=scale,
        lattice_phases=lambda: tables()[0], lattice_points=point_array, **meta,
    )


def make_reward_oracle(
    instance: MrpInstance,
    kind: OracleKind | str,
    points: Grid | TrimmedSet | None = None,
    depth: int | None = None,
    counter: QueryCounter | None = None,
) -> OracleHandle:
    """The given access to the reward function (assumed error-free)."""
    kind = OracleKind(kind)
    counter = counter or QueryCounter()
    rw = instance.rewards
    R = reward_table(instance, depth)
    d, R_max, q = rw.d, rw.R_max, rw.q
    key = f"reward_{kind.value}"
    common = dict(R_max=R_max, q=q)
    if kind in (OracleKind.PROBABILITY, OracleKind.DISTRIBUTION) and np.any(R < 0):
        raise NegativeRewardForAmplitudeOracle(f"{kind.value} oracles need nonnegative rewards")
    if kind is OracleKind.PHASE:
        return _phase_handle(counter, key, 1, R, np.full(d, -R_max), np.full(d, R_max), **common)
    if kind is OracleKind.PROBABILITY:
        return _probability_handle(counter, key, 1, R, np.full(d, R_max), **common)
    if kind is OracleKind.DISTRIBUTION:
        inv_q = 0.0 if math.isinf(q) else 1.0 / q
        B = d ** (1.0 - inv_q) * R_max
        mass = np.clip(1.0 - R.sum(axis=1) / B, 0.0, 1.0)
        cols = np.column_stack([np.sqrt(mass), np.sqrt(R / B)])
        U = np.stack([complete_unitary(c) for c in cols])

        def action(psi: np.ndarray, ideal: bool) -> np.ndarray:
            return np.einsum("xij,xj->xi", U, psi)

        return OracleHandle(
            OracleKind.DISTRIBUTION, counter, key, 1, action, (len(R), d + 1),
            values=R, normalization=B, unitaries=U, **common,
        )
    if kind is OracleKind.LATTICE:
        if points is None:
            raise ValueError("lattice oracles need a point set")
        return _lattice_handle(counter, key, 1, R, R_max, q, points)
    raise UnsupportedConversionEdge(f"{kind} is not a reward oracle kind")


# -- conversions ---------------------------------------------------------------


def _leading_factor(source: OracleKind, points: Grid | TrimmedSet, d: int, q: float) -> float:
    r_q = set_radius(points, q)
    if source is OracleKind.PROBABILITY:
        return math.sqrt(set_radius(points, math.inf) / r_q)
    if source is OracleKind.PHASE:
        return set_radius(points, math.inf) / r_q
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    return math.sqrt(d ** (1.0 - inv_q) * set_radius(points, 1.0) / r_q)


def conversion_leading_factor(
    source: OracleKind | str, target: OracleKind | str, points: Grid | TrimmedSet | None, d: int, q: float
) -> float:
    source, target = OracleKind(source), OracleKind(target)
    if target is OracleKind.LATTICE and source in (
        OracleKind.PROBABILITY, OracleKind.PHASE, OracleKind.DISTRIBUTION
    ):
        return _leading_factor(source, points, d, q)
    if (source, target) in ((OracleKind.PROBABILITY, OracleKind.PHASE), (OracleKind.PHASE, OracleKind.PROBABILITY)):
        return 1.0
    raise UnsupportedConversionEdge(f"no conversion from {source.value} to {target.value}")


def convert(
    handle: OracleHandle,
    target: OracleKind | str,
    points: Grid | TrimmedSet | None = None,
    delta: float = 1e-3,
    cost: CostModel | None = None,
    injector: ErrorInjector | None = None,
) -> OracleHandle:
    """Derived oracle of the target kind built from ``handle``."""
    target = OracleKind(target)
    cost = cost or CostModel()
    if delta <= 0:
        raise NonpositiveDelta(f"delta must be positive, got {delta}")
    if target is OracleKind.LATTICE and points is None:
        raise ValueError("lattice targets need a point set")
    d = handle.values.shape[1] if handle.kind is not OracleKind.TRANSITION else 0
    q = handle.meta.get("q", math.inf)
    m = conversion_leading_factor(handle.kind, target, points, d, q)
    charge = handle.charge * cost.multiplier(m, delta)
    inj = None
    if cost.injected:
        inj = injector or ErrorInjector(delta)
    key = handle.counter_key

    if target is OracleKind.LATTICE:
        return _lattice_handle(
            handle.counter, key, charge, handle.values, handle.R_max, q, points, inj, source=handle
        )
    if handle.kind is OracleKind.PROBABILITY:  # -> phase, same codomain [0, b]
        vals, hi = handle.values, handle.hi
        jit = None if inj is None else inj.jitter(vals.shape)
        return _phase_handle(
            handle.counter, key, charge, vals, np.zeros_like(hi), hi, jit,
            R_max=handle.meta.get("R_max"), q=q, source=handle,
        )
    # phase -> probability with the shifted codomain [0, 2(b-a)]
    lo, hi = handle.lo, handle.hi
    g = handle.values - lo + (hi - lo) / 2
    jit = None if inj is None else inj.jitter(g.shape)
    return _probability_handle(
        handle.counter, key, charge, g, 2 * (hi - lo), jit,
        R_max=handle.meta.get("R_max"), q=q, source=handle,
    )


def fractional_power(
    handle: OracleHandle,
    exponent: float,
    delta: float,
    cost: CostModel | None = None,
    injector: ErrorInjector | None = None,
) -> OracleHandle:
    """The diagonal handle with every phase multiplied by ``exponent``."""
    if handle.kind not in (OracleKind.PHASE, OracleKind.LATTICE):
        raise UnsupportedConversionEdge("fractional powers need a phase-type handle")
    if not 0 < exponent <= 1:
        raise ValueError("exponent must lie in (0, 1]")
    cost = cost or CostModel()
    charge = handle.charge * cost.kickback(delta)
    inj = (injector or ErrorInjector(delta)) if cost.injected else None
    base = handle.phases if handle.kind is OracleKind.PHASE else handle.lattice_phases()
    phases = exponent * base
    jitter = None if inj is None else inj.jitter(phases.shape, stream=2)

    def action(psi: np.ndarray, ideal: bool) -> np.ndarray:
        ph = phases if ideal or jitter is None else phases + jitter
        return psi * np.exp(1j * ph)

    return OracleHandle(
        handle.kind, handle.counter, handle.counter_key, charge, action, handle.register_shape,
        exponent=exponent, phases=phases, jitter=jitter, source=handle,
    )


def operator_distance(handle: OracleHandle, trials: int = 100, seed: int = 0) -> float:
    """max over random unit states of ||U psi - U_ideal psi||."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        psi = rng.standard_normal(handle.register_shape) + 1j * rng.standard_normal(handle.register_shape)
        psi /= np.linalg.norm(psi)
        diff = handle._action(psi, False) - handle._action(psi, True)
        worst = max(worst, float(np.linalg.norm(diff)))
    return worst
