"""Markov reward processes in the three reward settings, plus exact values.

Paths are arrays of state indices ``(s_0, ..., s_t)``. A path of depth ``t``
is addressed by its base-|S| integer with ``s_0`` as the most significant
digit, so reward tables over ``S^{t+1}`` are plain ``(|S|**(t+1), d)`` arrays.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np

from .errors import (
    DepthOverflow,
    InconsistentRewardDomain,
    InfiniteDepthWithoutTruncation,
    InfiniteHorizonUndiscounted,
    InvalidDelta,
    InvalidTransitionMatrix,
)

INF = math.inf
PATH_CAP = 10**6  # max enumerated paths in any stored or derived table
MACHINE_DELTA = 1e-12
_ROW_TOL = 1e-9
_NORM_SLACK = 1e-9


class Setting(str, Enum):
    EXACT_DEPTH = "exact_depth"
    CUMULATIVE = "cumulative"
    PATH_INDEPENDENT = "path_independent"


def lp_norm(v: np.ndarray, q: float, axis: int = -1) -> np.ndarray:
    """Row-wise l_q norm; ``q`` may be ``inf``."""
    a = np.abs(np.asarray(v, dtype=float))
    if math.isinf(q):
        return a.max(axis=axis) if a.shape[axis] else np.zeros(a.shape[:-1])
    if q == 1:
        return a.sum(axis=axis)
    if q == 2:
        return np.sqrt((a * a).sum(axis=axis))
    return (a**q).sum(axis=axis) ** (1.0 / q)


def _is_depth(T: Any) -> bool:
    return T == INF or (isinstance(T, (int, np.integer)) and T >= 0)


def effective_depth(T: float, gamma: float) -> float:
    """min{T, 1/(1-gamma)}, as an extended real."""
    if T == INF and gamma >= 1:
        raise InfiniteHorizonUndiscounted("T=inf requires gamma<1")
    horizon = INF if gamma >= 1 else 1.0 / (1.0 - gamma)
    return min(float(T), horizon)


def discount_sum(T: float, gamma: float) -> float:
    """Sum_{t=0}^{T} gamma^t in closed form (T+1 when gamma=1)."""
    if T == INF:
        if gamma >= 1:
            raise InfiniteHorizonUndiscounted("T=inf requires gamma<1")
        return 1.0 / (1.0 - gamma)
    if gamma == 1:
        return float(T + 1)
    return (1.0 - gamma ** (T + 1)) / (1.0 - gamma)


def truncation_depth(T: float, gamma: float, delta: float) -> int | float:
    """Depth after which the discounted tail is at most delta*R_max/2."""
    if not 0 < delta < 2:
        raise InvalidDelta(f"delta must lie in (0, 2), got {delta}")
    if T == INF and gamma >= 1:
        raise InfiniteHorizonUndiscounted("T=inf requires gamma<1")
    if gamma >= 1:
        return T
    t_star = effective_depth(T, gamma)
    cut = math.ceil(t_star * math.log(2.0 / (delta * (1.0 - gamma))))
    return min(T, max(cut, 0))


@dataclass(frozen=True)
class StateSpace:
    states: tuple
    index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        states = tuple(self.states)
        if not states:
            raise InconsistentRewardDomain("state space must be nonempty")
        index = {s: i for i, s in enumerate(states)}
        if len(index) != len(states):
            raise InconsistentRewardDomain("duplicate state identifiers")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "index", index)

    def __len__(self) -> int:
        return len(self.states)


def path_index(paths: np.ndarray, num_states: int) -> np.ndarray:
    """Base-|S| integer of each path (last axis), s_0 most significant."""
    paths = np.asarray(paths, dtype=np.int64)
    idx = np.zeros(paths.shape[:-1], dtype=np.int64)
    for t in range(paths.shape[-1]):
        idx = idx * num_states + paths[..., t]
    return idx


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class RewardSpec:
    """Reward data for one of the three settings.

    ``payload`` is a ``(|S|**(T+1), d)`` array (exact-depth), a sequence of
    per-depth arrays or a callable ``t -> array`` (cumulative), or a
    ``(|S|, d)`` array (path-independent).
    """

    setting: Setting
    d: int
    R_max: float
    q: float
    payload: Any
    gamma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "setting", Setting(self.setting))
        if self.d < 1 or self.R_max <= 0 or not (self.q >= 1):
            raise InconsistentRewardDomain("need d>=1, R_max>0, q>=1")
        if not 0 <= self.gamma <= 1:
            raise InconsistentRewardDomain(f"gamma must lie in [0,1], got {self.gamma}")
        p = self.payload
        if self.setting is Setting.CUMULATIVE:
            if not callable(p):
                object.__setattr__(self, "payload", tuple(_frozen(a) for a in p))
        else:
            object.__setattr__(self, "payload", _frozen(p))

    def check_norms(self, table: np.ndarray) -> np.ndarray:
        table = np.asarray(table, dtype=float)
        if table.ndim != 2 or table.shape[1] != self.d:
            raise InconsistentRewardDomain(f"reward table must have shape (*, {self.d})")
        if not np.all(np.isfinite(table)):
            raise InconsistentRewardDomain("non-finite reward entry")
        if table.size and lp_norm(table, self.q).max() > self.R_max + _NORM_SLACK:
            raise InconsistentRewardDomain("reward vector exceeds R_max in l_q norm")
        return table

    def depth_table(self, t: int, num_states: int) -> np.ndarray:
        """Cumulative setting: the table of R^(t) over S^{t+1}."""
        if self.setting is not Setting.CUMULATIVE:
            raise InconsistentRewardDomain("depth tables exist only in the cumulative setting")
        if callable(self.payload):
            if num_states ** (t + 1) > PATH_CAP:
                raise DepthOverflow(f"depth {t} needs {num_states}**{t + 1} paths")
            table = self.check_norms(self.payload(t))
        else:
            if t >= len(self.payload):
                raise InconsistentRewardDomain(f"no reward table for depth {t}")
            table = self.payload[t]
        if table.shape[0] != num_states ** (t + 1):
            raise InconsistentRewardDomain(f"depth-{t} table has {table.shape[0]} rows")
        return table


@dataclass(frozen=True, eq=False)
class MrpInstance:
    space: StateSpace
    transitions: np.ndarray
    rewards: RewardSpec
    s0: int
    T: int | float

    def __post_init__(self) -> None:
        n = len(self.space)
        P = np.array(self.transitions, dtype=float)
        if P.shape != (n, n):
            raise InvalidTransitionMatrix(f"transition matrix must be {n}x{n}")
        if np.any(P < 0) or np.any(P > 1):
            raise InvalidTransitionMatrix("transition probabilities must lie in [0,1]")
        rows = P.sum(axis=1)
        if np.any(np.abs(rows - 1) > _ROW_TOL):
            raise InvalidTransitionMatrix("rows must sum to 1")
        P = P / rows[:, None]
        P.setflags(write=False)
        object.__setattr__(self, "transitions", P)

        if not isinstance(self.s0, (int, np.integer)) or not 0 <= self.s0 < n:
            raise InconsistentRewardDomain("s0 must be a state index")
        object.__setattr__(self, "s0", int(self.s0))
        if not _is_depth(self.T):
            raise InconsistentRewardDomain(f"invalid depth {self.T!r}")
        if self.T != INF:
            object.__setattr__(self, "T", int(self.T))
        rw = self.rewards
        if self.T == INF and rw.gamma >= 1:
            raise InfiniteHorizonUndiscounted("T=inf requires gamma<1")

        if rw.setting is Setting.PATH_INDEPENDENT:
            if rw.payload.shape[0] != n:
                raise InconsistentRewardDomain("state reward table must have |S| rows")
            rw.check_norms(rw.payload)
        elif rw.setting is Setting.EXACT_DEPTH:
            if self.T == INF:
                raise InfiniteDepthWithoutTruncation("exact-depth rewards need finite T")
            if n ** (self.T + 1) > PATH_CAP:
                raise DepthOverflow(f"{n}**{self.T + 1} paths exceeds the cap {PATH_CAP}")
            if rw.payload.shape[0] != n ** (self.T + 1):
                raise InconsistentRewardDomain("path reward table must have |S|^(T+1) rows")
            rw.check_norms(rw.payload)
        elif not callable(rw.payload):
            if self.T == INF or len(rw.payload) != self.T + 1:
                raise InconsistentRewardDomain("cumulative rewards need one table per depth 0..T")
            for t in range(self.T + 1):
                rw.check_norms(rw.depth_table(t, n))

    @property
    def num_states(self) -> int:
        return len(self.space)

    @property
    def d(self) -> int:
        return self.rewards.d

    @property
    def gamma(self) -> float:
        return self.rewards.gamma

    def value_bound(self) -> float:
        """Bound on ||V||_q: R_max (exact-depth) or T_gamma * R_max."""
        if self.rewards.setting is Setting.EXACT_DEPTH:
            return self.rewards.R_max
        return discount_sum(self.T, self.gamma) * self.rewards.R_max


def path_independent_instance(
    P: Sequence[Sequence[float]],
    state_rewards: Sequence[Sequence[float]],
    *,
    s0: int = 0,
    T: int | float,
    gamma: float,
    R_max: float,
    q: float,
    states: Sequence | None = None,
) -> MrpInstance:
    R = np.asarray(state_rewards, dtype=float)
    states = tuple(states) if states is not None else tuple(range(len(R)))
    spec = RewardSpec(Setting.PATH_INDEPENDENT, R.shape[1], R_max, q, R, gamma)
    return MrpInstance(StateSpace(states), np.asarray(P, dtype=float), spec, s0, T)


# -- distributions over paths --------------------------------------------------


def path_probabilities(instance: MrpInstance, t: int) -> np.ndarray:
    """Probability of every depth-t path (zero unless it starts at s0)."""
    n = instance.num_states
    if n ** (t + 1) > PATH_CAP:
        raise DepthOverflow(f"{n}**{t + 1} paths exceeds the cap {PATH_CAP}")
    P = instance.transitions
    probs = np.zeros(n)
    probs[instance.s0] = 1.0
    for _ in range(t):
        last = np.arange(probs.size) % n
        probs = (probs[:, None] * P[last]).reshape(-1)
    return probs


def occupation(instance: MrpInstance, t: int) -> np.ndarray:
    """Distribution of s_t."""
    mu = np.zeros(instance.num_states)
    mu[instance.s0] = 1.0
    for _ in range(t):
        mu = mu @ instance.transitions
    return mu


def exact_value(instance: MrpInstance, truncate_at: int | None = None) -> np.ndarray:
    """Ground-truth V(s0) by dynamic programming.

    Path-independent rewards are propagated through occupation
    distributions; cumulative rewards through path distributions; exact-depth
    rewards by weighting every depth-T path. With ``T=inf`` and no
    ``truncate_at``, path-independent values use the closed-form resolvent and
    cumulative values are cut at the depth for delta=1e-12.
    """
    rw = instance.rewards
    if truncate_at is not None and (not isinstance(truncate_at, (int, np.integer)) or truncate_at < 0):
        raise InconsistentRewardDomain("truncate_at must be a nonnegative integer")
    if rw.setting is Setting.EXACT_DEPTH:
        return path_probabilities(instance, instance.T) @ rw.payload

    depth = instance.T if truncate_at is None else min(instance.T, int(truncate_at))
    gamma = rw.gamma
    if depth == INF:
        if rw.setting is Setting.PATH_INDEPENDENT:
            n = instance.num_states
            resolvent = np.linalg.solve(np.eye(n) - gamma * instance.transitions, rw.payload)
            return resolvent[instance.s0]
        depth = truncation_depth(INF, gamma, MACHINE_DELTA)

    value = np.zeros(rw.d)
    if rw.setting is Setting.PATH_INDEPENDENT:
        mu = occupation(instance, 0)
        for t in range(depth + 1):
            value += gamma**t * (mu @ rw.payload)
            mu = mu @ instance.transitions
        return value

    n = instance.num_states
    probs = path_probabilities(instance, 0)
    for t in range(depth + 1):
        value += gamma**t * (probs @ rw.depth_table(t, n))
        if t < depth:
            if probs.size * n > PATH_CAP:
                raise DepthOverflow(f"cumulative DP beyond depth {t} exceeds the path cap")
            last = np.arange(probs.size) % n
            probs = (probs[:, None] * instance.transitions[last]).reshape(-1)
    return value


def truncated_target(instance: MrpInstance, T_delta: int | float) -> np.ndarray:
    """sum_{t<=T_delta} gamma^t E[R^(t)]: what the value oracle encodes."""
    if instance.rewards.setting is Setting.EXACT_DEPTH:
        return exact_value(instance)
    return exact_value(instance, truncate_at=None if T_delta == INF else int(T_delta))


def enumerate_value(instance: MrpInstance, depth: int | None = None) -> np.ndarray:
    """Brute-force V(s0) by listing every path and multiplying probabilities.

    Independent of the DP in :func:`exact_value`; intended for small
    instances. ``depth`` defaults to T and is required when T is infinite.
    """
    rw = instance.rewards
    depth = instance.T if depth is None else depth
    if depth == INF:
        raise InfiniteDepthWithoutTruncation("enumeration needs a finite depth")
    n, P, gamma = instance.num_states, instance.transitions, rw.gamma
    total = np.zeros(rw.d)
    for tail in itertools.product(range(n), repeat=depth):
        path = (instance.s0,) + tail
        prob = 1.0
        for a, b in zip(path[:-1], path[1:]):
            prob *= P[a, b]
        if prob == 0.0:
            continue
        if rw.setting is Setting.EXACT_DEPTH:
            reward = rw.payload[int(path_index(np.array(path), n))]
        elif rw.setting is Setting.PATH_INDEPENDENT:
            reward = sum(gamma**t * rw.payload[s] for t, s in enumerate(path))
        else:
            reward = sum(
                gamma**t * rw.depth_table(t, n)[int(path_index(np.array(path[: t + 1]), n))]
                for t in range(depth + 1)
            )
        total += prob * np.asarray(reward)
    return total


# -- sampling ------------------------------------------------------------------


def _as_rng(rng: np.random.Generator | int | None) -> np.random.Generator:
    return rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)


def sample_paths(
    instance: MrpInstance, length: int, count: int, rng: np.random.Generator | int | None
) -> np.ndarray:
    """``count`` independent paths of the given length, shape (count, length+1)."""
    rng = _as_rng(rng)
    cdf = np.cumsum(instance.transitions, axis=1)
    paths = np.empty((count, length + 1), dtype=np.int64)
    paths[:, 0] = instance.s0
    top = instance.num_states - 1
    for t in range(1, length + 1):
        u = rng.random(count)
        nxt = (u[:, None] >= cdf[paths[:, t - 1]]).sum(axis=1)
        paths[:, t] = np.minimum(nxt, top)
    return paths


def sample_path(instance: MrpInstance, length: int, rng_seed: np.random.Generator | int | None) -> tuple:
    """One sampled path, as state identifiers."""
    idx = sample_paths(instance, length, 1, rng_seed)[0]
    return tuple(instance.space.states[i] for i in idx)


def path_returns(instance: MrpInstance, paths: np.ndarray) -> np.ndarray:
    """Total (discounted) reward vector of each sampled path."""
    rw = instance.rewards
    paths = np.asarray(paths, dtype=np.int64)
    n, depth = instance.num_states, paths.shape[1] - 1
    if rw.setting is Setting.EXACT_DEPTH:
        if depth != instance.T:
            raise InconsistentRewardDomain("exact-depth returns need paths of length T")
        return rw.payload[path_index(paths, n)]
    out = np.zeros((paths.shape[0], rw.d))
    for t in range(depth + 1):
        if rw.setting is Setting.PATH_INDEPENDENT:
            r = rw.payload[paths[:, t]]
        else:
            r = rw.depth_table(t, n)[path_index(paths[:, : t + 1], n)]
        out += rw.gamma**t * r
    return out


# -- serialization -------------------------------------------------------------


def _num(x: float) -> float | str:
    return "inf" if x == INF else x


def _unnum(x: Any) -> Any:
    return INF if x == "inf" else x


def to_json(instance: MrpInstance) -> str:
    rw = instance.rewards
    if rw.setting is Setting.CUMULATIVE:
        if callable(rw.payload):
            raise InconsistentRewardDomain("callable reward payloads cannot be serialized")
        payload = [a.tolist() for a in rw.payload]
    else:
        payload = rw.payload.tolist()
    doc = {
        "format": "qmvmc-mrp/1",
        "states": list(instance.space.states),
        "transitions": instance.transitions.tolist(),
        "setting": rw.setting.value,
        "payload": payload,
        "gamma": rw.gamma,
        "T": _num(instance.T),
        "s0": instance.s0,
        "d": rw.d,
        "q": _num(rw.q),
        "R_max": rw.R_max,
    }
    return json.dumps(doc, allow_nan=False)


def from_json(text: str) -> MrpInstance:
    doc = json.loads(text)
    setting = Setting(doc["setting"])
    payload = doc["payload"]
    if setting is not Setting.CUMULATIVE:
        payload = np.asarray(payload, dtype=float).reshape(-1, doc["d"])
    else:
        payload = [np.asarray(a, dtype=float).reshape(-1, doc["d"]) for a in payload]
    spec = RewardSpec(setting, doc["d"], doc["R_max"], _unnum(doc["q"]), payload, doc["gamma"])
    return MrpInstance(
        StateSpace(tuple(doc["states"])),
        np.asarray(doc["transitions"], dtype=float),
        spec,
        doc["s0"],
        _unnum(doc["T"]),
    )
