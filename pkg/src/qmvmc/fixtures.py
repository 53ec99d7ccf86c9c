"""Hard instances with closed-form value functions, the high-overlap decoder
and the classical Hoeffding baseline."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import BitsOutsideDomain, ParameterOutOfLemmaRange
from .grid import hadamard
from .mrp import (
    INF,
    MrpInstance,
    RewardSpec,
    Setting,
    StateSpace,
    discount_sum,
    lp_norm,
    path_returns,
    sample_paths,
    truncation_depth,
)

_DECODE_CHUNK = 2**16
EXHAUSTIVE_DECODE_MAX_D = 20


class Family(str, Enum):
    PHASE = "single_loop_phase"
    PROBABILITY = "single_loop_probability"
    DISTRIBUTION = "single_loop_distribution"
    MAJORITY_PARITY = "majority_parity"


@dataclass(frozen=True, eq=False)
class HardInstanceDescriptor:
    """Everything needed to score and decode a fixture.

    The closed form is ``V = offset + spacing * O' @ c`` where ``c`` is the
    hidden bit vector (single-loop) or the majority vector c_b
    (majority-parity).
    """

    family: Family
    bits: np.ndarray
    d: int
    eps: float  # the family's precision parameter
    offset: np.ndarray
    spacing: float
    O_prime: np.ndarray
    k: int | None = None
    T_prime: int | None = None

    @property
    def target_bits(self) -> np.ndarray:
        if self.family is Family.MAJORITY_PARITY:
            return majority_vector(self.bits)
        return self.bits

    def closed_form(self, x: np.ndarray | None = None) -> np.ndarray:
        x = self.target_bits if x is None else np.asarray(x, dtype=float)
        return self.offset + self.spacing * (x @ self.O_prime.T)


def _bits(b, d: int) -> np.ndarray:
    arr = np.asarray(b, dtype=np.int64).reshape(-1)
    if arr.shape != (d,) or np.any((arr != 0) & (arr != 1)):
        raise ValueError(f"expected {d} bits in {{0,1}}")
    return arr


# -- single-loop instances -----------------------------------------------------


def single_loop_rewards(family: Family | str, b, d: int, eps: float, T_gamma: float, q: float, R_max: float) -> np.ndarray:
    """Per-step reward vector r^(b) of the one-state loop."""
    family = Family(family)
    b = _bits(b, d)
    step = 8.0 * eps / (T_gamma * d)
    if family is Family.PHASE:
        return step * b.astype(float)
    if family in (Family.PROBABILITY, Family.DISTRIBUTION):
        base = R_max / (2.0 * d ** (0.0 if math.isinf(q) else 1.0 / q))
        return (base - step) + step * b.astype(float)
    raise ValueError(f"{family} is not a single-loop family")


def single_loop_instance(
    family: Family | str,
    b,
    d: int,
    eps: float,
    T: int | float,
    gamma: float,
    q: float,
    R_max: float,
    setting: Setting | str = Setting.PATH_INDEPENDENT,
) -> tuple[MrpInstance, HardInstanceDescriptor]:
    """One state looping forever with per-step reward r^(b); V = T_gamma r^(b)."""
    family = Family(family)
    setting = Setting(setting)
    b = _bits(b, d)
    if not 0 < eps < d * R_max:
        raise ParameterOutOfLemmaRange(f"need 0 < eps < d R_max, got eps={eps}")
    T_gamma = discount_sum(T, gamma)
    step = 8.0 * eps / (T_gamma * d)
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    if family is not Family.PHASE and step > R_max / (2.0 * d**inv_q):
        raise ParameterOutOfLemmaRange("offset R_max/(2 d^{1/q}) - 8 eps/(T_gamma d) is negative")
    r = single_loop_rewards(family, b, d, eps, T_gamma, q, R_max)
    bound = T_gamma if setting is Setting.EXACT_DEPTH else 1.0
    if lp_norm(r, q) * bound > R_max * (1 + 1e-12):
        raise ParameterOutOfLemmaRange("reward vector exceeds R_max in l_q norm")

    row = r[None, :]
    if setting is Setting.PATH_INDEPENDENT:
        payload = row
    elif setting is Setting.EXACT_DEPTH:
        if T == INF:
            raise ParameterOutOfLemmaRange("exact-depth loop needs finite T")
        payload = T_gamma * row
    else:
        payload = (lambda t: row) if T == INF else tuple(row for _ in range(int(T) + 1))
    spec = RewardSpec(setting, d, R_max, q, payload, gamma)
    inst = MrpInstance(StateSpace(("s0",)), np.ones((1, 1)), spec, 0, T)

    offset = T_gamma * (r - step * b)  # zero for the phase family
    desc = HardInstanceDescriptor(
        family=family, bits=b, d=d, eps=eps, offset=offset,
        spacing=8.0 * eps / d, O_prime=np.eye(d),
    )
    return inst, desc


# -- majority-parity instances -------------------------------------------------


def t_prime(T: int | float, gamma: float) -> int:
    """T' = max{32, 2(2 floor(T_gamma/4) - 1)}."""
    T_gamma = discount_sum(T, gamma)
    return max(32, 2 * (2 * math.floor(T_gamma / 4) - 1))


def majority_parity_parameters(T_prime: int, eps: float, R_max: float, d: int, q: float) -> tuple[int, float]:
    """(k, eps') for the gadget: k = 2 floor(T' R_max s / (32 eps)) - 1 and
    eps' = T' R_max s / (16 k), with s = d^{1/2-1/q} for q > 2, else 1."""
    s = _hadamard_scale(d, q)
    k = 2 * math.floor(T_prime * R_max * s / (32.0 * eps)) - 1
    if k < 1:
        raise ParameterOutOfLemmaRange(f"eps={eps} too large for T'={T_prime}")
    return k, T_prime * R_max * s / (16.0 * k)


def _hadamard_scale(d: int, q: float) -> float:
    if q <= 2:
        return 1.0
    inv_q = 0.0 if math.isinf(q) else 1.0 / q
    return d ** (0.5 - inv_q)


def row_parities(bits: np.ndarray) -> np.ndarray:
    """Parity of each (j, l) row of a (d, k, T'/2) bit array."""
    return np.asarray(bits, dtype=np.int64).sum(axis=-1) % 2


def in_domain(bits: np.ndarray) -> bool:
    """Membership in D: per j, the k row parities sum to floor(k/2) or ceil(k/2)."""
    bits = np.asarray(bits)
    if bits.ndim != 3 or np.any((bits != 0) & (bits != 1)):
        return False
    k = bits.shape[1]
    sums = row_parities(bits).sum(axis=1)
    return bool(np.all((sums == k // 2) | (sums == (k + 1) // 2)))


def majority_vector(bits: np.ndarray) -> np.ndarray:
    """c_b: 1 where the row parities of block j sum to ceil(k/2)."""
    bits = np.asarray(bits)
    k = bits.shape[1]
    return (row_parities(bits).sum(axis=1) == (k + 1) // 2).astype(np.int64)


def majority_parity_instance(
    bits, d: int, k: int, T_prime: int, q: float, R_max: float
) -> tuple[MrpInstance, HardInstanceDescriptor]:
    """Layered XOR gadget: each of the d*k rows is entered with probability
    1/(dk), flips a carried bit at layer t when b_{j,l,t}=1, and parks in
    its last layer. The last-layer state with carried bit 1 pays
    R_max e_j (q <= 2) or d^{1/2-1/q} R_max H e_j (q > 2).

    Undiscounted (gamma=1) path-independent rewards at depth T = T', so the
    parked state is occupied for exactly T'/2 steps.
    """
    if T_prime < 2 or T_prime % 2:
        raise ParameterOutOfLemmaRange("T' must be a positive even integer")
    if k < 1 or k % 2 == 0:
        raise ParameterOutOfLemmaRange("k must be odd")
    L = T_prime // 2
    bits = np.asarray(bits, dtype=np.int64)
    if bits.shape != (d, k, L) or not in_domain(bits):
        raise BitsOutsideDomain("bits are not in the majority-parity domain")
    O_prime = np.eye(d) if q <= 2 else hadamard(d)
    scale = _hadamard_scale(d, q)

    # state ids: 0 is s0; row r = j*k + l owns 1 + 2L consecutive states
    per_row = 1 + 2 * L
    n = 1 + d * k * per_row

    def sid(row: int, t: int, c: int) -> int:
        return 1 + row * per_row + (0 if t == 0 else 1 + 2 * (t - 1) + c)

    P = np.zeros((n, n))
    R = np.zeros((n, d))
    names = ["s0"]
    for j in range(d):
        for l in range(k):
            row = j * k + l
            P[0, sid(row, 0, 0)] = 1.0 / (d * k)
            names.append(f"s_{j}_{l}_0_0")
            for t in range(1, L + 1):
                names.extend([f"s_{j}_{l}_{t}_0", f"s_{j}_{l}_{t}_1"])
            for t in range(1, L + 1):
                flip = bits[j, l, t - 1]
                for c in (0, 1) if t > 1 else (0,):
                    P[sid(row, t - 1, c), sid(row, t, c ^ flip)] = 1.0
            for c in (0, 1):
                P[sid(row, L, c), sid(row, L, c)] = 1.0
            R[sid(row, L, 1)] = scale * R_max * O_prime[:, j]
    spec = RewardSpec(Setting.PATH_INDEPENDENT, d, R_max, q, R, 1.0)
    inst = MrpInstance(StateSpace(tuple(names)), P, spec, 0, T_prime)

    unit = T_prime * R_max * scale / (2.0 * d * k)
    desc = HardInstanceDescriptor(
        family=Family.MAJORITY_PARITY, bits=bits, d=d, eps=T_prime * R_max * scale / (16.0 * k),
        offset=unit * (k // 2) * (O_prime @ np.ones(d)), spacing=unit, O_prime=O_prime,
        k=k, T_prime=T_prime,
    )
    return inst, desc


def random_domain_bits(d: int, k: int, T_prime: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform bits conditioned on the domain: pick each block's parity
    count, then the parity-1 rows, then bits with those row parities."""
    L = T_prime // 2
    bits = rng.integers(0, 2, (d, k, L))
    for j in range(d):
        ones = k // 2 + int(rng.integers(0, 2))
        target = np.zeros(k, dtype=np.int64)
        target[rng.choice(k, size=ones, replace=False)] = 1
        fix = (bits[j].sum(axis=1) % 2) != target
        bits[j, fix, 0] ^= 1
    return bits


# -- decoding ------------------------------------------------------------------


def _candidates(d: int, start: int, stop: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    return ((idx[:, None] >> np.arange(d - 1, -1, -1)) & 1).astype(float)


def high_overlap_decode(v: np.ndarray, desc: HardInstanceDescriptor, O: np.ndarray) -> np.ndarray:
    """argmin over x in {0,1}^d of ||v - O V^(x)||_1.

    ``v`` estimates O V (rotated frame). Exhaustive up to d = 20; beyond that,
    coordinates are rounded to the nearest lattice level after undoing both
    rotations, which is exact when O = O' = I.
    """
    v = np.asarray(v, dtype=float)
    O = np.asarray(O, dtype=float)
    d = desc.d
    if d > EXHAUSTIVE_DECODE_MAX_D:
        u = desc.O_prime.T @ (O.T @ v - desc.offset) / desc.spacing
        return (u >= 0.5).astype(np.int64)
    shift = v - O @ desc.offset
    basis = desc.spacing * (O @ desc.O_prime)  # column j is the step of bit j
    best, best_x = math.inf, None
    for start in range(0, 2**d, _DECODE_CHUNK):
        xs = _candidates(d, start, min(start + _DECODE_CHUNK, 2**d))
        cost = np.abs(shift[None, :] - xs @ basis.T).sum(axis=1)
        i = int(np.argmin(cost))
        if cost[i] < best:
            best, best_x = cost[i], xs[i]
    return best_x.astype(np.int64)


def overlap_distance(b: np.ndarray, b_star: np.ndarray, O: np.ndarray, O_prime: np.ndarray) -> float:
    """||O O' (b - b*)||_1, the quantity the decoder keeps below d/4."""
    diff = np.asarray(b, dtype=float) - np.asarray(b_star, dtype=float)
    return float(np.abs(O @ O_prime @ diff).sum())


# -- classical baseline --------------------------------------------------------


def classical_sample_count(B: float, eps: float, delta: float, d: int) -> int:
    """N = ceil(2 B^2 / eps^2 * ln(2d/delta)) paths for l_inf precision eps."""
    if B < 0 or eps <= 0 or not 0 < delta < 1 or d < 1:
        raise ValueError("need B>=0, eps>0, 0<delta<1, d>=1")
    return max(1, math.ceil(2.0 * B * B / (eps * eps) * math.log(2.0 * d / delta) - 1e-9))


def classical_estimate(
    instance: MrpInstance, eps: float, delta: float, rng_seed: int | np.random.Generator | None
) -> np.ndarray:
    """Coordinate-wise sample mean of the returns of N sampled paths.

    Every coordinate of a return is bounded by B = value bound, since
    |x_j| <= ||x||_q. Infinite horizons are cut where the discounted tail
    drops below 1e-12 R_max.
    """
    B = instance.value_bound()
    N = classical_sample_count(B, eps, delta, instance.d)
    T = instance.T
    length = truncation_depth(T, instance.gamma, 1e-12) if T == INF else T
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    total = np.zeros(instance.d)
    for start in range(0, N, 4096):
        paths = sample_paths(instance, int(length), min(4096, N - start), rng)
        total += path_returns(instance, paths).sum(axis=0)
    return total / N


def fixture_bits(family: Family | str, d: int, rng: np.random.Generator, k: int = 1, T_prime: int = 32) -> np.ndarray:
    """Random hidden bits valid for the family."""
    if Family(family) is Family.MAJORITY_PARITY:
        return random_domain_bits(d, k, T_prime, rng)
    return rng.integers(0, 2, d)


def all_domain_bits(d: int, k: int, T_prime: int):
    """Every bit array of shape (d, k, T'/2) (for exhaustive checks)."""
    size = d * k * (T_prime // 2)
    for flat in itertools.product((0, 1), repeat=size):
        yield np.array(flat, dtype=np.int64).reshape(d, k, T_prime // 2)
