"""Value-function lattice operation, phase-estimation readout, orchestration.

The value oracle acts diagonally on the uniform grid superposition: branch
``x`` picks up the phase ``x.V / (2 r_bar R_max)``. Two engines simulate the
readout:

* ``dense``: one amplitude per grid branch (at most ``DENSE_BRANCH_LIMIT``);
  the branch phases are recomputed at state level from the path
  superposition prepared by the transition oracle and the lattice phases of
  the converted reward oracle.
* ``factorized``: the phase is linear in ``x`` and the grid is a product of
  ``d`` axes, so the state after ``M`` applications is a product of ``d``
  independent ``2^n``-dimensional registers.

Both engines give the same readout distribution in exact mode.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DepthOverflow, SlopeBoundViolated, TrimTooAggressive
from .grid import Constraint, Grid, TrimmedSet, build_grid, radius_bounds, resolution_bits
from .mrp import (
    INF,
    MrpInstance,
    Setting,
    exact_value,
    lp_norm,
    occupation,
    path_probabilities,
    truncation_depth,
)
from .oracles import (
    CostModel,
    ErrorInjector,
    OracleKind,
    QueryCounter,
    conversion_leading_factor,
    convert,
    make_reward_oracle,
    make_transition_oracle,
    prepare_path_state,
    set_radius,
)
from .qsim import inverse_qft_array, interpret_signed, make_rng, readout_distribution, sample_outcomes

TOTAL_BUDGET = 1.0 / 6.0
STAGES = 3  # conversion, value-oracle construction, fractional calls
GAMMA_CUTOFF = 1e-9
DENSE_BRANCH_LIMIT = 4096
PATH_REGISTER_CAP = 2**14
_BRANCH_CHUNK = 256


def median_repetitions(d: int) -> int:
    return math.ceil(18.0 * math.log(6.0 * d))


def lower_median(samples: np.ndarray, axis: int = 0) -> np.ndarray:
    """Coordinate-wise median; for even counts the lower of the middle two."""
    s = np.sort(np.asarray(samples), axis=axis)
    return np.take(s, (s.shape[axis] - 1) // 2, axis=axis)


def _inv(p: float) -> float:
    return 0.0 if math.isinf(p) else 1.0 / p


def trimming_budget(delta: float, T_delta: float, setting: Setting) -> float:
    """delta' = min(delta^2/16, (delta/T_delta)^2); exact-depth uses delta^2/16."""
    base = delta * delta / 16.0
    if setting is Setting.EXACT_DEPTH:
        return base
    return min(base, (delta / max(T_delta, 1)) ** 2)


@dataclass(frozen=True)
class BudgetPlan:
    M: int
    eta: float  # per-application operator-norm budget of each stage
    T_delta: int | float
    delta_prime: float
    r_scale: float
    iterations: int


def plan_budget(
    d: int, p: float, q: float, eps: float, R_max: float, setting: Setting, T: float, gamma: float
) -> BudgetPlan:
    """Least fixed point of M -> ceil(32 pi r_bar(delta'(M)) R_max d^{1/p} / eps)."""
    setting = Setting(setting)
    M = 1
    for it in range(1, 500):
        eta = TOTAL_BUDGET / STAGES / M
        T_delta = T if setting is Setting.EXACT_DEPTH else truncation_depth(T, gamma, eta)
        dprime = trimming_budget(eta, T_delta, setting)
        r_scale = radius_bounds(d, q, dprime)[1]
        M_next = math.ceil(32.0 * math.pi * r_scale * R_max * d ** _inv(p) / eps)
        if M_next <= M:
            return BudgetPlan(M, eta, T_delta, dprime, r_scale, it)
        M = M_next
    raise RuntimeError("budget plan did not converge")


@dataclass(frozen=True, eq=False)
class EstimatorConfig:
    d: int
    p: float
    q: float
    eps: float
    R_max: float
    T: int | float
    gamma: float
    setting: Setting
    access: OracleKind
    M: int
    N: int
    n: int
    extra_bits: int
    eta: float
    delta_prime: float
    T_delta: int | float
    r_scale: float
    rotation: np.ndarray
    cost: CostModel = field(default_factory=CostModel)
    seed: int = 0

    @property
    def readout_scale(self) -> float:
        """Value units per readout step: 4 pi r_bar R_max / M."""
        return 4.0 * math.pi * self.r_scale * self.R_max / self.M


def make_estimator_config(
    instance: MrpInstance,
    p: float,
    eps: float,
    rotation: np.ndarray | None = None,
    access: OracleKind | str = OracleKind.LATTICE,
    cost: CostModel | None = None,
    seed: int = 0,
) -> EstimatorConfig:
    rw = instance.rewards
    d = rw.d
    plan = plan_budget(d, p, rw.q, eps, rw.R_max, rw.setting, instance.T, rw.gamma)
    v_bound = instance.value_bound()
    n0 = resolution_bits(d, p, eps / v_bound)
    # guard bits so that the slope bound survives the ceiling in M
    worst_slope = plan.M * math.sqrt(d) * v_bound / (4.0 * math.pi * plan.r_scale * rw.R_max)
    extra = 0
    while worst_slope > 2 ** (n0 + extra) / 3.0:
        extra += 1
    return EstimatorConfig(
        d=d, p=p, q=rw.q, eps=eps, R_max=rw.R_max, T=instance.T, gamma=rw.gamma,
        setting=rw.setting, access=OracleKind(access), M=plan.M, N=median_repetitions(d),
        n=n0 + extra, extra_bits=extra, eta=plan.eta, delta_prime=plan.delta_prime,
        T_delta=plan.T_delta, r_scale=plan.r_scale,
        rotation=np.eye(d) if rotation is None else np.asarray(rotation, dtype=float),
        cost=cost or CostModel(), seed=seed,
    )


def pipeline_trimmed_set(grid: Grid, q: float, delta_prime: float, access: OracleKind) -> TrimmedSet:
    """The reduced grid on which the reward lattice oracle is needed.

    Thresholds are the analytic approximate-radius bounds at delta'/2 (two
    trims) or delta' (lattice access, one trim).
    """
    access = OracleKind(access)
    d = grid.d

    def cut(qq: float, delta: float) -> TrimmedSet:
        return TrimmedSet(grid, (Constraint(qq, radius_bounds(d, qq, delta)[0]),), delta)

    if access is OracleKind.LATTICE:
        return cut(q, delta_prime)
    other = 1.0 if access is OracleKind.DISTRIBUTION else math.inf
    return cut(q, delta_prime / 2).intersect(cut(other, delta_prime / 2))


# -- value oracle --------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    depth: int
    weight: float  # gamma^t (1 in exact-depth)


def _terms(instance: MrpInstance, T_delta: int | float) -> list[Term]:
    rw = instance.rewards
    if rw.setting is Setting.EXACT_DEPTH:
        return [Term(instance.T, 1.0)]
    return [
        Term(t, rw.gamma**t) for t in range(int(T_delta) + 1) if rw.gamma**t >= GAMMA_CUTOFF
    ]


def _term_distribution(instance: MrpInstance, t: int) -> np.ndarray:
    """Input distribution a depth-t term sees (states for path-independent
    rewards, depth-t paths otherwise), by classical DP."""
    if instance.rewards.setting is Setting.PATH_INDEPENDENT:
        return occupation(instance, t)
    return path_probabilities(instance, t)


def _term_table(instance: MrpInstance, t: int) -> np.ndarray:
    rw = instance.rewards
    if rw.setting is Setting.PATH_INDEPENDENT:
        return rw.payload
    if rw.setting is Setting.EXACT_DEPTH:
        return rw.payload
    return rw.depth_table(t, instance.num_states)


@dataclass(frozen=True)
class Charges:
    """Base-oracle calls per value-oracle application."""

    transition: int
    lattice: int
    reward: int
    reward_key: str
    kickback: int
    lattice_per_term: int
    conversion: int
    fractional: int


class ValueOracleHandle:
    """The branch-diagonal value-function operation on a grid."""

    def __init__(
        self,
        instance: MrpInstance,
        grid: Grid,
        trimmed: TrimmedSet,
        delta: float,
        access: OracleKind,
        cost: CostModel,
        counter: QueryCounter,
        r_scale: float,
        T_delta: int | float,
        delta_prime: float,
        terms: list[Term],
        target: np.ndarray,
        charges: Charges,
        seed: int,
    ) -> None:
        self.instance = instance
        self.grid = grid
        self.trimmed = trimmed
        self.delta = delta
        self.access = access
        self.cost = cost
        self.counter = counter
        self.r_scale = r_scale
        self.T_delta = T_delta
        self.delta_prime = delta_prime
        self.terms = terms
        self.target = target
        self.charges = charges
        self.seed = seed
        self.R_max = instance.rewards.R_max
        self.setting = instance.rewards.setting
        self._injectors = tuple(ErrorInjector(delta, seed=seed * 7 + k) for k in range(STAGES))
        self._state_cache: dict = {}

    @property
    def injected(self) -> bool:
        return self.cost.injected

    def charge(self, applications: int) -> None:
        c = self.charges
        self.counter.charge("value_oracle", applications)
        self.counter.charge("transition", applications * c.transition)
        self.counter.charge("lattice", applications * c.lattice)
        self.counter.charge(c.reward_key, applications * c.reward)

    # exact linear semantics
    def point_phases(self, points: np.ndarray) -> np.ndarray:
        """x.V / (2 r_bar R_max) for arbitrary points x (rows)."""
        return np.asarray(points, dtype=float) @ self.target / (2.0 * self.r_scale * self.R_max)

    def branch_phases(self, indices: np.ndarray | None = None) -> np.ndarray:
        idx = np.arange(self.grid.size) if indices is None else np.asarray(indices)
        return self.point_phases(self.grid.point(idx))

    def axis_slopes(self, M: int) -> np.ndarray:
        """Per-axis phase slope k_j = M (O V)_j / (4 pi r_bar R_max)."""
        return M * (self.grid.rotation @ self.target) / (4.0 * math.pi * self.r_scale * self.R_max)

    # state-level construction
    def _term_inputs(self, term: Term) -> tuple[np.ndarray, np.ndarray]:
        """(input probabilities, reward table) for one term.

        Probabilities are squared amplitudes of the path superposition built
        with the transition oracle when the register fits, else the DP.
        """
        key = term.depth
        if key in self._state_cache:
            return self._state_cache[key]
        inst = self.instance
        n_states = inst.num_states
        table = _term_table(inst, term.depth)
        if n_states ** (term.depth + 1) <= PATH_REGISTER_CAP:
            d_p = make_transition_oracle(inst, QueryCounter())  # scratch counter
            amps = prepare_path_state(d_p, inst.s0, term.depth)
            probs = np.abs(amps) ** 2
            if self.setting is Setting.PATH_INDEPENDENT:  # keep only the last register
                probs = probs.reshape(-1, n_states).sum(axis=0)
        elif self.setting is Setting.EXACT_DEPTH:
            raise DepthOverflow("exact-depth path register exceeds 2^14 entries")
        else:
            probs = _term_distribution(inst, term.depth)
        self._state_cache[key] = (probs, table)
        return probs, table

    def _lattice_scale(self) -> float:
        return 2.0 * set_radius(self.trimmed, self.instance.rewards.q) * self.R_max

    def statelevel_phases(self, indices: np.ndarray | None = None) -> np.ndarray:
        """Branch phases rebuilt from path amplitudes and lattice phases.

        In exact mode this equals :meth:`branch_phases`. In injected mode,
        branches outside the trimmed set see a lattice phase of 0, and
        amplitude encodings outside [0, 1] are clipped, which is how the
        construction fails on trimmed-away points.
        """
        idx = np.arange(self.grid.size) if indices is None else np.asarray(indices)
        scale = self._lattice_scale()
        rescale = scale / (2.0 * self.r_scale * self.R_max)  # r_trim / r_bar
        out = np.zeros(len(idx))
        for start in range(0, len(idx), _BRANCH_CHUNK):
            sl = idx[start : start + _BRANCH_CHUNK]
            pts = self.grid.point(sl)
            inside = self.trimmed.mask(pts) if self.injected else np.ones(len(sl), dtype=bool)
            acc = np.zeros(len(sl))
            for term in self.terms:
                probs, table = self._term_inputs(term)
                theta = (pts @ table.T) / scale  # lattice-oracle phases
                theta[~inside] = 0.0
                flag = 0.5 + 0.5 * theta * rescale  # probability of the |1> flag
                if self.injected:
                    flag = np.clip(flag, 0.0, 1.0)
                acc += term.weight * (2.0 * (flag @ probs) - 1.0)
            out[start : start + _BRANCH_CHUNK] = acc
        return out

    def branch_jitter(self, indices: np.ndarray | None = None) -> np.ndarray:
        """Per-branch phase error of one application (sum of stage jitters)."""
        size = self.grid.size if indices is None else len(indices)
        if not self.injected:
            return np.zeros(size)
        full = sum(inj.jitter((self.grid.size,), stream=3) for inj in self._injectors)
        return full if indices is None else full[np.asarray(indices)]

    def axis_jitter(self) -> np.ndarray:
        """Separable per-application phase error, shape (d, 2^n); each stage
        contributes at most delta/d per axis."""
        d, side = self.grid.d, self.grid.side
        if not self.injected:
            return np.zeros((d, side))
        return sum(
            ErrorInjector(inj.budget / d, inj.seed).jitter((d, side), stream=4) for inj in self._injectors
        )

    def apply(self, psi: np.ndarray, power: int = 1) -> np.ndarray:
        """``power`` applications on a dense branch vector (charged)."""
        self.charge(power)
        phases = self.statelevel_phases() + self.branch_jitter()
        return psi * np.exp(1j * power * phases)


def build_value_oracle(
    instance: MrpInstance,
    grid: Grid,
    trimmed: TrimmedSet,
    delta: float,
    access: OracleKind | str = OracleKind.LATTICE,
    cost: CostModel | None = None,
    counter: QueryCounter | None = None,
    r_scale: float | None = None,
    seed: int = 0,
) -> ValueOracleHandle:
    """Assemble the value-function operation and its per-application charges."""
    access = OracleKind(access)
    cost = cost or CostModel()
    counter = counter or QueryCounter()
    rw = instance.rewards
    setting = rw.setting
    T_delta = instance.T if setting is Setting.EXACT_DEPTH else truncation_depth(instance.T, rw.gamma, delta)
    dprime = trimming_budget(delta, T_delta, setting)

    if grid.size <= DENSE_BRANCH_LIMIT:
        kept = trimmed.retained_fraction()
        if kept < 1.0 - dprime - 1e-12:
            raise TrimTooAggressive(f"trimmed set keeps {kept:.6f} < 1 - delta' = {1 - dprime:.6f}")
    elif trimmed.delta > dprime * (1 + 1e-12):
        raise TrimTooAggressive(f"trim budget {trimmed.delta} exceeds delta' = {dprime}")

    if setting is Setting.EXACT_DEPTH and instance.num_states ** (instance.T + 1) > PATH_REGISTER_CAP:
        raise DepthOverflow("exact-depth path register exceeds 2^14 entries")
    r_bar = radius_bounds(grid.d, rw.q, dprime)[1] if r_scale is None else r_scale
    terms = _terms(instance, T_delta)
    if setting is Setting.EXACT_DEPTH:
        target = exact_value(instance)
    else:
        target = np.zeros(rw.d)
        for term in terms:
            target += term.weight * (_term_distribution(instance, term.depth) @ _term_table(instance, term.depth))

    # per-application charges
    K = cost.kickback(delta)
    L = cost.multiplier(set_radius(trimmed, rw.q) / r_bar, delta)
    frac_terms = sum(1 for t in terms if t.weight < 1.0)
    F = cost.kickback(delta / frac_terms) if frac_terms else 1
    reps = [F if t.weight < 1.0 else 1 for t in terms]
    transition = K * sum(r * t.depth for r, t in zip(reps, terms))
    lattice = L * sum(reps)
    if access is OracleKind.LATTICE:
        conversion = 1
    else:
        m = conversion_leading_factor(access, OracleKind.LATTICE, trimmed, rw.d, rw.q)
        conversion = cost.multiplier(m, delta / lattice)
    charges = Charges(
        transition=transition, lattice=lattice, reward=lattice * conversion,
        reward_key=f"reward_{access.value}", kickback=K, lattice_per_term=L,
        conversion=conversion, fractional=F if frac_terms else 0,
    )
    return ValueOracleHandle(
        instance, grid, trimmed, delta, access, cost, counter, r_bar, T_delta, dprime,
        terms, target, charges, seed,
    )


def conversion_chain(
    instance: MrpInstance, handle: ValueOracleHandle, depth: int | None = None, counter: QueryCounter | None = None
):
    """Base reward oracle and the lattice oracle derived from it on the
    trimmed set (for inspection; the value oracle charges by formula)."""
    counter = counter or QueryCounter()
    base = make_reward_oracle(
        instance, handle.access, points=handle.trimmed if handle.access is OracleKind.LATTICE else None,
        depth=depth, counter=counter,
    )
    if handle.access is OracleKind.LATTICE:
        return base, base
    lattice = convert(
        base, OracleKind.LATTICE, handle.trimmed, handle.delta / handle.charges.lattice, handle.cost,
    )
    return base, lattice


# -- estimation ----------------------------------------------------------------


@dataclass
class Estimate:
    v: np.ndarray
    target: np.ndarray
    error: float
    success: bool
    p: float
    eps: float
    M: int
    N: int
    n: int
    readouts: np.ndarray  # (N, d) signed readouts before the median
    counts: dict
    engine: str
    wall_clock: float
    model: dict = field(default_factory=dict)


def _choose_engine(handle: ValueOracleHandle, engine: str) -> str:
    if engine != "auto":
        return engine
    return "dense" if handle.grid.size <= DENSE_BRANCH_LIMIT else "factorized"


def dense_readout_probabilities(handle: ValueOracleHandle, M: int) -> np.ndarray:
    """Joint outcome distribution over all d registers, shape (2^n,)*d, from
    the branch-level state after M applications and per-axis inverse QFTs."""
    grid = handle.grid
    phases = handle.statelevel_phases() + handle.branch_jitter()
    psi = (np.exp(1j * M * phases) / math.sqrt(grid.size)).reshape((grid.side,) * grid.d)
    for ax in range(grid.d):
        psi = inverse_qft_array(psi, ax)
    probs = np.abs(psi) ** 2
    return probs / probs.sum()


def axis_readout_probabilities(handle: ValueOracleHandle, M: int) -> np.ndarray:
    """Per-axis outcome distributions, shape (d, 2^n), of the product state."""
    slopes = handle.axis_slopes(M)
    jitter = handle.axis_jitter()
    n = handle.grid.n
    return np.stack([
        readout_distribution(slopes[j], n, M * jitter[j] if handle.injected else None)
        for j in range(handle.grid.d)
    ])


def readout_outcomes(handle: ValueOracleHandle, M: int, shots: int, rng: np.random.Generator, engine: str = "auto") -> np.ndarray:
    """Unsigned per-axis outcomes of ``shots`` independent phase-estimation
    runs (shape (shots, d)). Does not charge the counter."""
    engine = _choose_engine(handle, engine)
    grid = handle.grid
    if engine == "dense":
        flat = sample_outcomes(dense_readout_probabilities(handle, M).reshape(-1), shots, rng)
        return grid.digits(flat).reshape(shots, grid.d)
    probs = axis_readout_probabilities(handle, M)
    out = np.empty((shots, grid.d), dtype=np.int64)
    for j in range(grid.d):
        out[:, j] = sample_outcomes(probs[j], shots, rng)
    return out


def estimate_value(
    handle: ValueOracleHandle,
    cfg: EstimatorConfig,
    rng_seed: int,
    trial: int = 0,
    engine: str = "auto",
    true_value: np.ndarray | None = None,
) -> Estimate:
    """M-fold value oracle, per-axis inverse QFT, signed readout, N-fold median."""
    start = time.perf_counter()
    grid = handle.grid
    if grid.n != cfg.n or grid.d != cfg.d:
        raise ValueError("config does not match the handle's grid")
    slopes = handle.axis_slopes(cfg.M)
    if np.max(np.abs(slopes)) > 2**grid.n / 3.0 + 1e-9:
        raise SlopeBoundViolated(f"max slope {np.max(np.abs(slopes)):.3f} > 2^n/3 = {2**grid.n / 3:.3f}")
    rng = make_rng(rng_seed, trial)
    engine = _choose_engine(handle, engine)
    outcomes = readout_outcomes(handle, cfg.M, cfg.N, rng, engine)
    handle.charge(cfg.M * cfg.N)
    readouts = interpret_signed(outcomes, grid.n)
    v = cfg.readout_scale * lower_median(readouts, axis=0).astype(float)
    V = exact_value(handle.instance) if true_value is None else true_value
    target = grid.rotation @ V
    err = float(lp_norm(v - target, cfg.p))
    return Estimate(
        v=v, target=target, error=err, success=err <= cfg.eps, p=cfg.p, eps=cfg.eps,
        M=cfg.M, N=cfg.N, n=grid.n, readouts=readouts, counts=handle.counter.snapshot(),
        engine=engine, wall_clock=time.perf_counter() - start,
    )


# -- cost model report ---------------------------------------------------------


def xi_exponent(access: OracleKind, q: float) -> float:
    """Exponent of d in the reward-oracle row for each access kind."""
    inv_q = _inv(q)
    return {
        OracleKind.PHASE: 1.0,
        OracleKind.PROBABILITY: 1.0 - inv_q / 2.0,
        OracleKind.DISTRIBUTION: 1.0 - inv_q,
        OracleKind.LATTICE: 1.0 - inv_q,
    }[OracleKind(access)]


def cost_model(cfg: EstimatorConfig, handle: ValueOracleHandle) -> dict:
    """Un-ceiled charge products and their power-law parts.

    ``polylog_*`` is the continuous product divided by the leading power law
    (R_max/eps) d^a (T in exact-depth), so ``counter / polylog`` isolates the
    power law up to ceiling effects.
    """
    cost, d, inv_p = cfg.cost, cfg.d, _inv(cfg.p)
    q = cfg.q
    M_c = 32.0 * math.pi * cfg.r_scale * cfg.R_max * d**inv_p / cfg.eps
    N_c = 18.0 * math.log(6.0 * d)
    r_trim = set_radius(handle.trimmed, q)
    L_c = cost.c1 * (r_trim / cfg.r_scale) * cost.polylog(cfg.eta)
    K_c = cost.polylog(cfg.eta)
    terms = handle.terms
    frac_terms = sum(1 for t in terms if t.weight < 1.0)
    F_c = cost.polylog(cfg.eta / frac_terms) if frac_terms else 1.0
    reps = [F_c if t.weight < 1.0 else 1.0 for t in terms]
    lattice_c = L_c * sum(reps)
    if cfg.access is OracleKind.LATTICE:
        C_c = 1.0
    else:
        m = conversion_leading_factor(cfg.access, OracleKind.LATTICE, handle.trimmed, d, q)
        C_c = cost.c1 * m * cost.polylog(cfg.eta / handle.charges.lattice)
    dp_c = M_c * N_c * K_c * sum(r * t.depth for r, t in zip(reps, terms))
    reward_c = M_c * N_c * lattice_c * C_c
    t_factor = cfg.T if cfg.setting is Setting.EXACT_DEPTH else 1.0
    lead_dp = t_factor * cfg.R_max / cfg.eps * d ** (inv_p + max(0.0, 0.5 - _inv(q)))
    lead_reward = cfg.R_max / cfg.eps * d ** (inv_p + xi_exponent(cfg.access, q))
    return {
        "polylog_transition": dp_c / lead_dp if dp_c else 1.0,
        "polylog_reward": reward_c / lead_reward,
        "lead_transition": lead_dp,
        "lead_reward": lead_reward,
    }


def prepare_estimator(
    instance: MrpInstance,
    p: float,
    eps: float,
    rotation: np.ndarray | None = None,
    access: OracleKind | str = OracleKind.LATTICE,
    cost: CostModel | None = None,
    seed: int = 0,
) -> tuple[EstimatorConfig, ValueOracleHandle]:
    """Grid, trimmed set and value oracle for one estimation run."""
    cost = cost or CostModel()
    access = OracleKind(access)
    cfg = make_estimator_config(instance, p, eps, rotation, access, cost, seed)
    grid = build_grid(cfg.d, p, eps / instance.value_bound(), cfg.rotation, cfg.extra_bits)
    trimmed = pipeline_trimmed_set(grid, cfg.q, cfg.delta_prime, access)
    handle = build_value_oracle(instance, grid, trimmed, cfg.eta, access, cost, QueryCounter(), seed=seed)
    if handle.delta_prime != cfg.delta_prime or handle.r_scale != cfg.r_scale:
        raise RuntimeError("value oracle and estimator disagree on the budget")
    return cfg, handle


def solve_mvmc(
    instance: MrpInstance,
    p: float,
    eps: float,
    rotation: np.ndarray | None = None,
    access: OracleKind | str = OracleKind.LATTICE,
    mode: str = "exact",
    seed: int = 0,
    cost: CostModel | None = None,
    trial: int = 0,
    engine: str = "auto",
    true_value: np.ndarray | None = None,
) -> Estimate:
    """Estimate O V(s0) to l_p precision eps from the chosen reward access."""
    access = OracleKind(access)
    if access is OracleKind.TRANSITION:
        raise ValueError("access must be a reward oracle kind")
    if cost is None:
        cost = CostModel(mode=mode)
    elif cost.mode != mode:
        cost = CostModel(cost.c1, cost.c2, mode)
    if access in (OracleKind.PROBABILITY, OracleKind.DISTRIBUTION):
        _check_nonnegative(instance)
    cfg, handle = prepare_estimator(instance, p, eps, rotation, access, cost, seed)
    est = estimate_value(handle, cfg, seed, trial, engine, true_value)
    est.model = cost_model(cfg, handle)
    est.model["charges"] = handle.charges
    return est


def _check_nonnegative(instance: MrpInstance) -> None:
    from .errors import NegativeRewardForAmplitudeOracle

    rw = instance.rewards
    if rw.setting is Setting.CUMULATIVE:
        ok = callable(rw.payload) or all(np.all(a >= 0) for a in rw.payload)
    else:
        ok = bool(np.all(rw.payload >= 0))
    if not ok:
        raise NegativeRewardForAmplitudeOracle("amplitude-type access needs nonnegative rewards")
