"""Experiment runner: config parsing, trial batches, CSV rows, scaling fits
and plots.

A run is fully determined by its config file and master seed. Trial ``i`` of
sweep point ``k`` gets the sub-seed ``blake2b(master, k, i)``, so results do
not depend on how trials are scheduled across workers.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigInvalid, InsufficientPoints, OutputUnwritable
from .fixtures import Family, fixture_bits, high_overlap_decode, majority_parity_instance, overlap_distance, single_loop_instance
from .grid import hadamard, random_orthogonal
from .mrp import INF, Setting, discount_sum
from .oracles import REWARD_KINDS, CostModel, OracleKind
from .pipeline import solve_mvmc

SCHEMA_VERSION = 1
WORKERS_ENV = "QMVMC_WORKERS"

COLUMNS = (
    "schema", "name", "point", "trial", "seed", "family", "access", "setting", "mode",
    "d", "p", "q", "eps", "R_max", "T", "gamma", "c1", "c2", "M", "N", "n",
    "v", "target", "error", "success", "bits", "decoded", "overlap",
    "count_value_oracle", "count_transition", "count_lattice", "count_reward",
    "polylog_transition", "polylog_reward",
)  # fmt: skip

COUNTER_POLYLOG = {"reward": "polylog_reward", "transition": "polylog_transition"}
AXIS_COLUMNS = {"d": "d", "eps": "eps", "T": "T"}

DEFAULTS = {
    "name": "run",
    "access": "lattice",
    "p": "inf",
    "eps_units": "absolute",
    "rotation": {"kind": "identity"},
    "mode": "exact",
    "cost": {"c1": 1.0, "c2": 1.0},
    "trials": 1,
    "seed": 0,
    "engine": "auto",
}
FIXTURE_DEFAULTS = {"T": 0, "gamma": 1.0, "R_max": 1.0, "q": 2.0, "setting": "path_independent", "k": 1}


# -- config --------------------------------------------------------------------


def _num(x):
    if isinstance(x, str) and x.strip().lower() in ("inf", "infinity"):
        return INF
    return x


def _merge(defaults: dict, given: dict) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigInvalid(msg)


def validate_config(raw: dict) -> dict:
    """Fill defaults and check types; raises ConfigInvalid."""
    _require(isinstance(raw, dict), "config must be a mapping")
    known = set(DEFAULTS) | {"fixture", "eps", "output", "sweep"}
    unknown = set(raw) - known
    _require(not unknown, f"unknown config keys: {sorted(unknown)}")
    _require("fixture" in raw and isinstance(raw["fixture"], dict), "config needs a fixture mapping")
    _require("eps" in raw, "config needs eps")
    cfg = _merge(DEFAULTS, raw)
    fx = _merge(FIXTURE_DEFAULTS, raw["fixture"])
    cfg["fixture"] = fx
    try:
        fx["family"] = Family(fx.get("family")).value
    except ValueError:
        raise ConfigInvalid(f"unknown fixture family {fx.get('family')!r}") from None
    _require(isinstance(fx.get("d"), int) and fx["d"] >= 1, "fixture.d must be a positive integer")
    for key in ("T", "q"):
        if key in fx:
            fx[key] = _num(fx[key])
    _require(fx["T"] == INF or (isinstance(fx["T"], int) and fx["T"] >= 0), "fixture.T must be a nonnegative int or inf")
    _require(isinstance(fx["gamma"], (int, float)) and 0 <= fx["gamma"] <= 1, "fixture.gamma must lie in [0,1]")
    _require(isinstance(fx["R_max"], (int, float)) and fx["R_max"] > 0, "fixture.R_max must be positive")
    _require(fx["q"] == INF or (isinstance(fx["q"], (int, float)) and fx["q"] >= 1), "fixture.q must be >= 1")
    try:
        fx["setting"] = Setting(fx["setting"]).value
    except ValueError:
        raise ConfigInvalid(f"unknown setting {fx['setting']!r}") from None
    cfg["p"] = _num(cfg["p"])
    _require(cfg["p"] == INF or (isinstance(cfg["p"], (int, float)) and cfg["p"] >= 1), "p must be >= 1")
    _require(isinstance(cfg["eps"], (int, float)) and cfg["eps"] > 0, "eps must be positive")
    _require(cfg["eps_units"] in ("absolute", "value_bound"), "eps_units is absolute or value_bound")
    try:
        access = OracleKind(cfg["access"])
    except ValueError:
        raise ConfigInvalid(f"unknown access kind {cfg['access']!r}") from None
    _require(access in REWARD_KINDS, "access must be a reward oracle kind")
    _require(cfg["mode"] in ("exact", "injected"), "mode is exact or injected")
    _require(cfg["engine"] in ("auto", "dense", "factorized"), "engine is auto, dense or factorized")
    rot = cfg["rotation"]
    _require(isinstance(rot, dict) and rot.get("kind") in ("identity", "hadamard", "random"), "rotation.kind is identity, hadamard or random")
    cost = cfg["cost"]
    _require(all(isinstance(cost.get(c), (int, float)) and cost[c] > 0 for c in ("c1", "c2")), "cost.c1 and cost.c2 must be positive")
    _require(isinstance(cfg["trials"], int) and cfg["trials"] >= 1, "trials must be a positive integer")
    _require(isinstance(cfg["seed"], int) and cfg["seed"] >= 0, "seed must be a nonnegative integer")
    if "sweep" in cfg:
        sw = cfg["sweep"]
        _require(isinstance(sw, dict) and isinstance(sw.get("param"), str) and isinstance(sw.get("values"), list) and sw["values"], "sweep needs param and a nonempty values list")
    return cfg


def load_config(path: str | os.PathLike) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
    return validate_config(raw)


def _set_path(cfg: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = cfg
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = _num(value)


def sweep_points(cfg: dict) -> list[dict]:
    """One validated config per sweep value (or the config itself)."""
    if "sweep" not in cfg:
        return [cfg]
    points = []
    for value in cfg["sweep"]["values"]:
        point = copy.deepcopy(cfg)
        del point["sweep"]
        _set_path(point, cfg["sweep"]["param"], value)
        points.append(validate_config(point))
    return points


def sub_seed(master: int, point: int, trial: int) -> int:
    digest = hashlib.blake2b(f"{master}:{point}:{trial}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


# -- one trial -----------------------------------------------------------------


def rotation_matrix(spec: dict, d: int, master: int) -> np.ndarray:
    kind = spec["kind"]
    if kind == "identity":
        return np.eye(d)
    if kind == "hadamard":
        return hadamard(d)
    return random_orthogonal(d, int(spec.get("seed", master)))


def build_fixture(cfg: dict, point: int):
    """(instance, descriptor) for a config point; bits come from the config or
    from the master seed."""
    fx = cfg["fixture"]
    d = fx["d"]
    family = Family(fx["family"])
    rng = np.random.default_rng(sub_seed(cfg["seed"], point, -1))
    if family is Family.MAJORITY_PARITY:
        T_prime = int(fx.get("T_prime", 32))
        bits = np.asarray(fx["bits"]) if "bits" in fx else fixture_bits(family, d, rng, fx["k"], T_prime)
        return majority_parity_instance(bits, d, fx["k"], T_prime, fx["q"], fx["R_max"])
    bits = np.asarray(fx["bits"]) if "bits" in fx else fixture_bits(family, d, rng)
    fam_eps = fx.get("eps", _solver_eps(cfg))
    return single_loop_instance(family, bits, d, fam_eps, fx["T"], fx["gamma"], fx["q"], fx["R_max"], fx["setting"])


def _solver_eps(cfg: dict) -> float:
    fx = cfg["fixture"]
    if cfg["eps_units"] == "absolute":
        return float(cfg["eps"])
    bound = fx["R_max"] if fx["setting"] == Setting.EXACT_DEPTH.value else discount_sum(fx["T"], fx["gamma"]) * fx["R_max"]
    return float(cfg["eps"]) * bound


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "inf" if math.isinf(x) else repr(float(x))
    if isinstance(x, np.ndarray):
        return ";".join(_fmt(v) for v in x.reshape(-1).tolist())
    return str(x)


def run_trial(cfg: dict, point: int, trial: int) -> tuple[dict, float]:
    """One seeded trial; returns (CSV row, wall-clock seconds)."""
    start = time.perf_counter()
    seed = sub_seed(cfg["seed"], point, trial)
    inst, desc = build_fixture(cfg, point)
    d = inst.d
    O = rotation_matrix(cfg["rotation"], d, cfg["seed"])
    cost = CostModel(cfg["cost"]["c1"], cfg["cost"]["c2"], cfg["mode"])
    eps = _solver_eps(cfg)
    est = solve_mvmc(
        inst, cfg["p"], eps, O, cfg["access"], cfg["mode"], seed=seed, cost=cost, trial=trial,
        engine=cfg["engine"], true_value=desc.closed_form(),
    )
    decoded = high_overlap_decode(est.v, desc, O)
    fx = cfg["fixture"]
    counts = est.counts
    row = {
        "schema": SCHEMA_VERSION, "name": cfg["name"], "point": point, "trial": trial, "seed": seed,
        "family": fx["family"], "access": OracleKind(cfg["access"]).value, "setting": fx["setting"],
        "mode": cfg["mode"], "d": d, "p": float(cfg["p"]), "q": float(fx["q"]), "eps": eps,
        "R_max": float(fx["R_max"]), "T": inst.T if inst.T == INF else int(inst.T), "gamma": float(fx["gamma"]),
        "c1": float(cost.c1), "c2": float(cost.c2), "M": est.M, "N": est.N, "n": est.n,
        "v": est.v, "target": est.target, "error": est.error, "success": est.success,
        "bits": np.asarray(desc.bits).reshape(-1), "decoded": decoded,
        "overlap": overlap_distance(desc.target_bits, decoded, O, desc.O_prime),
        "count_value_oracle": counts.get("value_oracle", 0),
        "count_transition": counts.get("transition", 0),
        "count_lattice": counts.get("lattice", 0),
        "count_reward": counts.get(f"reward_{OracleKind(cfg['access']).value}", 0),
        "polylog_transition": est.model["polylog_transition"],
        "polylog_reward": est.model["polylog_reward"],
    }
    return {k: _fmt(row[k]) for k in COLUMNS}, time.perf_counter() - start


def _trial_job(args: tuple) -> tuple[dict, float]:
    return run_trial(*args)


def worker_count(explicit: int | None = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        raise ConfigInvalid(f"{WORKERS_ENV} must be an integer") from None


# -- run -----------------------------------------------------------------------


@dataclass
class RunResult:
    rows: list[dict]
    summary: dict
    csv_text: str


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def summarize(rows: list[dict]) -> dict:
    """Success rate, mean error and counter totals, recomputable from rows."""
    if not rows:
        return {"trials": 0}
    errors = [float(r["error"]) for r in rows]
    out = {
        "trials": len(rows),
        "success_rate": sum(r["success"] == "true" for r in rows) / len(rows),
        "mean_error": sum(errors) / len(errors),
        "overlap_rate": sum(float(r["overlap"]) <= int(r["d"]) / 4 for r in rows) / len(rows),
    }
    for col in COLUMNS:
        if col.startswith("count_"):
            out[col] = sum(int(r[col]) for r in rows)
    return out


def run(cfg: dict, workers: int | None = None, write: bool = True) -> RunResult:
    """Execute every trial of every sweep point; rows are in (point, trial) order."""
    points = sweep_points(cfg)
    jobs = [(p_cfg, k, t) for k, p_cfg in enumerate(points) for t in range(p_cfg["trials"])]
    start = time.perf_counter()
    n_workers = worker_count(workers)
    if n_workers == 1:
        results = [_trial_job(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * n_workers))))
    rows = [r for r, _ in results]
    summary = summarize(rows)
    summary["points"] = [summarize([r for r in rows if r["point"] == str(k)]) for k in range(len(points))]
    summary["wall_clock"] = time.perf_counter() - start
    summary["trial_wall_clock"] = sum(w for _, w in results)
    summary["workers"] = n_workers
    text = rows_to_csv(rows)
    if write:
        _write_outputs(cfg, text, summary)
    return RunResult(rows, summary, text)


def _write_outputs(cfg: dict, text: str, summary: dict) -> None:
    out = cfg.get("output") or {}
    targets = [(out.get("csv"), text), (out.get("summary"), json.dumps(summary, indent=2, sort_keys=True) + "\n")]
    for path, content in targets:
        if not path:
            continue
        try:
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            Path(path).write_text(content)
        except OSError as exc:
            raise OutputUnwritable(f"cannot write {path}: {exc}") from exc


# -- fitting -------------------------------------------------------------------


def read_rows(paths) -> list[dict]:
    rows = []
    for path in paths:
        with open(path, newline="") as fh:
            rows.extend(csv.DictReader(fh))
    return rows


@dataclass(frozen=True)
class FitResult:
    slope: float
    stderr: float
    intercept: float
    xs: tuple
    ys: tuple


def fit_scaling(paths_or_rows, axis: str, counter: str) -> FitResult:
    """Log-log least-squares slope of a counter against d, eps or T.

    Reward and transition counters are divided by their analytic polylog
    factor first; values are averaged per axis point.
    """
    if axis not in AXIS_COLUMNS:
        raise ConfigInvalid(f"axis must be one of {sorted(AXIS_COLUMNS)}")
    rows = paths_or_rows if paths_or_rows and isinstance(paths_or_rows[0], dict) else read_rows(paths_or_rows)
    col = f"count_{counter}"
    if rows and col not in rows[0]:
        raise ConfigInvalid(f"unknown counter {counter!r}")
    groups: dict[float, list[float]] = {}
    for r in rows:
        y = float(r[col])
        if counter in COUNTER_POLYLOG:
            y /= float(r[COUNTER_POLYLOG[counter]])
        groups.setdefault(float(r[AXIS_COLUMNS[axis]]), []).append(y)
    xs = sorted(x for x in groups if math.isfinite(x) and x > 0)
    if len(xs) < 3:
        raise InsufficientPoints(f"need >= 3 distinct {axis} values, got {len(xs)}")
    ys = [float(np.mean(groups[x])) for x in xs]
    if min(ys) <= 0:
        raise InsufficientPoints("counter values must be positive for a log-log fit")
    lx, ly = np.log(xs), np.log(ys)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = len(xs) - 2
    sigma2 = float(resid @ resid) / dof if dof > 0 else 0.0
    stderr = math.sqrt(sigma2 / float(((lx - lx.mean()) ** 2).sum()))
    return FitResult(float(coef[0]), stderr, float(coef[1]), tuple(xs), tuple(ys))


# -- plots ---------------------------------------------------------------------


def emit_plot(paths, spec: dict) -> Path:
    """Write a log-log scaling plot or a success-rate bar chart as SVG.

    ``spec`` keys: ``kind`` (scaling | success), ``output``, optional
    ``axis``, ``counter`` and ``filter`` (column -> value).
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_rows(paths)
    for key, value in (spec.get("filter") or {}).items():
        rows = [r for r in rows if r.get(key) == str(value)]
    kind = spec.get("kind", "scaling")
    out = Path(spec["output"])
    with matplotlib.rc_context({"svg.hashsalt": "qmvmc", "svg.fonttype": "path"}):
        fig, ax = plt.subplots(figsize=(5, 4))
        if kind == "scaling":
            axis, counter = spec.get("axis", "d"), spec.get("counter", "reward")
            ax.set_xscale("log")
            ax.set_yscale("log")
            ax.set_xlabel(axis)
            ax.set_ylabel(f"{counter} calls / polylog")
            if rows:
                fit = None
                try:
                    fit = fit_scaling(rows, axis, counter)
                except InsufficientPoints:
                    pass
                groups: dict[float, list[float]] = {}
                for r in rows:
                    y = float(r[f"count_{counter}"])
                    if counter in COUNTER_POLYLOG:
                        y /= float(r[COUNTER_POLYLOG[counter]])
                    groups.setdefault(float(r[AXIS_COLUMNS[axis]]), []).append(y)
                xs = sorted(groups)
                ax.plot(xs, [np.mean(groups[x]) for x in xs], "o-", label="counters")
                if fit is not None:
                    ax.set_title(f"slope {fit.slope:.3f} ± {fit.stderr:.3f}")
        elif kind == "success":
            names = sorted({r["name"] for r in rows})
            rates = [np.mean([r["success"] == "true" for r in rows if r["name"] == nm]) for nm in names]
            ax.bar(range(len(names)), rates)
            ax.set_xticks(range(len(names)), names)
            ax.set_ylim(0, 1)
            ax.set_ylabel("success rate")
        else:
            raise ConfigInvalid(f"unknown plot kind {kind!r}")
        try:
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out, format="svg", metadata={"Date": None})
        except OSError as exc:
            raise OutputUnwritable(f"cannot write {out}: {exc}") from exc
        finally:
            plt.close(fig)
    return out
