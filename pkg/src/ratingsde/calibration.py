"""
Moment-matching calibration of the SDE parameter triples.

The model moments come from Monte-Carlo simulation with a fixed set of
Brownian normals (common random numbers), which keeps the residual a
smooth deterministic function of the parameters so forward differences
are meaningful.  The box-constrained problem is solved with scipy's
trust-region-reflective least squares.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import least_squares

from . import lie, streams
from .moments import MomentError, MomentSet, ObjectiveConfig, estimate_moments, residuals
from .sde import FAMILIES, STEPS_PER_YEAR, ModelParams, PathEnsemble, SimulationGrid, simulate

DEFAULT_UPPER = {"cir": 1.0, "gem": 2.0}
REL_STEP = 1e-4
XTOL = 1e-8
FTOL = 1e-10
MAX_ITER = 200


class CalibrationError(RuntimeError):
    pass


@dataclass
class CalibrationResult:
    params: ModelParams
    objective: float
    residuals: np.ndarray = field(repr=False)
    iterations: int
    n_evaluations: int
    status: int
    message: str
    seed: int
    n_model: int
    n_target: int
    initial_objective: float
    wall_time: float = field(default=0.0, compare=False)

    def to_dict(self, labels=None) -> dict:
        """JSON-ready dict; wall time is left out so reruns are byte-identical."""
        return {
            "family": self.params.family,
            "K": self.params.K,
            "objective": self.objective,
            "initial_objective": self.initial_objective,
            "iterations": self.iterations,
            "n_evaluations": self.n_evaluations,
            "status": self.status,
            "message": self.message,
            "seed": self.seed,
            "M_model": self.n_model,
            "M_target": self.n_target,
            "parameters": [
                {"from_to": ft, "a": a, "b": b, "sigma": s}
                for ft, a, b, s in self.params.table(labels)
            ],
            "residuals": self.residuals.tolist(),
        }

    def to_json(self, labels=None) -> str:
        return json.dumps(self.to_dict(labels), indent=2)

    def table_text(self, labels=None) -> str:
        lines = [f"{'From-To':>8} {'a':>10} {'b':>10} {'sigma':>10}"]
        for ft, a, b, s in self.params.table(labels):
            lines.append(f"{ft:>8} {a:10.2e} {b:10.2e} {s:10.2e}")
        lines.append(f"objective {self.objective:.4e}")
        return "\n".join(lines) + "\n"


def params_from_result(obj: dict) -> ModelParams:
    """Rebuild :class:`ModelParams` from a result JSON dict."""
    rows = obj["parameters"]
    return ModelParams(
        obj["family"],
        int(obj["K"]),
        [r["a"] for r in rows],
        [r["b"] for r in rows],
        [r["sigma"] for r in rows],
    )


class MomentProblem:
    """Residual map ``p -> f(p)`` for one family, target and configuration.

    With ``lambda2 > 0`` the trajectory penalty is appended as extra
    residuals ``sqrt(lambda2 / M) * (R_t(w) - R^H_t)``, and the moment
    block is scaled by ``sqrt(lambda1)``, so the squared norm equals the
    penalised objective.
    """

    def __init__(
        self,
        family: str,
        target: MomentSet,
        config: ObjectiveConfig = ObjectiveConfig(),
        *,
        n_paths: int = 1000,
        seed: int = 0,
        steps_per_year: int = STEPS_PER_YEAR,
        driver: str = "common",
    ):
        if family not in FAMILIES:
            raise ValueError(f"unknown family {family!r}")
        if config.order >= 2 and n_paths < 2:
            raise MomentError("variance needs at least two model trajectories (M >= 2)")
        if config.lambda2 and config.reference is None:
            raise MomentError("lambda2 > 0 needs a reference series")
        self.family = family
        self.K = target.K
        self.target = target.at(config.times).truncate(config.order)
        self.config = config
        self.grid = SimulationGrid(n_paths, config.times, steps_per_year, seed, driver=driver)
        d = self.grid.noise_dim(lie.n_coords(self.K))
        self.normals = streams.brownian_normals(seed, n_paths, self.grid.n_steps, d)
        self.n_params = 3 * lie.n_coords(self.K)

    def params(self, p) -> ModelParams:
        return ModelParams.from_vector(self.family, self.K, np.maximum(np.asarray(p, float), 0.0))

    def simulate(self, p) -> PathEnsemble:
        return simulate(self.params(p), self.grid, normals=self.normals)

    def __call__(self, p) -> np.ndarray:
        ens = self.simulate(p)
        cfg = self.config
        model = estimate_moments(ens.matrices, cfg.order, ens.times)
        model = MomentSet(np.asarray(cfg.times), model.moments, model.n_samples)
        f = residuals(model, self.target, cfg)
        if not cfg.lambda2:
            return f if cfg.lambda1 == 1.0 else np.sqrt(cfg.lambda1) * f
        d = ens.matrices - cfg.reference[None]
        pen = np.sqrt(cfg.lambda2 / ens.n_paths) * d.reshape(-1)
        return np.concatenate([np.sqrt(cfg.lambda1) * f, pen])


def finite_diff_jacobian(
    fun: Callable[[np.ndarray], np.ndarray],
    p,
    f0: np.ndarray | None = None,
    *,
    rel_step: float = REL_STEP,
    lower=None,
    upper=None,
    scheme: str = "forward",
    threads: int = 1,
) -> np.ndarray:
    """Finite-difference Jacobian of a residual map.

    Steps are ``rel_step * max(1, |p_j|)``; a step that would leave the
    box is taken in the other direction.  ``scheme`` is ``"forward"`` or
    ``"central"`` (central falls back to one-sided at a bound).
    """
    p = np.asarray(p, dtype=float)
    n = p.size
    lower = np.full(n, -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, float), n)
    upper = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), n)
    if scheme not in ("forward", "central"):
        raise ValueError(f"unknown scheme {scheme!r}")
    h = rel_step * np.maximum(1.0, np.abs(p))
    if f0 is None:
        f0 = np.asarray(fun(p), dtype=float)

    def column(j: int) -> np.ndarray:
        step = h[j]
        up_ok = p[j] + step <= upper[j]
        down_ok = p[j] - step >= lower[j]
        if scheme == "central" and up_ok and down_ok:
            e = np.zeros(n)
            e[j] = step
            return (np.asarray(fun(p + e)) - np.asarray(fun(p - e))) / (2 * step)
        if not up_ok:
            step = -step
        e = np.zeros(n)
        e[j] = step
        return (np.asarray(fun(p + e)) - f0) / step

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            cols = list(pool.map(column, range(n)))
    else:
        cols = [column(j) for j in range(n)]
    return np.column_stack(cols)


def default_bounds(family: str, K: int, upper: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    n = 3 * lie.n_coords(K)
    hi = DEFAULT_UPPER[family] if upper is None else upper
    return np.zeros(n), np.full(n, float(hi))


def calibrate(
    family: str,
    target: MomentSet,
    config: ObjectiveConfig = ObjectiveConfig(),
    *,
    n_paths: int = 1000,
    seed: int = 0,
    steps_per_year: int = STEPS_PER_YEAR,
    bounds: tuple[Sequence[float], Sequence[float]] | None = None,
    init: Sequence[float] | None = None,
    starts: int = 1,
    max_iter: int = MAX_ITER,
    threads: int = 1,
    rel_step: float = REL_STEP,
    driver: str = "common",
) -> CalibrationResult:
    """Fit a model family to target moments by bounded least squares.

    Bounds default to ``[0, 1]`` for ``cir`` and ``[0, 2]`` for ``gem``;
    the first start is ``init`` or the box midpoint, further starts are
    drawn uniformly in the box from ``seed``.  The best start is kept.
    Running out of iterations is reported through ``status == 0``.
    """
    t0 = time.perf_counter()
    problem = MomentProblem(
        family, target, config, n_paths=n_paths, seed=seed, steps_per_year=steps_per_year, driver=driver
    )
    lo, hi = default_bounds(family, problem.K) if bounds is None else (
        np.broadcast_to(np.asarray(bounds[0], float), problem.n_params).copy(),
        np.broadcast_to(np.asarray(bounds[1], float), problem.n_params).copy(),
    )
    if np.any(lo < 0) or np.any(hi <= lo):
        raise CalibrationError("bounds must satisfy 0 <= lower < upper")
    x0 = 0.5 * (lo + hi) if init is None else np.asarray(init, dtype=float)
    if x0.shape != lo.shape or np.any(x0 < lo) or np.any(x0 > hi):
        raise CalibrationError("initial point must lie inside the bounds")

    rng = np.random.default_rng([seed, 1])
    inits = [x0] + [rng.uniform(lo, hi) for _ in range(max(starts, 1) - 1)]

    def jac(p):
        return finite_diff_jacobian(problem, p, rel_step=rel_step, lower=lo, upper=hi, threads=threads)

    best = None
    f_init = None
    for x in inits:
        f = problem(x)
        if not np.all(np.isfinite(f)):
            raise CalibrationError("objective is not finite at the initial point")
        if f_init is None:
            f_init = float(f @ f)
        sol = least_squares(
            problem,
            x,
            jac=jac,
            bounds=(lo, hi),
            method="trf",
            xtol=XTOL,
            ftol=FTOL,
            gtol=1e-12,
            max_nfev=max_iter,
        )
        if best is None or 2 * sol.cost < 2 * best.cost:
            best = sol

    p = np.clip(best.x, lo, hi)
    res = problem(p)
    return CalibrationResult(
        params=problem.params(p),
        objective=float(res @ res),
        residuals=res,
        iterations=int(best.njev or 0),
        n_evaluations=int(best.nfev),
        status=int(best.status),
        message=str(best.message),
        seed=seed,
        n_model=n_paths,
        n_target=target.n_samples,
        initial_objective=f_init,
        wall_time=time.perf_counter() - t0,
    )
