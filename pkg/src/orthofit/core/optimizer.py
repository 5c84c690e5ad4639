"""Unconstrained maximization on top of ``scipy.optimize.minimize``.

Objective values that are NaN, -inf, or raise a domain error count as -inf:
those steps are rejected and never reach the caller. The best point seen is
tracked across every evaluation, so the reported optimum never falls below the
starting value.
"""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy import optimize

from orthofit.core.errors import (
    NonFiniteObjectiveError,
    NonFiniteStartError,
    OrthofitError,
)
from orthofit.core.models import OptimizerConfig, OptimMethod, OptimResult, Vector

logger = logging.getLogger(__name__)

Objective = Callable[[Vector], float]

MAX_ROUNDS = 3


def _evaluate(f: Objective, x: Vector) -> float:
    try:
        with np.errstate(all="ignore"):
            value = float(f(x))
    except (OrthofitError, ArithmeticError, ValueError):
        return -math.inf
    return value if math.isfinite(value) else -math.inf


class _TrackedObjective:
    """Negated, guarded objective for the minimizers, remembering the best point."""

    def __init__(self, f: Objective, x0: Vector, f0: float) -> None:
        self.f = f
        self.best_x = x0.copy()
        self.best_f = f0
        self.evaluations = 0

    def value(self, x: Vector) -> float:
        self.evaluations += 1
        value = _evaluate(self.f, x)
        if value > self.best_f:
            self.best_f = value
            self.best_x = np.array(x, dtype=float)
        return value

    def __call__(self, x: Vector) -> float:
        value = self.value(x)
        return -value if value > -math.inf else math.inf


def finite_diff_gradient(f: Objective, x, step) -> Vector:
    """Central-difference gradient; a non-finite stencil is retried once at half the step."""

    x = np.asarray(x, dtype=float)
    steps = np.array(np.broadcast_to(np.asarray(step, dtype=float), x.shape))
    gradient = np.empty_like(x)
    for h in range(x.size):
        for _ in range(2):
            offset = np.zeros_like(x)
            offset[h] = steps[h]
            upper = _evaluate(f, x + offset)
            lower = _evaluate(f, x - offset)
            if math.isfinite(upper) and math.isfinite(lower):
                gradient[h] = (upper - lower) / (2.0 * steps[h])
                break
            steps[h] *= 0.5
        else:
            raise NonFiniteObjectiveError(
                f"Objective is not finite around coordinate {h} at step {steps[h] * 2:.3e}."
            )
    return gradient


def _fd_steps(x: Vector, cfg: OptimizerConfig) -> Vector:
    return cfg.fd_step * np.maximum(1.0, np.abs(x))


def _initial_simplex(x0: Vector) -> np.ndarray:
    steps = np.maximum(0.05 * np.abs(x0), 0.001)
    return np.vstack([x0, x0 + np.diag(steps)])


def _nelder_mead_round(tracked: _TrackedObjective, x: Vector, cfg: OptimizerConfig) -> tuple[int, bool]:
    result = optimize.minimize(
        tracked,
        x,
        method="Nelder-Mead",
        options={
            "maxiter": cfg.max_iter,
            "xatol": cfg.x_tol,
            "fatol": cfg.f_tol,
            "initial_simplex": _initial_simplex(x),
            "adaptive": False,
        },
    )
    values = result.final_simplex[1]
    spread = float(np.max(values) - np.min(values)) if np.all(np.isfinite(values)) else math.inf
    return int(result.nit), bool(result.success or spread < cfg.f_tol)


def _bfgs_round(tracked: _TrackedObjective, x: Vector, cfg: OptimizerConfig) -> tuple[int, bool]:
    def negated_gradient(point: Vector) -> Vector:
        try:
            return -finite_diff_gradient(tracked.f, point, _fd_steps(point, cfg))
        except NonFiniteObjectiveError:
            logger.debug("Gradient unavailable at a trial point; treating it as flat.")
            return np.zeros_like(point)

    result = optimize.minimize(
        tracked,
        x,
        method="BFGS",
        jac=negated_gradient,
        options={"maxiter": cfg.max_iter, "gtol": cfg.g_tol, "norm": np.inf},
    )
    return int(result.nit), bool(result.success)


def maximize(f: Objective, x0, cfg: OptimizerConfig) -> OptimResult:
    """Maximize ``f`` from ``x0``, relaunching from the incumbent while it keeps improving.

    Nelder-Mead rounds stop on ``f_tol``. A BFGS result is ``converged`` only when the
    gradient infinity-norm at the optimum is below ``g_tol``.
    """

    x0 = np.asarray(x0, dtype=float).ravel()
    f0 = _evaluate(f, x0)
    if not math.isfinite(f0):
        raise NonFiniteStartError("Objective is not finite at the starting point.")

    tracked = _TrackedObjective(f, x0, f0)
    run_round = _nelder_mead_round if cfg.method is OptimMethod.NELDER_MEAD else _bfgs_round
    rounds = min(1 + cfg.restarts, MAX_ROUNDS)
    iterations = 0
    converged = False

    for round_index in range(rounds):
        before = tracked.best_f
        nit, converged = run_round(tracked, tracked.best_x, cfg)
        iterations += nit
        improvement = tracked.best_f - before
        logger.debug(
            "%s round %d: %d iterations, objective %.10g (improvement %.3e).",
            cfg.method.value,
            round_index + 1,
            nit,
            tracked.best_f,
            improvement,
        )
        if improvement < cfg.f_tol:
            break

    gradient_norm: float | None = None
    if cfg.method is OptimMethod.BFGS:
        try:
            gradient = finite_diff_gradient(f, tracked.best_x, _fd_steps(tracked.best_x, cfg))
            gradient_norm = float(np.max(np.abs(gradient))) if gradient.size else 0.0
            converged = gradient_norm < cfg.g_tol
        except NonFiniteObjectiveError:
            converged = False

    if not converged:
        logger.info(
            "%s did not meet its convergence criterion within %d iterations.",
            cfg.method.value,
            iterations,
        )

    return OptimResult(
        x_opt=tracked.best_x,
        f_opt=tracked.best_f,
        iterations=iterations,
        converged=converged,
        method=cfg.method,
        gradient_norm_at_opt=gradient_norm,
        evaluations=tracked.evaluations,
    )
