"""The four CPC-family models: statistics, log-likelihoods, reparameterization and fitting.

Unconstrained parameter vectors are laid out as

    [mu (k*d)] ++ [L entries: one block for CPC, k blocks otherwise] ++ [log lambda (k*d)] ++ [beta tilde (k, LN only)]

with beta = beta_max * expit(beta tilde). The PLR frames that turn L entries
back into orthogonal matrices are frozen at the starting point of a fit.
"""

import dataclasses
import logging
from collections.abc import Sequence
from typing import NamedTuple

import numpy as np
from scipy.special import expit, logit

from orthofit.core.errors import (
    BetaOnBoundaryError,
    DegenerateGroupError,
    InputError,
    LengthMismatchError,
    NonFiniteStartError,
    NotNestedError,
)
from orthofit.core.flury_gautschi import fg_algorithm, fg_stationarity_residual
from orthofit.core.linalg import column_discrepancy, symmetric_eigen
from orthofit.core.models import (
    LN_CPC,
    LN_PC,
    N_CPC,
    N_PC,
    Family,
    FitConfig,
    FitResult,
    GroupedDataset,
    GroupStats,
    ModelSpec,
    OptimResult,
    OrthogonalMatrix,
    ParamSet,
    PLRFrame,
    Structure,
    Vector,
)
from orthofit.core.mvdist import LOG_2PI, beta_max, empirical_excess_kurtosis, q_factor
from orthofit.core.optimizer import maximize
from orthofit.core.plr import frame_of, n_free, orthogonal_from_vector, vector_from_orthogonal

logger = logging.getLogger(__name__)

WARM_BETA_FRACTION = 1e-9
BETA_MARGIN = 0.01
DEGENERACY_TOL = 1e-12


class Initialization(NamedTuple):
    params: ParamSet
    frames: tuple[PLRFrame, ...]
    beta_clamped: tuple[bool, ...]


def group_stats(data: GroupedDataset, centers=None) -> list[GroupStats]:
    """Per-group scatter matrices with divisor n_j.

    Centered at the group sample means, or at ``centers`` (one row per group)
    when given; ``mean`` holds the center that was used.
    """

    stats = []
    for j, group in enumerate(data.groups):
        x = group.observations
        center = x.mean(axis=0) if centers is None else np.asarray(centers[j], dtype=float)
        centered = x - center
        scatter = centered.T @ centered / group.n
        scatter = 0.5 * (scatter + scatter.T)
        eigenvalues = np.linalg.eigvalsh(scatter)
        if eigenvalues[0] <= DEGENERACY_TOL * eigenvalues[-1]:
            raise DegenerateGroupError(
                f"Scatter matrix of group {group.label!r} is singular (smallest eigenvalue {eigenvalues[0]:.3e})."
            )
        stats.append(GroupStats(group.n, center, scatter))
    return stats


def param_count(spec: ModelSpec, d: int, k: int) -> int:
    if spec.is_cpc:
        m = k * d + d * (d - 1) // 2 + k * d
    else:
        m = k * d + k * d * (d + 1) // 2
    return m + k if spec.is_leptokurtic else m


def loglik_ncpc(params: ParamSet, stats: Sequence[GroupStats], n: int, d: int, k: int) -> float:
    """Normal CPC log-likelihood from scatter matrices centered at ``params.mu``."""

    if params.structure is not Structure.CPC:
        raise InputError("The N-CPC log-likelihood needs a common orthogonal matrix.")
    if len(stats) != k:
        raise InputError(f"Expected statistics for {k} groups, got {len(stats)}.")
    q = params.q_common.values
    total = -0.5 * n * d * LOG_2PI
    for s, lam in zip(stats, params.lam, strict=True):
        rotated = np.einsum("ih,ij,jh->h", q, s.scatter, q)
        total -= 0.5 * s.n * (float(np.sum(np.log(lam))) + float(np.sum(rotated / lam)))
    return float(total)


def _loglik_groups(params: ParamSet, data: GroupedDataset, family: Family) -> float:
    if params.k != data.k or params.d != data.d:
        raise InputError(
            f"Parameters for (k = {params.k}, d = {params.d}) do not match data (k = {data.k}, d = {data.d})."
        )
    if family is Family.LEPTOKURTIC and params.beta is None:
        raise InputError("Leptokurtic-normal log-likelihood needs an excess kurtosis per group.")
    d = data.d
    total = 0.0
    for j, group in enumerate(data.groups):
        lam = params.lam[j]
        z = (group.observations - params.mu[j]) @ params.rotation(j)
        delta = np.sum(z * z / lam, axis=1)
        total -= 0.5 * (group.n * (d * LOG_2PI + float(np.sum(np.log(lam)))) + float(np.sum(delta)))
        if family is Family.LEPTOKURTIC and params.beta[j] > 0:
            total += float(np.sum(np.log(q_factor(delta, float(params.beta[j]), d))))
    return total


def loglik_lncpc(params: ParamSet, data: GroupedDataset) -> float:
    if params.structure is not Structure.CPC:
        raise InputError("The LN-CPC log-likelihood needs a common orthogonal matrix.")
    return _loglik_groups(params, data, Family.LEPTOKURTIC)


def loglik_unconstrained(params: ParamSet, data: GroupedDataset, family: Family) -> float:
    if params.structure is not Structure.UNCONSTRAINED:
        raise InputError("The unconstrained log-likelihood needs one orthogonal matrix per group.")
    return _loglik_groups(params, data, family)


def loglik(params: ParamSet, data: GroupedDataset, spec: ModelSpec) -> float:
    if spec == N_CPC:
        return loglik_ncpc(params, group_stats(data, centers=params.mu), data.n, data.d, data.k)
    if spec == LN_CPC:
        return loglik_lncpc(params, data)
    return loglik_unconstrained(params, data, spec.family)


def frames_of(params: ParamSet) -> tuple[PLRFrame, ...]:
    if params.frames:
        return params.frames
    if params.q_common is not None:
        return (frame_of(params.q_common),)
    return tuple(frame_of(q) for q in params.q_group)


def to_unconstrained(params: ParamSet) -> Vector:
    frames = frames_of(params)
    rotations = (params.q_common,) if params.q_common is not None else params.q_group
    blocks = [params.mu.ravel()]
    blocks.extend(vector_from_orthogonal(q, frame) for q, frame in zip(rotations, frames, strict=True))
    blocks.append(np.log(params.lam).ravel())
    if params.beta is not None:
        upper = beta_max(params.d)
        if np.any(params.beta <= 0) or np.any(params.beta >= upper):
            raise BetaOnBoundaryError(
                f"Excess kurtosis on the boundary of [0, {upper:g}] has no unconstrained image."
            )
        blocks.append(logit(params.beta / upper))
    return np.concatenate(blocks)


def from_unconstrained(v, spec: ModelSpec, d: int, k: int, frames: Sequence[PLRFrame]) -> ParamSet:
    v = np.asarray(v, dtype=float).ravel()
    expected = param_count(spec, d, k)
    if v.size != expected:
        raise LengthMismatchError(f"{spec.name} with d = {d}, k = {k} has {expected} parameters, got {v.size}.")
    frames = tuple(frames)
    n_rotations = 1 if spec.is_cpc else k
    if len(frames) != n_rotations:
        raise InputError(f"{spec.name} needs {n_rotations} PLR frame(s), got {len(frames)}.")

    offset = k * d
    mu = v[:offset].reshape(k, d)
    rotations = []
    for frame in frames:
        rotations.append(orthogonal_from_vector(v[offset : offset + n_free(d)], frame))
        offset += n_free(d)
    lam = np.exp(v[offset : offset + k * d]).reshape(k, d)
    offset += k * d
    beta = beta_max(d) * expit(v[offset:]) if spec.is_leptokurtic else None

    if spec.is_cpc:
        return ParamSet(mu, lam, q_common=rotations[0], beta=beta, frames=frames)
    return ParamSet(mu, lam, q_group=tuple(rotations), beta=beta, frames=frames)


def _clamp_beta(values: Sequence[float], d: int, labels: Sequence[str]) -> tuple[Vector, tuple[bool, ...]]:
    lower, upper = BETA_MARGIN, beta_max(d) - BETA_MARGIN
    clamped = np.clip(np.asarray(values, dtype=float), lower, upper)
    flags = tuple(bool(c != v) for c, v in zip(clamped, values, strict=True))
    for label, value, flagged in zip(labels, values, flags, strict=True):
        if flagged:
            logger.warning(
                "Initial excess kurtosis %.4f of group %r clamped into [%.2f, %.2f].",
                value,
                label,
                lower,
                upper,
            )
    return clamped, flags


def initialize(data: GroupedDataset, spec: ModelSpec) -> Initialization:
    """Starting values: sample means, pooled or per-group eigenvectors, empirical kurtosis."""

    stats = group_stats(data)
    mu = np.array([s.mean for s in stats])
    if spec.is_cpc:
        pooled = sum(s.n * s.scatter for s in stats) / data.n
        _, q = symmetric_eigen(pooled)
        rotations = [q] * data.k
    else:
        rotations = [symmetric_eigen(s.scatter)[1] for s in stats]
    lam = np.array([np.einsum("ih,ij,jh->h", q, s.scatter, q) for q, s in zip(rotations, stats, strict=True)])
    if np.any(lam <= 0):
        raise DegenerateGroupError("A starting eigenvalue is not positive.")

    beta, clamped = None, ()
    if spec.is_leptokurtic:
        excess = [empirical_excess_kurtosis(group.observations) for group in data.groups]
        beta, clamped = _clamp_beta(excess, data.d, data.labels)

    if spec.is_cpc:
        q_common = OrthogonalMatrix(rotations[0])
        frames = (frame_of(q_common),)
        params = ParamSet(mu, lam, q_common=q_common, beta=beta, frames=frames)
    else:
        q_group = tuple(OrthogonalMatrix(q) for q in rotations)
        frames = tuple(frame_of(q) for q in q_group)
        params = ParamSet(mu, lam, q_group=q_group, beta=beta, frames=frames)
    return Initialization(params, frames, clamped)


def _adapt_start(start: ParamSet, spec: ModelSpec, d: int, k: int) -> ParamSet:
    """Embed a nested model's estimates into the parameter space of ``spec``."""

    if start.d != d or start.k != k:
        raise InputError(f"Starting values for (k = {start.k}, d = {start.d}) do not fit (k = {k}, d = {d}).")

    beta = None
    if spec.is_leptokurtic:
        upper = beta_max(d)
        floor = WARM_BETA_FRACTION * upper
        beta = np.full(k, floor) if start.beta is None else np.clip(start.beta, floor, upper - floor)

    if spec.is_cpc:
        if start.q_common is None:
            raise NotNestedError(f"Groupwise eigenvectors cannot start a {spec.name} fit.")
        return ParamSet(start.mu, start.lam, q_common=start.q_common, beta=beta, frames=frames_of(start))
    if start.q_common is not None:
        frames = frames_of(start) * k
        return ParamSet(start.mu, start.lam, q_group=(start.q_common,) * k, beta=beta, frames=frames)
    return ParamSet(start.mu, start.lam, q_group=start.q_group, beta=beta, frames=frames_of(start))


def _group_slice(params: ParamSet, j: int) -> ParamSet:
    frames = frames_of(params)
    beta = None if params.beta is None else params.beta[j : j + 1]
    return ParamSet(
        params.mu[j : j + 1],
        params.lam[j : j + 1],
        q_common=OrthogonalMatrix(params.rotation(j)),
        beta=beta,
        frames=(frames[0] if params.q_common is not None else frames[j],),
    )


def fit_from(data: GroupedDataset, spec: ModelSpec, start: ParamSet, cfg: FitConfig) -> FitResult:
    """Optimize from one start: Nelder-Mead, then an optional BFGS polish; keep the better."""

    d, k = data.d, data.k
    frames = frames_of(start)
    x0 = to_unconstrained(start)

    def objective(v: Vector) -> float:
        return loglik(from_unconstrained(v, spec, d, k, frames), data, spec)

    result = maximize(objective, x0, cfg.nelder_mead)
    if cfg.bfgs is not None:
        polished = maximize(objective, result.x_opt, cfg.bfgs)
        total_iterations = result.iterations + polished.iterations
        total_evaluations = result.evaluations + polished.evaluations
        if polished.f_opt >= result.f_opt:
            result = polished
        result = dataclasses.replace(result, iterations=total_iterations, evaluations=total_evaluations)

    params = from_unconstrained(result.x_opt, spec, d, k, frames)
    return FitResult(spec, params, result.f_opt, param_count(spec, d, k), data.n, result)


def _fit_npc(data: GroupedDataset) -> FitResult:
    stats = group_stats(data)
    eigen = [symmetric_eigen(s.scatter) for s in stats]
    params = ParamSet(
        np.array([s.mean for s in stats]),
        np.array([values for values, _ in eigen]),
        q_group=tuple(OrthogonalMatrix(vectors) for _, vectors in eigen),
    )
    value = loglik_unconstrained(params, data, Family.NORMAL)
    optim = OptimResult(x_opt=to_unconstrained(params), f_opt=value, iterations=0, converged=True)
    return FitResult(N_PC, params, value, param_count(N_PC, data.d, data.k), data.n, optim)


def _stack_group_vectors(vectors: Sequence[Vector], d: int) -> Vector:
    """Interleave one-group LN-CPC vectors into the k-group LN-PC layout."""

    sizes = (d, n_free(d), d, 1)
    blocks: list[list[Vector]] = [[] for _ in sizes]
    for v in vectors:
        offset = 0
        for block, size in zip(blocks, sizes, strict=True):
            block.append(v[offset : offset + size])
            offset += size
    return np.concatenate([np.concatenate(block) for block in blocks])


def _fit_lnpc(data: GroupedDataset, cfg: FitConfig, starts: Sequence[ParamSet]) -> FitResult:
    # The likelihood separates over groups: each group is a one-group LN-CPC problem.
    group_cfg = dataclasses.replace(cfg, fg_check=False)
    adapted = [_adapt_start(s, LN_PC, data.d, data.k) for s in starts]
    parts = []
    for j in range(data.k):
        group_starts = [_group_slice(s, j) for s in adapted]
        parts.append(fit(data.subset(j), LN_CPC, group_cfg, starts=group_starts))

    params = ParamSet(
        np.vstack([p.params.mu for p in parts]),
        np.vstack([p.params.lam for p in parts]),
        q_group=tuple(p.params.q_common for p in parts),
        beta=np.concatenate([p.params.beta for p in parts]),
        frames=tuple(p.params.frames[0] for p in parts),
    )
    value = sum(p.loglik for p in parts)
    optim = OptimResult(
        x_opt=_stack_group_vectors([p.optim.x_opt for p in parts], data.d),
        f_opt=value,
        iterations=sum(p.optim.iterations for p in parts),
        converged=all(p.optim.converged for p in parts),
        method=parts[0].optim.method,
        evaluations=sum(p.optim.evaluations for p in parts),
    )
    clamped = tuple(flag for p in parts for flag in p.beta_clamped)
    return FitResult(
        LN_PC, params, value, param_count(LN_PC, data.d, data.k), data.n, optim, beta_clamped=clamped
    )


def _fit_optimized(data: GroupedDataset, spec: ModelSpec, cfg: FitConfig, starts: Sequence[ParamSet]) -> FitResult:
    init = initialize(data, spec)
    candidates = [init.params] + [_adapt_start(s, spec, data.d, data.k) for s in starts]
    best: FitResult | None = None
    for index, start in enumerate(candidates):
        try:
            candidate = fit_from(data, spec, start, cfg)
        except NonFiniteStartError:
            if index == 0:
                raise
            logger.warning("Skipping warm start %d for %s: objective not finite there.", index, spec.name)
            continue
        logger.debug("%s start %d reached loglik %.6f.", spec.name, index, candidate.loglik)
        if best is None or candidate.loglik > best.loglik:
            best = candidate
    best.beta_clamped = init.beta_clamped
    return best


def fit(
    data: GroupedDataset,
    spec: ModelSpec,
    cfg: FitConfig | None = None,
    starts: Sequence[ParamSet] = (),
) -> FitResult:
    """Fit ``spec`` by maximum likelihood.

    N-PC is solved in closed form. The other models are optimized over the
    unconstrained reparameterization from the default initialization and from
    every warm start in ``starts``, keeping the highest log-likelihood.
    """

    cfg = cfg or FitConfig()
    logger.info("Fitting %s (n = %d, d = %d, k = %d).", spec.name, data.n, data.d, data.k)

    if spec == N_PC:
        result = _fit_npc(data)
    elif spec == LN_PC:
        result = _fit_lnpc(data, cfg, starts)
    else:
        result = _fit_optimized(data, spec, cfg, starts)

    if spec.is_cpc:
        stats = group_stats(data, centers=result.params.mu)
        result.stationarity_residual = fg_stationarity_residual(result.params.q_common, stats)
        if cfg.fg_check and spec == N_CPC:
            reference = fg_algorithm(group_stats(data))
            result.fg_discrepancy = column_discrepancy(reference.q.values, result.params.q_common.values)
            logger.info("FG cross-check: max entry discrepancy %.3e.", result.fg_discrepancy)

    if not result.optim.converged:
        logger.warning("%s optimizer stopped before meeting its convergence criterion.", spec.name)
    logger.info("%s: loglik %.6f with m = %d.", spec.name, result.loglik, result.m)
    return result

