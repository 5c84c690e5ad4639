from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from orthofit.core.errors import (
    BetaOutOfRangeError,
    DegenerateGroupError,
    InputError,
    LinAlgError,
    NotOrthogonalError,
    NotPositiveDefiniteError,
)

Matrix = NDArray[np.float64]
Vector = NDArray[np.float64]

ORTHO_TOL = 1e-8


def _frozen_array(values, ndim: int) -> NDArray[np.float64]:
    array = np.array(values, dtype=float)
    if array.ndim != ndim:
        raise InputError(f"Expected a {ndim}-dimensional array, got shape {array.shape}.")
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Permutation:
    """Row permutation: row ``i`` of the induced matrix has its one in column ``mapping[i]``."""

    mapping: tuple[int, ...]

    def __post_init__(self) -> None:
        mapping = tuple(int(i) for i in self.mapping)
        if not mapping or sorted(mapping) != list(range(len(mapping))):
            raise LinAlgError(f"Not a permutation of 0..d-1: {self.mapping!r}")
        object.__setattr__(self, "mapping", mapping)

    @property
    def order(self) -> int:
        return len(self.mapping)

    @property
    def sign(self) -> int:
        seen = [False] * self.order
        sign = 1
        for start in range(self.order):
            if seen[start]:
                continue
            length = 0
            i = start
            while not seen[i]:
                seen[i] = True
                i = self.mapping[i]
                length += 1
            if length % 2 == 0:
                sign = -sign
        return sign

    def matrix(self) -> Matrix:
        p = np.zeros((self.order, self.order))
        p[np.arange(self.order), self.mapping] = 1.0
        return p

    @classmethod
    def identity(cls, d: int) -> Permutation:
        return cls(tuple(range(d)))

    @classmethod
    def from_matrix(cls, p: Matrix) -> Permutation:
        return cls(tuple(int(i) for i in np.argmax(np.asarray(p), axis=1)))


@dataclass(frozen=True, eq=False)
class UnitLowerTriangular:
    """Unit lower triangular matrix stored as its row-major strictly-lower entries."""

    order: int
    sub_diagonal: Vector

    def __post_init__(self) -> None:
        entries = _frozen_array(self.sub_diagonal, 1)
        if entries.size != self.order * (self.order - 1) // 2:
            raise LinAlgError(
                f"A unit lower triangular matrix of order {self.order} has "
                f"{self.order * (self.order - 1) // 2} free entries, got {entries.size}."
            )
        if not np.all(np.isfinite(entries)):
            raise LinAlgError("Unit lower triangular entries must be finite.")
        object.__setattr__(self, "sub_diagonal", entries)

    def matrix(self) -> Matrix:
        lower = np.eye(self.order)
        lower[np.tril_indices(self.order, k=-1)] = self.sub_diagonal
        return lower

    @classmethod
    def identity(cls, d: int) -> UnitLowerTriangular:
        return cls(d, np.zeros(d * (d - 1) // 2))

    @classmethod
    def from_matrix(cls, lower: Matrix) -> UnitLowerTriangular:
        lower = np.asarray(lower, dtype=float)
        d = lower.shape[0]
        return cls(d, lower[np.tril_indices(d, k=-1)])


@dataclass(frozen=True, eq=False)
class OrthogonalMatrix:
    values: Matrix

    def __post_init__(self) -> None:
        values = _frozen_array(self.values, 2)
        defect = orthogonality_defect(values)
        if defect > ORTHO_TOL:
            raise NotOrthogonalError(
                f"Matrix is not orthogonal: Frobenius defect ||Q'Q - I|| = {defect:.3e} "
                f"exceeds {ORTHO_TOL:.0e}."
            )
        object.__setattr__(self, "values", values)

    @property
    def order(self) -> int:
        return self.values.shape[0]


def orthogonality_defect(values: Matrix) -> float:
    values = np.asarray(values, dtype=float)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        return float("inf")
    if not np.all(np.isfinite(values)):
        return float("inf")
    return float(np.linalg.norm(values.T @ values - np.eye(values.shape[0])))


@dataclass(frozen=True)
class PLRFrame:
    """The frozen, non-free part of a PLR parameterization."""

    permutation: Permutation
    signs: tuple[int, ...]

    @property
    def order(self) -> int:
        return self.permutation.order


@dataclass(frozen=True, eq=False)
class PLRFactors:
    permutation: Permutation
    lower: UnitLowerTriangular
    signs: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if self.permutation.order != self.lower.order:
            raise LinAlgError(
                f"Permutation order {self.permutation.order} does not match "
                f"L order {self.lower.order}."
            )
        signs = self.signs if self.signs is not None else (1,) * self.lower.order
        signs = tuple(1 if s >= 0 else -1 for s in signs)
        if len(signs) != self.lower.order:
            raise LinAlgError("Column sign vector has the wrong length.")
        object.__setattr__(self, "signs", signs)

    @property
    def order(self) -> int:
        return self.lower.order

    @property
    def frame(self) -> PLRFrame:
        return PLRFrame(self.permutation, self.signs)


@dataclass(frozen=True, eq=False)
class MVNormalParams:
    mu: Vector
    sigma: Matrix

    def __post_init__(self) -> None:
        from orthofit.core.mvdist import cholesky_factor

        mu = _frozen_array(self.mu, 1)
        sigma = _frozen_array(self.sigma, 2)
        if sigma.shape != (mu.size, mu.size):
            raise InputError(
                f"Covariance shape {sigma.shape} does not match mean dimension {mu.size}."
            )
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "_chol", cholesky_factor(sigma))

    @property
    def d(self) -> int:
        return self.mu.size


@dataclass(frozen=True, eq=False)
class LNParams(MVNormalParams):
    beta: float = 0.0

    def __post_init__(self) -> None:
        from orthofit.core.mvdist import check_beta

        super().__post_init__()
        check_beta(self.beta, self.d)


@dataclass(frozen=True)
class KurtosisTest:
    n: int
    d: int
    excess: float
    statistic: float
    p_value: float


class Family(Enum):
    NORMAL = "n"
    LEPTOKURTIC = "ln"


class Structure(Enum):
    CPC = "cpc"
    UNCONSTRAINED = "pc"


@dataclass(frozen=True)
class ModelSpec:
    family: Family
    structure: Structure

    @property
    def key(self) -> str:
        return f"{self.family.value}-{self.structure.value}"

    @property
    def name(self) -> str:
        return self.key.upper()

    @property
    def is_leptokurtic(self) -> bool:
        return self.family is Family.LEPTOKURTIC

    @property
    def is_cpc(self) -> bool:
        return self.structure is Structure.CPC

    @classmethod
    def from_key(cls, key: str) -> ModelSpec:
        for spec in MODEL_SPECS:
            if spec.key == key.strip().lower():
                return spec
        raise InputError(
            f"Unknown model {key!r} (expected one of: {', '.join(s.key for s in MODEL_SPECS)})."
        )


N_CPC = ModelSpec(Family.NORMAL, Structure.CPC)
LN_CPC = ModelSpec(Family.LEPTOKURTIC, Structure.CPC)
N_PC = ModelSpec(Family.NORMAL, Structure.UNCONSTRAINED)
LN_PC = ModelSpec(Family.LEPTOKURTIC, Structure.UNCONSTRAINED)
MODEL_SPECS: tuple[ModelSpec, ...] = (N_CPC, LN_CPC, N_PC, LN_PC)


@dataclass(frozen=True, eq=False)
class Group:
    label: str
    observations: Matrix

    def __post_init__(self) -> None:
        observations = _frozen_array(self.observations, 2)
        if not np.all(np.isfinite(observations)):
            raise InputError(f"Group {self.label!r} contains non-finite observations.")
        object.__setattr__(self, "observations", observations)

    @property
    def n(self) -> int:
        return self.observations.shape[0]


@dataclass(frozen=True, eq=False)
class GroupedDataset:
    d: int
    groups: tuple[Group, ...]

    def __post_init__(self) -> None:
        groups = tuple(self.groups)
        if not groups:
            raise InputError("A dataset needs at least one group.")
        for group in groups:
            if group.observations.shape[1] != self.d:
                raise InputError(
                    f"Group {group.label!r} has {group.observations.shape[1]} variables, expected {self.d}."
                )
            if group.n < self.d + 1:
                raise DegenerateGroupError(
                    f"Group {group.label!r} has {group.n} observations; at least d + 1 = {self.d + 1} are required."
                )
        object.__setattr__(self, "groups", groups)

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def n(self) -> int:
        return sum(group.n for group in self.groups)

    @property
    def labels(self) -> list[str]:
        return [group.label for group in self.groups]

    def subset(self, j: int) -> GroupedDataset:
        return GroupedDataset(self.d, (self.groups[j],))

    @classmethod
    def from_arrays(cls, groups: dict[str, Matrix]) -> GroupedDataset:
        items = [Group(label, np.asarray(x, dtype=float)) for label, x in groups.items()]
        if not items:
            raise InputError("A dataset needs at least one group.")
        return cls(items[0].observations.shape[1], tuple(items))


@dataclass(frozen=True, eq=False)
class GroupStats:
    n: int
    mean: Vector
    scatter: Matrix


@dataclass(frozen=True, eq=False)
class ParamSet:
    """Ψ = {μ_j, Q or Q_j, Λ_j, β_j} plus the frozen PLR frames used to reparameterize Q."""

    mu: Matrix
    lam: Matrix
    q_common: OrthogonalMatrix | None = None
    q_group: tuple[OrthogonalMatrix, ...] | None = None
    beta: Vector | None = None
    frames: tuple[PLRFrame, ...] = ()

    def __post_init__(self) -> None:
        from orthofit.core.mvdist import check_beta

        mu = _frozen_array(self.mu, 2)
        lam = _frozen_array(self.lam, 2)
        if mu.shape != lam.shape:
            raise InputError(f"Mean shape {mu.shape} does not match eigenvalue shape {lam.shape}.")
        if (self.q_common is None) == (self.q_group is None):
            raise InputError("Exactly one of a common or groupwise orthogonal matrix is required.")
        if self.q_group is not None:
            q_group = tuple(self.q_group)
            if len(q_group) != mu.shape[0]:
                raise InputError("One orthogonal matrix per group is required.")
            object.__setattr__(self, "q_group", q_group)
        if not np.all(lam > 0):
            raise NotPositiveDefiniteError("All eigenvalues must be strictly positive.")
        if self.beta is not None:
            beta = _frozen_array(self.beta, 1)
            if beta.size != mu.shape[0]:
                raise InputError("One excess kurtosis per group is required.")
            for value in beta:
                check_beta(float(value), mu.shape[1])
            object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "frames", tuple(self.frames))

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    @property
    def d(self) -> int:
        return self.mu.shape[1]

    @property
    def structure(self) -> Structure:
        return Structure.CPC if self.q_common is not None else Structure.UNCONSTRAINED

    def rotation(self, j: int) -> Matrix:
        if self.q_common is not None:
            return self.q_common.values
        return self.q_group[j].values

    def covariance(self, j: int) -> Matrix:
        q = self.rotation(j)
        return (q * self.lam[j]) @ q.T


class OptimMethod(Enum):
    NELDER_MEAD = "nelder-mead"
    BFGS = "bfgs"


@dataclass
class OptimizerConfig:
    method: OptimMethod
    max_iter: int
    f_tol: float = 1e-10
    x_tol: float = 1e-10
    g_tol: float = 1e-5
    fd_step: float = 1e-6
    restarts: int = 1

    def __post_init__(self) -> None:
        if self.max_iter <= 0:
            raise InputError("max_iter must be positive.")
        if self.f_tol <= 0 or self.x_tol <= 0 or self.g_tol <= 0:
            raise InputError("Optimizer tolerances must be positive.")
        if self.fd_step <= 0:
            raise InputError("fd_step must be positive.")
        if self.restarts < 0:
            raise InputError("restarts must be greater than or equal to 0.")

    @classmethod
    def nelder_mead(cls, **overrides) -> OptimizerConfig:
        return cls(method=OptimMethod.NELDER_MEAD, max_iter=overrides.pop("max_iter", 5000), **overrides)

    @classmethod
    def bfgs(cls, **overrides) -> OptimizerConfig:
        return cls(method=OptimMethod.BFGS, max_iter=overrides.pop("max_iter", 500), **overrides)


@dataclass
class OptimResult:
    x_opt: Vector
    f_opt: float
    iterations: int
    converged: bool
    method: OptimMethod | None = None
    gradient_norm_at_opt: float | None = None
    evaluations: int = 0


@dataclass
class FitConfig:
    nelder_mead: OptimizerConfig = field(default_factory=OptimizerConfig.nelder_mead)
    bfgs: OptimizerConfig | None = field(default_factory=OptimizerConfig.bfgs)
    fg_check: bool = False


@dataclass
class FitResult:
    spec: ModelSpec
    params: ParamSet
    loglik: float
    m: int
    n: int
    optim: OptimResult
    stationarity_residual: float | None = None
    beta_clamped: tuple[bool, ...] = ()
    fg_discrepancy: float | None = None


@dataclass(frozen=True)
class LRTest:
    null: str
    alternative: str
    statistic: float
    df: int
    p_value: float


@dataclass(frozen=True)
class ModelEntry:
    name: str
    loglik: float
    m: int
    aic: float
    bic: float


@dataclass
class ComparisonReport:
    n: int
    entries: list[ModelEntry]
    lr_tests: list[LRTest]
    best_aic: str | None = None
    best_bic: str | None = None


@dataclass
class RunConfig:
    input_path: str
    group_column: str
    variables: list[str]
    log_transform: bool
    models: list[ModelSpec]
    fit: FitConfig
    output_format: str
    output_path: str | None
    corrected: bool = False
    progress: bool = True
