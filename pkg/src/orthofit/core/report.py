"""JSON documents and markdown tables for fits, comparisons and diagnostics."""

from __future__ import annotations

import json
import logging
from collections.abc import Sequence
from typing import TYPE_CHECKING, Any

import numpy as np

from orthofit.core.inference import aic, bic
from orthofit.core.models import MODEL_SPECS

if TYPE_CHECKING:
    from orthofit.core.models import (
        ComparisonReport,
        FitResult,
        KurtosisTest,
        Matrix,
        PLRFactors,
    )

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
EIGENVALUE_SCALE = 100.0
P_VALUE_FLOOR = 5e-4


def _matrix(values) -> dict[str, Any]:
    values = np.atleast_2d(np.asarray(values, dtype=float))
    return {"rows": values.shape[0], "cols": values.shape[1], "data": values.tolist()}


def _document(kind: str, body: dict[str, Any]) -> dict[str, Any]:
    return {"schema": SCHEMA_VERSION, "kind": kind, **body}


def to_json(document: dict[str, Any]) -> str:
    return json.dumps(document, indent=2, allow_nan=False) + "\n"


def fit_to_dict(result: FitResult, labels: Sequence[str], variables: Sequence[str]) -> dict[str, Any]:
    params = result.params
    groups = []
    for j, label in enumerate(labels):
        group: dict[str, Any] = {
            "label": label,
            "mu": params.mu[j].tolist(),
            "lambda": params.lam[j].tolist(),
            "sigma": _matrix(params.covariance(j)),
        }
        if params.q_group is not None:
            group["q"] = _matrix(params.q_group[j].values)
        if params.beta is not None:
            group["beta"] = float(params.beta[j])
            group["beta_clamped_at_start"] = bool(result.beta_clamped[j]) if result.beta_clamped else False
        groups.append(group)

    optim = result.optim
    body: dict[str, Any] = {
        "model": result.spec.name,
        "variables": list(variables),
        "n": result.n,
        "d": params.d,
        "k": params.k,
        "loglik": result.loglik,
        "m": result.m,
        "aic": aic(result.loglik, result.m),
        "bic": bic(result.loglik, result.m, result.n),
        "q_common": _matrix(params.q_common.values) if params.q_common is not None else None,
        "groups": groups,
        "diagnostics": {
            "stationarity_residual": result.stationarity_residual,
            "fg_discrepancy": result.fg_discrepancy,
            "optimizer": {
                "method": optim.method.value if optim.method is not None else "closed-form",
                "iterations": optim.iterations,
                "evaluations": optim.evaluations,
                "converged": optim.converged,
                "gradient_norm": optim.gradient_norm_at_opt,
            },
        },
    }
    return body


def fits_to_document(results: Sequence[FitResult], labels: Sequence[str], variables: Sequence[str]) -> dict[str, Any]:
    return _document("fit", {"fits": [fit_to_dict(r, labels, variables) for r in results]})


def comparison_to_document(report: ComparisonReport, fits: dict[str, Any] | None = None) -> dict[str, Any]:
    body: dict[str, Any] = {
        "n": report.n,
        "models": [
            {"name": e.name, "loglik": e.loglik, "m": e.m, "aic": e.aic, "bic": e.bic} for e in report.entries
        ],
        "lr_tests": [
            {
                "null": t.null,
                "alternative": t.alternative,
                "statistic": t.statistic,
                "df": t.df,
                "p_value": t.p_value,
            }
            for t in report.lr_tests
        ],
        "best_aic": report.best_aic,
        "best_bic": report.best_bic,
    }
    if fits is not None:
        body["fits"] = fits["fits"]
    return _document("compare", body)


def kurtosis_to_document(tests: Sequence[tuple[str, KurtosisTest]], corrected: bool) -> dict[str, Any]:
    return _document(
        "kurtosis",
        {
            "corrected": corrected,
            "groups": [
                {
                    "label": label,
                    "n": t.n,
                    "d": t.d,
                    "excess_kurtosis": t.excess,
                    "mardia_statistic": t.statistic,
                    "p_value": t.p_value,
                }
                for label, t in tests
            ],
        },
    )


def decomposition_to_document(factors: PLRFactors, error: float) -> dict[str, Any]:
    return _document(
        "decompose",
        {
            "d": factors.order,
            "permutation": list(factors.permutation.mapping),
            "signs": list(factors.signs),
            "l_entries": factors.lower.sub_diagonal.tolist(),
            "reconstruction_error": error,
        },
    )


def format_p_value(p: float) -> str:
    return "0.000" if p < P_VALUE_FLOOR else f"{p:.3f}"


def _row(cells: Sequence[str]) -> str:
    return "| " + " | ".join(cells) + " |"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> list[str]:
    lines = [_row(header), _row(["---"] * len(header))]
    lines.extend(_row(r) for r in rows)
    return lines


def _matrix_table(values: Matrix, row_labels: Sequence[str], col_labels: Sequence[str]) -> list[str]:
    rows = [[label, *(f"{v:.3f}" for v in row)] for label, row in zip(row_labels, values, strict=True)]
    return _table(["", *col_labels], rows)


def fit_to_markdown(result: FitResult, labels: Sequence[str], variables: Sequence[str]) -> str:
    params = result.params
    components = [f"PC{h + 1}" for h in range(params.d)]
    lines = [f"# {result.spec.name}"]

    lines.extend(["", "## Fit", ""])
    lines.extend(
        _table(
            ["loglik", "m", "AIC", "BIC"],
            [
                [
                    f"{result.loglik:.3f}",
                    str(result.m),
                    f"{aic(result.loglik, result.m):.3f}",
                    f"{bic(result.loglik, result.m, result.n):.3f}",
                ]
            ],
        )
    )

    if params.q_common is not None:
        lines.extend(["", "## Eigenvectors", ""])
        lines.extend(_matrix_table(params.q_common.values, variables, components))
    else:
        for j, label in enumerate(labels):
            lines.extend(["", f"## Eigenvectors ({label})", ""])
            lines.extend(_matrix_table(params.q_group[j].values, variables, components))

    lines.extend(["", f"## Eigenvalues (x{EIGENVALUE_SCALE:g})", ""])
    lines.extend(_matrix_table(params.lam * EIGENVALUE_SCALE, labels, components))

    if params.beta is not None:
        lines.extend(["", "## Excess kurtosis", ""])
        rows = []
        for j, label in enumerate(labels):
            clamped = bool(result.beta_clamped[j]) if result.beta_clamped else False
            rows.append([label, f"{params.beta[j]:.3f}", "yes" if clamped else "no"])
        lines.extend(_table(["group", "beta", "clamped at start"], rows))

    diagnostics = []
    if result.stationarity_residual is not None:
        diagnostics.append(f"- Stationarity residual: {result.stationarity_residual:.3e}")
    if result.fg_discrepancy is not None:
        diagnostics.append(f"- FG discrepancy: {result.fg_discrepancy:.3e}")
    method = result.optim.method.value if result.optim.method is not None else "closed-form"
    diagnostics.append(
        f"- Optimizer: {method}, {result.optim.iterations} iterations, "
        f"{'converged' if result.optim.converged else 'not converged'}"
    )
    lines.extend(["", "## Diagnostics", "", *diagnostics])
    return "\n".join(lines)


def fits_to_markdown(results: Sequence[FitResult], labels: Sequence[str], variables: Sequence[str]) -> str:
    return "\n\n".join(fit_to_markdown(r, labels, variables) for r in results) + "\n"


def comparison_to_markdown(report: ComparisonReport) -> str:
    lines = ["# Model comparison", "", f"n = {report.n}", "", "## Criteria", ""]
    lines.extend(
        _table(
            ["model", "loglik", "m", "AIC", "BIC"],
            [[e.name, f"{e.loglik:.3f}", str(e.m), f"{e.aic:.3f}", f"{e.bic:.3f}"] for e in report.entries],
        )
    )

    fitted = [spec.name for spec in MODEL_SPECS if any(e.name == spec.name for e in report.entries)]
    p_values = {(t.null, t.alternative): t.p_value for t in report.lr_tests}
    rows = []
    for null in fitted[:-1]:
        cells = [null]
        for alternative in fitted[1:]:
            p = p_values.get((null, alternative))
            cells.append("--" if p is None else format_p_value(p))
        rows.append(cells)
    if rows:
        lines.extend(["", "## LR test p-values (null in rows)", ""])
        lines.extend(_table(["", *fitted[1:]], rows))

    lines.extend(["", f"- Best by AIC: {report.best_aic}", f"- Best by BIC: {report.best_bic}"])
    return "\n".join(lines) + "\n"


def kurtosis_to_markdown(tests: Sequence[tuple[str, KurtosisTest]], corrected: bool) -> str:
    title = "# Kurtosis (Mardia, small-sample corrected)" if corrected else "# Kurtosis (Mardia)"
    rows = [
        [label, str(t.n), f"{t.excess:.3f}", f"{t.statistic:.3f}", format_p_value(t.p_value)] for label, t in tests
    ]
    return "\n".join([title, "", *_table(["group", "n", "excess", "z", "p-value"], rows)]) + "\n"


def decomposition_to_markdown(factors: PLRFactors, error: float) -> str:
    lines = [
        "# PLR decomposition",
        "",
        f"- P: {list(factors.permutation.mapping)}",
        f"- Column signs: {list(factors.signs)}",
        f"- L entries: {[round(float(v), 12) for v in factors.lower.sub_diagonal]}",
        f"- Reconstruction error: {error:.3e}",
    ]
    return "\n".join(lines) + "\n"
