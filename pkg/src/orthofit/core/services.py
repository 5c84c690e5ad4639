import logging
from collections.abc import Sequence

import numpy as np
from tqdm import tqdm

from orthofit.adapters.storage import load_grouped_csv, read_matrix, write_output
from orthofit.core.cpc import fit
from orthofit.core.inference import build_comparison
from orthofit.core.models import (
    LN_CPC,
    LN_PC,
    MODEL_SPECS,
    N_CPC,
    N_PC,
    FitConfig,
    FitResult,
    GroupedDataset,
    ModelSpec,
    OrthogonalMatrix,
    RunConfig,
)
from orthofit.core.mvdist import mardia_kurtosis_test
from orthofit.core.plr import plr_compose, plr_decompose
from orthofit.core.report import (
    comparison_to_document,
    comparison_to_markdown,
    decomposition_to_document,
    decomposition_to_markdown,
    fits_to_document,
    fits_to_markdown,
    kurtosis_to_document,
    kurtosis_to_markdown,
    to_json,
)

logger = logging.getLogger(__name__)

# Models whose estimates embed into the key's parameter space.
WARM_START_SOURCES: dict[ModelSpec, tuple[ModelSpec, ...]] = {
    N_CPC: (),
    LN_CPC: (N_CPC,),
    N_PC: (),
    LN_PC: (LN_CPC, N_PC, N_CPC),
}


def fit_models(
    data: GroupedDataset,
    specs: Sequence[ModelSpec],
    cfg: FitConfig,
    *,
    progress: bool = False,
) -> list[FitResult]:
    """Fit models in lattice order, warm-starting each from the nested fits already done."""

    ordered = [spec for spec in MODEL_SPECS if spec in specs]
    fitted: dict[ModelSpec, FitResult] = {}
    for spec in tqdm(ordered, desc="Fitting models", unit="model", disable=not progress):
        starts = [fitted[source].params for source in WARM_START_SOURCES[spec] if source in fitted]
        fitted[spec] = fit(data, spec, cfg, starts=starts)
    return [fitted[spec] for spec in ordered]


def _load(config: RunConfig) -> GroupedDataset:
    return load_grouped_csv(
        config.input_path,
        config.group_column,
        config.variables,
        log_transform=config.log_transform,
    )


def _render(document: dict, markdown: str, config: RunConfig) -> None:
    text = to_json(document) if config.output_format == "json" else markdown
    write_output(text, config.output_path)


def run_fit(config: RunConfig) -> dict:
    data = _load(config)
    results = fit_models(data, config.models, config.fit, progress=config.progress)
    document = fits_to_document(results, data.labels, config.variables)
    _render(document, fits_to_markdown(results, data.labels, config.variables), config)
    return document


def run_compare(config: RunConfig) -> dict:
    """Fit every requested model, then report criteria and LR tests over the nested pairs."""

    data = _load(config)
    results = fit_models(data, config.models, config.fit, progress=config.progress)
    report = build_comparison(results, data.n)
    logger.info("Best model by AIC: %s; by BIC: %s.", report.best_aic, report.best_bic)
    document = comparison_to_document(report, fits_to_document(results, data.labels, config.variables))
    _render(document, comparison_to_markdown(report), config)
    return document


def run_kurtosis(config: RunConfig) -> dict:
    data = _load(config)
    tests = [
        (group.label, mardia_kurtosis_test(group.observations, corrected=config.corrected))
        for group in data.groups
    ]
    for label, test in tests:
        logger.debug("Group %s: excess kurtosis %.4f (z = %.3f).", label, test.excess, test.statistic)
    document = kurtosis_to_document(tests, config.corrected)
    _render(document, kurtosis_to_markdown(tests, config.corrected), config)
    return document


def run_decompose(input_path: str, output_format: str, output_path: str | None) -> dict:
    q = OrthogonalMatrix(read_matrix(input_path))
    factors = plr_decompose(q)
    error = float(np.linalg.norm(plr_compose(factors).values - q.values))
    logger.info("PLR decomposition of a %dx%d matrix; reconstruction error %.3e.", q.order, q.order, error)
    document = decomposition_to_document(factors, error)
    text = to_json(document) if output_format == "json" else decomposition_to_markdown(factors, error)
    write_output(text, output_path)
    return document
