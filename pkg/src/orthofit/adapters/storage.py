import logging
import os
from collections.abc import Sequence

import numpy as np
import pandas as pd

from orthofit.core.errors import InputError, OutputError
from orthofit.core.models import Group, GroupedDataset, Matrix

logger = logging.getLogger(__name__)

CSV_SIGNIFICANT_DIGITS = 15


def _read_csv(path: str) -> pd.DataFrame:
    try:
        return pd.read_csv(path, encoding="utf-8", sep=",")
    except FileNotFoundError as e:
        raise InputError(f"Data file not found: {path}") from e
    except (OSError, UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise InputError(f"Failed to parse CSV file {path}: {e}") from e


def load_grouped_csv(
    path: str,
    group_column: str,
    variables: Sequence[str],
    *,
    log_transform: bool = False,
) -> GroupedDataset:
    """Read a CSV into groups ordered by first appearance of their label.

    Rows with a missing value in a selected column are rejected with their
    1-based data row number.
    """

    frame = _read_csv(path)
    columns = [group_column, *variables]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(f"Columns not found in {path}: {', '.join(missing)}")
    if len(variables) < 2:
        raise InputError("At least two variables are required.")

    selected = frame[columns]
    incomplete = selected.isna().any(axis=1)
    if incomplete.any():
        row = int(np.flatnonzero(incomplete.to_numpy())[0]) + 1
        raise InputError(f"Missing value in row {row} of {path}.")

    try:
        values = selected[list(variables)].apply(pd.to_numeric, errors="raise").to_numpy(dtype=float)
    except (ValueError, TypeError) as e:
        raise InputError(f"Non-numeric value in the selected variables of {path}: {e}") from e

    if log_transform:
        if np.any(values <= 0):
            raise InputError("Log transform needs strictly positive values.")
        values = np.log(values)

    labels = selected[group_column].astype(str).to_numpy()
    groups = []
    for label in pd.unique(labels):
        groups.append(Group(str(label), values[labels == label]))
    logger.info(
        "Loaded %d observations in %d groups from %s.", values.shape[0], len(groups), os.path.basename(path)
    )
    return GroupedDataset(len(variables), tuple(groups))


def write_grouped_csv(
    path: str,
    data: GroupedDataset,
    group_column: str,
    variables: Sequence[str],
) -> None:
    frames = []
    for group in data.groups:
        part = pd.DataFrame(group.observations, columns=list(variables))
        part.insert(0, group_column, group.label)
        frames.append(part)
    try:
        pd.concat(frames, ignore_index=True).to_csv(
            path, index=False, float_format=f"%.{CSV_SIGNIFICANT_DIGITS}g"
        )
    except OSError as e:
        raise OutputError(f"Failed to write CSV file {path}.") from e


def read_matrix(path: str) -> Matrix:
    """Read a square matrix written as whitespace- or comma-separated rows."""

    try:
        with open(path, encoding="utf-8") as f:
            lines = [line.strip() for line in f if line.strip() and not line.lstrip().startswith("#")]
    except OSError as e:
        raise InputError(f"Failed to read matrix file: {path}") from e
    if not lines:
        raise InputError(f"No matrix rows found in {path}.")

    try:
        rows = [[float(v) for v in line.replace(",", " ").split()] for line in lines]
    except ValueError as e:
        raise InputError(f"Non-numeric matrix entry in {path}: {e}") from e
    if len({len(r) for r in rows}) != 1:
        raise InputError(f"Matrix rows in {path} have different lengths.")
    return np.array(rows, dtype=float)


def write_output(text: str, path: str | None) -> None:
    if path is None:
        print(text, end="")
        return
    try:
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise OutputError(f"Failed to write output file {path}.") from e
    else:
        logger.info("Saved output to %s", path)
