"""Bundled datasets: names, default columns and on-disk location."""

import logging
import os
from dataclasses import dataclass
from pathlib import Path

from orthofit.core.errors import InputError

logger = logging.getLogger(__name__)

DATA_DIR_ENV = "ORTHOFIT_DATA_DIR"


@dataclass(frozen=True)
class BundledDataset:
    name: str
    filename: str
    group_column: str
    variables: tuple[str, ...]
    log_transform: bool = True


BUNDLED: dict[str, BundledDataset] = {
    "microtus": BundledDataset("microtus", "microtus.csv", "species", ("Pbone", "Rostrum")),
    "swiss_soldiers": BundledDataset("swiss_soldiers", "swiss_soldiers.csv", "gender", ("MFB", "TFH", "LTG")),
}


def data_dir() -> Path:
    override = os.environ.get(DATA_DIR_ENV)
    if override:
        return Path(override)
    # src/orthofit/adapters/datasets.py -> repository root
    return Path(__file__).resolve().parents[3] / "data"


def bundled_path(name: str) -> Path:
    try:
        dataset = BUNDLED[name]
    except KeyError as e:
        raise InputError(f"Unknown bundled dataset {name!r} (expected one of: {', '.join(BUNDLED)}).") from e
    return data_dir() / dataset.filename


def resolve(value: str) -> tuple[str, BundledDataset | None]:
    """Map a ``--data`` value to a file path and, for bundled names, its defaults."""

    if value in BUNDLED:
        path = bundled_path(value)
        if not path.is_file():
            raise InputError(
                f"Bundled dataset {value!r} is not installed at {path}; see data/PROVENANCE.md."
            )
        logger.debug("Resolved bundled dataset %s to %s", value, path)
        return str(path), BUNDLED[value]
    return value, None
