"""Convert R exports of the Flury package datasets into the bundled CSV layout.

See data/PROVENANCE.md for the R commands producing the inputs.
"""

import argparse
import logging
import sys

import pandas as pd

from orthofit.adapters.datasets import BUNDLED, data_dir
from orthofit.adapters.storage import write_grouped_csv
from orthofit.core.errors import InputError, OrthofitError
from orthofit.core.models import Group, GroupedDataset

logger = logging.getLogger("prepare_data")

MICROTUS_SPECIES = ("multiplex", "subterraneus")
MICROTUS_COLUMNS = ("M1Left", "M2Left", "M3Left", "Foramen", "Pbone", "Length", "Height", "Rostrum")
SWISS_COLUMNS = ("MFB", "BAM", "TFH", "LGAN", "LTN", "LTG")


def _read(path: str, columns: tuple[str, ...]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise InputError(f"Failed to read {path}: {e}") from e
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise InputError(f"Columns not found in {path}: {', '.join(missing)}")
    return frame


def prepare_microtus(raw_path: str) -> GroupedDataset:
    frame = _read(raw_path, ("Group", *MICROTUS_COLUMNS))
    groups = []
    for species in MICROTUS_SPECIES:
        rows = frame[frame["Group"].astype(str).str.lower() == species]
        groups.append(Group(species, rows[list(MICROTUS_COLUMNS)].to_numpy(dtype=float)))
        logger.info("microtus %s: %d specimens", species, len(rows))
    return GroupedDataset(len(MICROTUS_COLUMNS), tuple(groups))


def prepare_swiss(men_path: str, women_path: str) -> GroupedDataset:
    women = _read(women_path, SWISS_COLUMNS)
    men = _read(men_path, SWISS_COLUMNS)
    logger.info("swiss soldiers: %d women, %d men", len(women), len(men))
    return GroupedDataset(
        len(SWISS_COLUMNS),
        (
            Group("female", women[list(SWISS_COLUMNS)].to_numpy(dtype=float)),
            Group("male", men[list(SWISS_COLUMNS)].to_numpy(dtype=float)),
        ),
    )


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", type=str, default=str(data_dir()), help="Directory for the bundled CSVs.")
    subparsers = parser.add_subparsers(dest="dataset", required=True)
    microtus = subparsers.add_parser("microtus")
    microtus.add_argument("raw", type=str, help="write.csv export of Flury::microtus.")
    swiss = subparsers.add_parser("swiss")
    swiss.add_argument("--men", type=str, required=True, help="write.csv export of Flury::swiss.head.")
    swiss.add_argument("--women", type=str, required=True, help="write.csv export of Flury::f.swiss.head.")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    try:
        if args.dataset == "microtus":
            bundled = BUNDLED["microtus"]
            write_grouped_csv(
                f"{args.out_dir}/{bundled.filename}",
                prepare_microtus(args.raw),
                bundled.group_column,
                MICROTUS_COLUMNS,
            )
        else:
            bundled = BUNDLED["swiss_soldiers"]
            write_grouped_csv(
                f"{args.out_dir}/{bundled.filename}",
                prepare_swiss(args.men, args.women),
                bundled.group_column,
                SWISS_COLUMNS,
            )
    except OrthofitError as e:
        logger.error("error: %s", e)
        return e.exit_code
    logger.info("Wrote %s", bundled.filename)
    return 0


if __name__ == "__main__":
    sys.exit(main())
