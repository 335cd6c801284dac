"""Post-stratification of per-cell estimates to population totals."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, SchemaError
from .sampling import Dataset


@dataclass(frozen=True)
class CellTable:
    """Population fractions of the cells of a covariate cross-tabulation.

    Cells are keyed by tuples of level indices in `subset_names` order.
    """

    subset_names: tuple[str, ...]
    fractions: dict

    def __post_init__(self) -> None:
        total = 0.0
        for cell, frac in self.fractions.items():
            if frac < 0.0:
                raise ConfigError(f"cell {cell} has negative fraction {frac}")
            total += frac
        if abs(total - 1.0) > 1e-9:
            raise ConfigError(f"cell fractions sum to {total!r}, expected 1")

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cell_id", "fraction"])
            for cell in sorted(self.fractions):
                writer.writerow(["|".join(str(v) for v in cell), repr(float(self.fractions[cell]))])

    @classmethod
    def from_csv(cls, path, subset_names) -> "CellTable":
        fractions = {}
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["cell_id", "fraction"]:
                raise SchemaError(f"unexpected cell table header {header}")
            for cell_id, frac in reader:
                cell = tuple(int(v) for v in cell_id.split("|"))
                fractions[cell] = float(frac)
        return cls(subset_names=tuple(subset_names), fractions=fractions)


def build_cell_table(population: Dataset, covariate_subset) -> CellTable:
    """Empirical joint frequencies of the subset's cross-tabulation."""
    subset = tuple(covariate_subset)
    if not subset:
        raise SchemaError("covariate subset must be non-empty")
    cols = population.column_index(subset)
    counts = tuple(population.level_counts[c] for c in cols)
    flat = np.ravel_multi_index(population.covariates[:, cols].T, counts)
    tallies = np.bincount(flat, minlength=int(np.prod(counts)))
    n = population.n_rows
    fractions = {}
    for flat_idx in np.nonzero(tallies)[0]:
        cell = tuple(int(v) for v in np.unravel_index(flat_idx, counts))
        fractions[cell] = float(tallies[flat_idx]) / n
    return CellTable(subset_names=subset, fractions=fractions)


def poststratify(cell_estimates, table: CellTable) -> float:
    """Population estimate: sum over cells of estimate * population fraction."""
    missing = [cell for cell in table.fractions if cell not in cell_estimates]
    if missing:
        raise SchemaError(f"no estimate for table cells {missing[:5]} "
                          f"({len(missing)} missing)")
    return float(sum(cell_estimates[cell] * frac for cell, frac in table.fractions.items()))
