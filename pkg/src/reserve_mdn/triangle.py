"""Incremental claims triangles: cell indexing, calendar arithmetic,
response normalization, and long-format CSV I/O.

Cells are 1-based (accident period i, development period j). The upper
triangle (i + j <= n + 1) is the observed region used for fitting; full
squares are allowed so that simulated data can carry realized lower
triangles for evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

Cell = tuple[int, int]

# Smallest triangle the modelling pipeline (partitions, network fits)
# accepts. Data containers and the ODP closed form work from n >= 2 so
# that small hand-checkable fixtures remain expressible.
MIN_MODEL_DIM = 8


def calendar_period(i: int, j: int) -> int:
    """Calendar period of cell (i, j): diagonals counted from 1."""
    return i + j - 1


def upper_triangle_cells(n: int) -> list[Cell]:
    """All observable cells (i + j <= n + 1), row-major."""
    return [(i, j) for i in range(1, n + 1) for j in range(1, n - i + 2)]


def lower_triangle_cells(n: int) -> list[Cell]:
    """All forecast cells (i + j > n + 1), row-major."""
    return [(i, j) for i in range(1, n + 1) for j in range(n - i + 2, n + 1)]


def is_upper(i: int, j: int, n: int) -> bool:
    return i + j <= n + 1


@dataclass(frozen=True)
class IncrementalTriangle:
    """Square grid of incremental claim amounts with an observed mask.

    Attributes
    ----------
    n : triangle dimension.
    amounts : (n, n) float array; entry [i-1, j-1] is the amount of cell (i, j).
        Unobserved entries hold NaN.
    observed : (n, n) bool array marking which cells carry data.
    """

    n: int
    amounts: np.ndarray
    observed: np.ndarray

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"triangle dimension must be >= 2, got {self.n}")
        if self.amounts.shape != (self.n, self.n) or self.observed.shape != (self.n, self.n):
            raise ValueError("amounts/observed must be (n, n) arrays")
        vals = self.amounts[self.observed]
        if not np.all(np.isfinite(vals)):
            raise ValueError("observed cells must hold finite amounts")
        self.amounts.setflags(write=False)
        self.observed.setflags(write=False)

    @classmethod
    def from_cells(cls, n: int, cells: dict[Cell, float]) -> "IncrementalTriangle":
        amounts = np.full((n, n), np.nan)
        observed = np.zeros((n, n), dtype=bool)
        for (i, j), x in cells.items():
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"cell ({i},{j}): index out of range 1..{n}")
            amounts[i - 1, j - 1] = float(x)
            observed[i - 1, j - 1] = True
        return cls(n=n, amounts=amounts, observed=observed)

    def amount(self, i: int, j: int) -> float:
        return float(self.amounts[i - 1, j - 1])

    def is_observed(self, i: int, j: int) -> bool:
        return bool(self.observed[i - 1, j - 1])

    def observed_cells(self) -> list[Cell]:
        idx = np.argwhere(self.observed)
        return [(int(i) + 1, int(j) + 1) for i, j in idx]

    def values_at(self, cells) -> np.ndarray:
        cells = list(cells)
        ii = np.array([c[0] for c in cells], dtype=int) - 1
        jj = np.array([c[1] for c in cells], dtype=int) - 1
        return self.amounts[ii, jj]

    def has_complete_upper(self) -> bool:
        ii, jj = np.indices((self.n, self.n))
        upper = ii + jj + 2 <= self.n + 1
        return bool(np.all(self.observed[upper]))

    def require_complete_upper(self) -> None:
        if not self.has_complete_upper():
            missing = [
                (i, j)
                for (i, j) in upper_triangle_cells(self.n)
                if not self.is_observed(i, j)
            ]
            raise ValueError(f"missing upper-triangle cell(s): {missing[:5]}")

    def upper_values(self) -> np.ndarray:
        """Amounts of the observed upper-triangle cells, row-major."""
        self.require_complete_upper()
        return self.values_at(upper_triangle_cells(self.n))

    def is_full_square(self) -> bool:
        return bool(np.all(self.observed))

    def actual_reserve(self) -> float:
        """Sum of lower-triangle amounts; requires a full square."""
        cells = lower_triangle_cells(self.n)
        vals = self.values_at(cells)
        if np.any(np.isnan(vals)):
            raise ValueError("lower triangle not fully observed")
        return float(vals.sum())


def load_triangle(path, n: int) -> IncrementalTriangle:
    """Read a long-format CSV (header ``accident,development,amount``).

    Every upper-triangle cell must be present exactly once; lower-triangle
    cells are optional (full squares carry realized forecast-region data).
    """
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ValueError(f"{path}: empty file")
    header = [h.strip().lower() for h in lines[0].split(",")]
    if header[:3] != ["accident", "development", "amount"]:
        raise ValueError(f"{path}: expected header 'accident,development,amount'")
    cells: dict[Cell, float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) < 3:
            raise ValueError(f"{path}:{lineno}: expected 3 columns")
        try:
            i, j = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric cell index") from None
        try:
            x = float(parts[2])
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric amount") from None
        if not (1 <= i <= n and 1 <= j <= n):
            raise ValueError(f"{path}:{lineno}: cell ({i},{j}) index out of range 1..{n}")
        if (i, j) in cells:
            raise ValueError(f"{path}:{lineno}: duplicate cell ({i},{j})")
        if not math.isfinite(x):
            raise ValueError(f"{path}:{lineno}: non-finite amount")
        cells[(i, j)] = x
    for cell in upper_triangle_cells(n):
        if cell not in cells:
            raise ValueError(f"{path}: missing upper-triangle cell {cell}")
    return IncrementalTriangle.from_cells(n, cells)


def write_triangle_csv(tri: IncrementalTriangle, path) -> None:
    lines = ["accident,development,amount"]
    for i, j in tri.observed_cells():
        lines.append(f"{i},{j},{tri.amount(i, j)!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


@dataclass(frozen=True)
class Normalizer:
    """Affine standardization of the response, optionally on the log scale.

    ``normalize`` maps a raw amount to (t(x) - mean) / std where t is the
    identity or the natural log; ``denormalize`` is the exact inverse.
    """

    mean: float
    std: float
    scale_kind: str  # "raw" | "log"

    def __post_init__(self):
        if self.scale_kind not in ("raw", "log"):
            raise ValueError(f"unknown scale_kind {self.scale_kind!r}")
        if not (self.std > 0):
            raise ValueError("std must be positive")

    def normalize(self, x):
        x = np.asarray(x, dtype=float)
        if self.scale_kind == "log":
            if np.any(x <= 0):
                raise ValueError("log-scale normalizer requires positive amounts")
            x = np.log(x)
        return (x - self.mean) / self.std

    def denormalize(self, z):
        z = np.asarray(z, dtype=float)
        x = z * self.std + self.mean
        if self.scale_kind == "log":
            x = np.exp(x)
        return x


def fit_normalizer(values, scale_kind: str = "raw") -> Normalizer:
    """Sample mean / standard deviation (divisor n-1) of the values or
    their logs; a constant sample falls back to std = 1."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot fit a normalizer to an empty sample")
    if scale_kind == "log":
        if np.any(values <= 0):
            raise ValueError("log scale requires strictly positive values")
        values = np.log(values)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    if not np.isfinite(std) or std == 0.0:
        std = 1.0
    return Normalizer(mean=mean, std=std, scale_kind=scale_kind)


def scale_inputs(cells, n: int) -> np.ndarray:
    """Map accident/development indices linearly onto [0, 1]^2."""
    cells = list(cells)
    out = np.empty((len(cells), 2))
    denom = max(n - 1, 1)
    for r, (i, j) in enumerate(cells):
        out[r, 0] = (i - 1) / denom
        out[r, 1] = (j - 1) / denom
    return out
