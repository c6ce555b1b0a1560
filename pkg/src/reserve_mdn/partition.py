"""Training/validation/testing partitions of the upper triangle.

Rolling-origin splits place the test window on the latest calendar periods
of a working triangle and the validation window on the latest calendar
periods of the remaining inner triangle, excluding the first three accident
and development periods from validation eligibility; displaced validation
cells at development periods 2 and 3 are replaced by cells at the same
development period drawn evenly from earlier accident periods. Adjusted
partitions (for late-calendar shifts) assign 10% test / 10% validation
shares with half of the validation mass forced into the latest eleven
calendar periods.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .triangle import calendar_period, upper_triangle_cells

Cell = tuple[int, int]

VALIDATION_WINDOW = 4   # latest non-testing calendar periods used for validation
EXCLUDED_EDGE = 3       # first accident/development periods kept out of validation
LATE_WINDOW = 11        # calendar periods forming the "late" region of adjusted splits
HOLDOUT_SHARE = 0.10


@dataclass(frozen=True)
class DataSplit:
    """Disjoint train/validation/test cell sets within the upper triangle."""

    name: str
    train: frozenset
    val: frozenset
    test: frozenset

    def __post_init__(self):
        if self.train & self.val or self.train & self.test or self.val & self.test:
            raise ValueError("train/val/test must be disjoint")
        if not self.train or not self.val:
            raise ValueError("train and validation sets must be nonempty")


def validate_split(split: DataSplit, n: int) -> None:
    upper = set(upper_triangle_cells(n))
    for part in (split.train, split.val, split.test):
        if not part <= upper:
            raise ValueError(f"{split.name}: cells outside the upper triangle")


def _choose_evenly(lo: int, hi: int, count: int) -> list[int]:
    """Deterministic, evenly spaced integers in [lo, hi]; all of them if
    fewer than ``count`` are available."""
    available = hi - lo + 1
    if available <= 0 or count <= 0:
        return []
    if count >= available:
        return list(range(lo, hi + 1))
    picks = np.round(np.linspace(lo, hi, count)).astype(int)
    out: list[int] = []
    prev = lo - 1
    for p in picks:
        p = max(int(p), prev + 1)
        out.append(p)
        prev = p
    return out


def _validation_cells(m: int) -> set[Cell]:
    """Validation set of an m x m upper triangle: latest VALIDATION_WINDOW
    calendar periods, minus the excluded edge, plus the development-2/3
    replacements from earlier accident periods."""
    c_lo = m - VALIDATION_WINDOW + 1
    window = [c for c in upper_triangle_cells(m) if calendar_period(*c) >= c_lo]
    val = {c for c in window if c[0] > EXCLUDED_EDGE and c[1] > EXCLUDED_EDGE}
    for dq in (2, 3):
        displaced = sum(1 for c in window if c[1] == dq)
        replacements = _choose_evenly(EXCLUDED_EDGE + 1, c_lo - dq, displaced)
        val.update((i, dq) for i in replacements)
    return val


def _rolling_split(working: int, n_test: int, name: str) -> DataSplit:
    inner = working - n_test
    if inner < VALIDATION_WINDOW + 2:
        raise ValueError(f"triangle too small for split {name}")
    test = {c for c in upper_triangle_cells(working)
            if calendar_period(*c) > inner}
    val = _validation_cells(inner)
    train = {c for c in upper_triangle_cells(inner)} - val
    return DataSplit(name=name, train=frozenset(train), val=frozenset(val),
                     test=frozenset(test))


def rolling_origin(n: int) -> tuple[DataSplit, DataSplit]:
    """The two rolling-origin partitions: the first holds out the latest
    ten calendar periods for testing; the second works with the (n-4)-sized
    triangle and holds out its latest four calendar periods."""
    if n < 20:
        raise ValueError("rolling-origin partitions need n >= 20")
    p1 = _rolling_split(working=n, n_test=10, name="P1")
    p2 = _rolling_split(working=n - 4, n_test=4, name="P2")
    return p1, p2


def final_fit_split(n: int) -> DataSplit:
    """Training/validation split of the whole upper triangle used for the
    final fit: validation on the latest four calendar periods (with the
    usual edge exclusion and replacements), no test set."""
    if n < 12:
        raise ValueError("final-fit split needs n >= 12")
    val = _validation_cells(n)
    train = set(upper_triangle_cells(n)) - val
    return DataSplit(name="P3", train=frozenset(train), val=frozenset(val),
                     test=frozenset())


def _sample(rng: np.random.Generator, pool: list[Cell], count: int) -> set[Cell]:
    if count > len(pool):
        raise ValueError("insufficient cells available for the requested draw")
    idx = rng.choice(len(pool), size=count, replace=False)
    return {pool[int(i)] for i in idx}


def adjusted_partitions(n: int, seed: int):
    """Four whole-triangle splits for environments whose late calendar
    periods carry a trend shift: two with test sets drawn from the latest
    eleven calendar periods (disjoint between the two), two test-free for
    final fitting. Validation is always 10% of the cells, half forced into
    the late region."""
    if n < 20:
        raise ValueError("adjusted partitions need n >= 20")
    rng = np.random.default_rng(seed)
    upper = upper_triangle_cells(n)
    late = [c for c in upper if calendar_period(*c) > n - LATE_WINDOW]
    count = max(1, round(HOLDOUT_SHARE * len(upper)))
    n_late_half = count - count // 2

    def build(name: str, test: set) -> DataSplit:
        late_pool = sorted(set(late) - test)
        val = _sample(rng, late_pool, n_late_half)
        rest_pool = sorted(set(upper) - test - val)
        val |= _sample(rng, rest_pool, count // 2)
        train = set(upper) - test - val
        return DataSplit(name=name, train=frozenset(train),
                         val=frozenset(val), test=frozenset(test))

    test1 = _sample(rng, sorted(late), count)
    adj1 = build("ADJ1", test1)
    test2 = _sample(rng, sorted(set(late) - test1), count)
    adj2 = build("ADJ2", test2)
    adj3 = build("ADJ3", set())
    adj4 = build("ADJ4", set())
    return adj1, adj2, adj3, adj4
