"""Cross-classified over-dispersed Poisson baseline.

The fit is closed-form: chain-ladder development factors give the accident
ultimates and the incremental development pattern, which back out the
accident effects A_i (expected ultimates, since the B_j sum to one) and the
development effects B_j. Dispersion is the Pearson chi-square divided by the
residual degrees of freedom. A continuous quasi-density (gamma-function
extension of the Poisson pmf) supports log scoring and quantiles.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import gammaln

from .triangle import IncrementalTriangle, upper_triangle_cells

# Relative dispersion floor: keeps the quasi-density proper when Pearson
# residuals vanish (exactly multiplicative data) or dof is zero.
DISPERSION_FLOOR_REL = 1e-8


@dataclass(frozen=True)
class CcOdpFit:
    """Accident effects A (expected ultimates), development effects B
    (summing to 1), and dispersion D; mean of cell (i,j) is A_i * B_j."""

    A: np.ndarray
    B: np.ndarray
    D: float

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float))
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float))
        if self.A.size != self.B.size:
            raise ValueError("A and B must have equal length")
        if np.any(self.A <= 0) or np.any(self.B <= 0) or not self.D > 0:
            raise ValueError("A, B, D must be strictly positive")

    @property
    def n(self) -> int:
        return self.A.size

    def mean(self, i: int, j: int) -> float:
        return float(self.A[i - 1] * self.B[j - 1])

    def mean_surface(self) -> np.ndarray:
        return np.outer(self.A, self.B)


def _region_dimension(tri: IncrementalTriangle, region) -> int:
    if region is None:
        tri.require_complete_upper()
        return tri.n
    cells = set(region)
    m = max(i for i, _ in cells)
    if m > tri.n or set(upper_triangle_cells(m)) != cells:
        raise ValueError("region must be a complete upper triangle of some dimension")
    for c in cells:
        if not tri.is_observed(*c):
            raise ValueError(f"region cell {c} is not observed")
    return m


def fit_ccodp(tri: IncrementalTriangle, region=None) -> CcOdpFit:
    """Maximum quasi-likelihood fit; fitted means coincide with the
    chain ladder on any complete upper triangle with positive column sums."""
    m = _region_dimension(tri, region)
    X = tri.amounts[:m, :m]
    # cumulative claims along development, valid on the upper triangle
    C = np.nancumsum(np.where(np.isfinite(X), X, 0.0), axis=1)

    factors = np.empty(m - 1)
    for j in range(1, m):  # factor from development j to j+1, 1-based j
        rows = np.arange(0, m - j)
        num = C[rows, j].sum()
        den = C[rows, j - 1].sum()
        if den <= 0:
            raise ValueError(f"nonpositive cumulative column total at development {j}")
        factors[j - 1] = num / den

    # accident ultimates: latest cumulative grown by the remaining factors
    A = np.empty(m)
    for i in range(1, m + 1):
        latest_j = m - i + 1
        A[i - 1] = C[i - 1, latest_j - 1] * np.prod(factors[latest_j - 1:])
    # incremental development pattern from the cumulative proportions
    p = np.empty(m)
    p[m - 1] = 1.0
    for j in range(m - 1, 0, -1):
        p[j - 1] = p[j] / factors[j - 1]
    B = np.diff(p, prepend=0.0)
    if np.any(A <= 0) or np.any(B <= 0):
        raise ValueError("nonpositive accident or development effect; data too sparse")

    fitted = np.outer(A, B)
    ii, jj = np.indices((m, m))
    upper = ii + jj + 2 <= m + 1
    obs = X[upper]
    fit_vals = fitted[upper]
    pearson = float((((obs - fit_vals) ** 2) / fit_vals).sum())
    dof = obs.size - (2 * m - 1)
    floor = DISPERSION_FLOOR_REL * float(obs.mean())
    D = pearson / dof if dof >= 1 else 0.0
    return CcOdpFit(A=A, B=B, D=max(D, floor))


def adjust_latest_accident(fit: CcOdpFit) -> CcOdpFit:
    """If the log accident effect of the latest period falls below the
    average of all log accident effects, replace it by the mean of the
    previous three; otherwise return the fit unchanged. Idempotent: the
    replacement value depends only on the three untouched predecessors."""
    if fit.n < 4:
        raise ValueError("adjustment needs at least 4 accident periods")
    ln_a = np.log(fit.A)
    if ln_a[-1] >= ln_a.mean():
        return fit
    new = ln_a.copy()
    new[-1] = ln_a[-4:-1].mean()
    return replace(fit, A=np.exp(new))


def ccodp_log_density(fit: CcOdpFit, i: int, j: int, x) -> np.ndarray | float:
    """Log of the continuous ODP quasi-density
    exp(-m/D) (m/D)^(x/D) / (Gamma(x/D + 1) D); -inf for x < 0.

    The quasi-density integrates to 1 within 1e-3 once m/D is roughly 8 or
    larger; for smaller ratios it carries a mass deficit, which is why the
    quantile routine normalizes by the total mass.
    """
    x = np.asarray(x, dtype=float)
    m, D = fit.mean(i, j), fit.D
    lam = m / D
    y = x / D
    out = np.full(x.shape, -np.inf)
    ok = x >= 0
    out[ok] = -lam + y[ok] * np.log(lam) - gammaln(y[ok] + 1.0) - np.log(D)
    return out if out.ndim else float(out)


def ccodp_density(fit: CcOdpFit, i: int, j: int, x) -> np.ndarray | float:
    return np.exp(ccodp_log_density(fit, i, j, x))


def _cdf_grid(fit: CcOdpFit, i: int, j: int, npts: int = 4097):
    m, D = fit.mean(i, j), fit.D
    hi = m + 25.0 * np.sqrt(D * m) + 10.0 * D
    xs = np.linspace(0.0, hi, npts)
    dens = ccodp_density(fit, i, j, xs)
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(xs))])
    return xs, cdf


def ccodp_quantile(fit: CcOdpFit, i: int, j: int, q: float) -> float:
    """Smallest x whose integrated quasi-density reaches fraction q of the
    total mass (trapezoid CDF on a fixed grid, inverted by interpolation)."""
    if not (0.0 < q < 1.0):
        raise ValueError("quantile level must lie strictly between 0 and 1")
    xs, cdf = _cdf_grid(fit, i, j)
    total = cdf[-1]
    if total <= 0:
        raise ValueError("degenerate quasi-density")
    return float(np.interp(q, cdf / total, xs))


def ccodp_quantiles(fit: CcOdpFit, cells, qs) -> np.ndarray:
    """Quantiles at each level in qs for each cell; shape (len(cells), len(qs))."""
    qs = np.asarray(qs, dtype=float)
    out = np.empty((len(cells), qs.size))
    for r, (i, j) in enumerate(cells):
        xs, cdf = _cdf_grid(fit, i, j)
        out[r] = np.interp(qs, cdf / cdf[-1], xs)
    return out
