"""Discrete norm estimators: L^p, Lorentz L^{2,inf} and L^{2,1}, the
homogeneous negative Sobolev norm, ball restrictions, and Morrey decay fits.

Level sets are counted by whole cells (each grid point contributes one
cell_measure); balls use the flat wrap-around torus metric and radii are
capped at L/2 - spacing.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Ball",
    "NormReport",
    "lp_norm",
    "linf_norm",
    "l2_norm",
    "lorentz_weak_l2",
    "lorentz_l21",
    "sobolev_neg_1_2",
    "morrey_profile",
    "MorreyFit",
    "pointwise_abs",
]


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float


@dataclass
class NormReport:
    name: str
    value: float
    grid_n: int
    region: Ball | None = None

    def csv_row(self):
        if self.region is None:
            cx = cy = r = ""
        else:
            cx, cy = (f"{c!r}" for c in self.region.center)
            r = f"{self.region.radius!r}"
        return f"{self.name},{self.grid_n},{cx},{cy},{r},{self.value!r}"


def pointwise_abs(f):
    """Pointwise magnitude; trailing component axes are contracted."""
    f = np.asarray(f)
    if np.iscomplexobj(f):
        mag2 = (f.real**2 + f.imag**2)
    else:
        mag2 = f**2
    if mag2.ndim > 2:
        mag2 = mag2.reshape(mag2.shape[0], mag2.shape[1], -1).sum(axis=-1)
    return np.sqrt(mag2)


def _ball_mask(grid, ball):
    if ball is None:
        return None
    rmax = grid.length / 2.0 - grid.spacing
    if ball.radius > rmax:
        raise ValueError(f"ball radius {ball.radius} exceeds cap {rmax}")
    cx, cy = ball.center
    d1 = np.abs(grid.x1 - cx)
    d1 = np.minimum(d1, grid.length - d1)
    d2 = np.abs(grid.x2 - cy)
    d2 = np.minimum(d2, grid.length - d2)
    return d1**2 + d2**2 <= ball.radius**2


def _region_values(grid, f, region):
    vals = pointwise_abs(f)
    mask = _ball_mask(grid, region)
    if mask is not None:
        vals = vals[mask]
    return np.ravel(vals)


def lp_norm(grid, f, p, region=None):
    if p < 1:
        raise ValueError("p must be >= 1")
    vals = _region_values(grid, f, region)
    return float((np.sum(vals**p) * grid.cell_measure) ** (1.0 / p))


def linf_norm(grid, f, region=None):
    vals = _region_values(grid, f, region)
    return float(vals.max()) if vals.size else 0.0


def l2_norm(grid, f, region=None):
    return lp_norm(grid, f, 2, region)


def _decreasing_rearrangement(grid, f, region):
    vals = _region_values(grid, f, region)
    return np.sort(vals)[::-1]


def lorentz_weak_l2(grid, f, region=None):
    """sup over lambda of lambda * measure{|f| >= lambda}^(1/2), discretely
    max_k f*_k (k cell)^(1/2) over the decreasing rearrangement f*."""
    star = _decreasing_rearrangement(grid, f, region)
    if star.size == 0 or star[0] == 0.0:
        return 0.0
    k = np.arange(1, star.size + 1)
    return float(np.max(star * np.sqrt(k * grid.cell_measure)))


def lorentz_l21(grid, f, region=None):
    """Layer-cake integral of measure{|f| >= lambda}^(1/2), discretely
    sum_k f*_k (sqrt(k) - sqrt(k-1)) sqrt(cell)."""
    star = _decreasing_rearrangement(grid, f, region)
    if star.size == 0:
        return 0.0
    k = np.arange(1, star.size + 1)
    weights = np.sqrt(k) - np.sqrt(k - 1)
    return float(np.sum(star * weights) * np.sqrt(grid.cell_measure))


def sobolev_neg_1_2(plan, f):
    """Homogeneous negative-order norm || |k|^-1 f_hat ||, zero mode dropped.

    The zero mode is the torus proxy for homogeneity; inputs must be
    mean-zero, otherwise the value would silently depend on the dropped mode.
    """
    f = np.asarray(f)
    l2 = l2_norm(plan.grid, f)
    mean = np.abs(np.mean(f))
    if mean > 1e-10 * max(l2, 1e-300):
        raise ValueError(
            f"sobolev_neg_1_2 needs a mean-zero field (|mean|={mean:.3e}); "
            "subtract the mean first"
        )
    c = plan.fourier_coefficients(f)
    nz = plan.k2abs > 0
    return float(
        np.sqrt(np.sum(np.abs(c[nz]) ** 2 / plan.k2abs[nz]) * plan.grid.area)
    )


@dataclass
class MorreyFit:
    alpha: float | None
    radii: list
    values: list
    fit_residual: float | None
    degenerate: bool


def morrey_profile(grid, f, center, radii, norm="weak_l2"):
    """Least-squares slope of log ||f||_{L^{2,inf}(B(x,r))} against log r."""
    if len(radii) < 4:
        raise ValueError("need at least 4 radii for a decay fit")
    if norm != "weak_l2":
        raise ValueError(f"unsupported norm {norm!r}")
    values = [lorentz_weak_l2(grid, f, Ball(center, r)) for r in radii]
    if any(v <= 0.0 for v in values):
        return MorreyFit(None, list(radii), values, None, True)
    logs_r = np.log(np.asarray(radii, dtype=float))
    logs_v = np.log(np.asarray(values))
    coeffs, res, *_ = np.polyfit(logs_r, logs_v, 1, full=True)
    fit_residual = float(res[0]) if len(res) else 0.0
    return MorreyFit(float(coeffs[0]), list(radii), values, fit_residual, False)
