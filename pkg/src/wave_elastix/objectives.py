"""Hypothesis rasterization and similarity objectives.

Dispersion curves are turned into images by a Gaussian of the distance from
each pixel to the nearest point on any branch polyline. Distances are taken
in pixel-index space: the physical axes mix rad/m and rad/s, so a Euclidean
distance is only meaningful after mapping both axes to bin indices, and sigma
then reads directly as "curve width in pixels".

Four objectives score a hypothesis against the observed image, all oriented
so that larger is better: SSIM, negative MSE, PSNR, and the curve integral
of the observed magnitude along the hypothesized branches.
"""

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ContractError, EmptyRasterWarning, ShapeError, ValidationError
from .fem import DispersionCurves
from .spectral import DispersionImage

PSNR_EXPORT_CAP_DB = 99.0

# SSIM constants per the standard definition with dynamic range R = 1
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03
_SSIM_SIGMA = 1.5
# radius 5 -> 11x11 window
_SSIM_TRUNCATE = 5.0 / _SSIM_SIGMA


class ObjectiveKind(enum.Enum):
    SSIM = "ssim"
    MSE_NEG = "mse_neg"
    PSNR = "psnr"
    CURVE = "curve"

    @property
    def needs_raster(self):
        return self is not ObjectiveKind.CURVE


@dataclass(frozen=True)
class RasterParams:
    """Gaussian curve width sigma (pixels) and the target image axes."""

    sigma: float
    gamma_axis: np.ndarray
    omega_axis: np.ndarray

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"sigma must be positive, got {self.sigma}")
        object.__setattr__(self, "gamma_axis", np.asarray(self.gamma_axis, dtype=np.float64))
        object.__setattr__(self, "omega_axis", np.asarray(self.omega_axis, dtype=np.float64))


def _axis_to_index(axis, values):
    """Map physical values to fractional bin indices on a uniform axis."""
    if axis.size == 1:
        return values - axis[0]
    step = axis[1] - axis[0]
    if axis.size > 2:
        steps = np.diff(axis)
        if not np.allclose(steps, step, rtol=1e-6):
            raise ValidationError("raster axes must be uniformly spaced")
    return (values - axis[0]) / step


def _min_squared_distance_to_polylines(px, py, seg_a, seg_b, chunk=4_000_000):
    """Min squared distance from pixels (px, py) to segments a->b, all in pixel space."""
    n_px = px.size
    d2 = np.full(n_px, np.inf)
    ax, ay = seg_a[:, 0], seg_a[:, 1]
    bx, by = seg_b[:, 0], seg_b[:, 1]
    dx, dy = bx - ax, by - ay
    seg_len2 = dx * dx + dy * dy
    n_seg = ax.size
    step = max(1, int(chunk // max(n_seg, 1)))
    for start in range(0, n_px, step):
        sl = slice(start, min(start + step, n_px))
        rx = px[sl, None] - ax[None, :]
        ry = py[sl, None] - ay[None, :]
        t = np.clip(
            np.divide(rx * dx + ry * dy, seg_len2, out=np.zeros_like(rx), where=seg_len2 > 0),
            0.0,
            1.0,
        )
        ex = rx - t * dx
        ey = ry - t * dy
        d2[sl] = np.minimum(d2[sl], (ex * ex + ey * ey).min(axis=1))
    return d2


def rasterize(curves: DispersionCurves, params: RasterParams) -> DispersionImage:
    """Gaussian-tube image of the branch polylines on the target axes.

    Pixel value = exp(-d_min^2 / (2 sigma^2)) with d_min the exact distance to
    the nearest branch polyline in pixel coordinates; a pixel on a curve gets
    exactly 1. Branch order and duplicated samples do not matter.
    """
    if curves.gamma_grid.size == 0 or curves.branches.size == 0:
        raise ValidationError("cannot rasterize empty curves")
    g_axis, w_axis = params.gamma_axis, params.omega_axis
    cx = _axis_to_index(g_axis, curves.gamma_grid)
    cy = _axis_to_index(w_axis, curves.branches)

    n_g, n_w = g_axis.size, w_axis.size
    margin = 3.0 * params.sigma
    inside_x = (cx >= -margin) & (cx <= n_g - 1 + margin)
    inside = inside_x[None, :] & (cy >= -margin) & (cy <= n_w - 1 + margin)
    if not inside.any():
        warnings.warn(
            "dispersion curves fall entirely outside the raster axes", EmptyRasterWarning
        )
        zero = np.zeros((n_g, n_w))
        return DispersionImage(values=zero, gamma_axis=g_axis, omega_axis=w_axis,
                               normalization="unit")

    if curves.gamma_grid.size == 1:
        seg_a = np.column_stack([np.broadcast_to(cx, cy[:, 0].shape), cy[:, 0]])
        seg_b = seg_a
    else:
        a_list, b_list = [], []
        for i in range(curves.branches.shape[0]):
            pts = np.column_stack([cx, cy[i]])
            a_list.append(pts[:-1])
            b_list.append(pts[1:])
        seg_a = np.vstack(a_list)
        seg_b = np.vstack(b_list)

    gi, wi = np.meshgrid(np.arange(n_g, dtype=float), np.arange(n_w, dtype=float), indexing="ij")
    d2 = _min_squared_distance_to_polylines(gi.ravel(), wi.ravel(), seg_a, seg_b)
    values = np.exp(-d2 / (2.0 * params.sigma**2)).reshape(n_g, n_w)
    return DispersionImage(values=values, gamma_axis=g_axis, omega_axis=w_axis,
                           normalization="unit")


def _check_pair(a: DispersionImage, b: DispersionImage, require_normalized):
    if a.values.shape != b.values.shape:
        raise ShapeError(f"image shapes differ: {a.values.shape} vs {b.values.shape}")
    if require_normalized:
        for img, name in ((a, "first"), (b, "second")):
            if img.normalization is None:
                raise ContractError(f"{name} image is not normalized to [0, 1]")


def ssim(a: DispersionImage, b: DispersionImage) -> float:
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), C1=(0.01R)^2,
    C2=(0.03R)^2, R=1. Inputs must be normalized to [0, 1]."""
    _check_pair(a, b, require_normalized=True)
    x = a.values
    y = b.values
    c1 = (_SSIM_K1 * 1.0) ** 2
    c2 = (_SSIM_K2 * 1.0) ** 2

    def win(arr):
        return gaussian_filter(arr, _SSIM_SIGMA, truncate=_SSIM_TRUNCATE, mode="reflect")

    mu_x = win(x)
    mu_y = win(y)
    var_x = win(x * x) - mu_x * mu_x
    var_y = win(y * y) - mu_y * mu_y
    cov = win(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def mse(a: DispersionImage, b: DispersionImage) -> float:
    """Mean squared error between the two images."""
    _check_pair(a, b, require_normalized=False)
    diff = a.values - b.values
    return float(np.mean(diff * diff))


def psnr(a: DispersionImage, b: DispersionImage) -> float:
    """Peak signal-to-noise ratio in dB with R = 1; +inf for identical images."""
    err = mse(a, b)
    if err == 0.0:
        return math.inf
    return float(10.0 * np.log10(1.0 / err))


def psnr_export_value(value):
    """Cap the +inf identical-image sentinel at 99 dB for exports."""
    return min(value, PSNR_EXPORT_CAP_DB)


def curve_objective(curves: DispersionCurves, observed: DispersionImage) -> float:
    """Integral of the observed magnitude along each hypothesized branch.

    Bilinear interpolation of the observed image at (gamma, omega_i(gamma)),
    zero outside its axes, trapezoidal rule over gamma, summed over branches.
    """
    g_axis, w_axis = observed.gamma_axis, observed.omega_axis
    gammas = curves.gamma_grid
    if gammas.size == 0:
        return 0.0
    total = 0.0
    for i in range(curves.branches.shape[0]):
        vals = _bilinear_sample(observed.values, g_axis, w_axis, gammas, curves.branches[i])
        if gammas.size == 1:
            continue  # zero-measure integral
        total += float(np.trapezoid(vals, gammas))
    return total


def _bilinear_sample(values, g_axis, w_axis, g_pts, w_pts):
    """Sample values at physical points, returning 0 outside the axes' hull."""
    gi = _axis_to_index(g_axis, g_pts)
    wi = _axis_to_index(w_axis, w_pts)
    out = np.zeros(g_pts.shape, dtype=np.float64)
    ok = (gi >= 0) & (gi <= g_axis.size - 1) & (wi >= 0) & (wi <= w_axis.size - 1)
    if not ok.any():
        return out
    gi = np.clip(gi, 0, g_axis.size - 1)
    wi = np.clip(wi, 0, w_axis.size - 1)
    g0 = np.clip(np.floor(gi).astype(int), 0, max(g_axis.size - 2, 0))
    w0 = np.clip(np.floor(wi).astype(int), 0, max(w_axis.size - 2, 0))
    g1 = np.minimum(g0 + 1, g_axis.size - 1)
    w1 = np.minimum(w0 + 1, w_axis.size - 1)
    fg = gi - g0
    fw = wi - w0
    interp = (
        values[g0, w0] * (1 - fg) * (1 - fw)
        + values[g1, w0] * fg * (1 - fw)
        + values[g0, w1] * (1 - fg) * fw
        + values[g1, w1] * fg * fw
    )
    out[ok] = interp[ok]
    return out


def evaluate(kind: ObjectiveKind, observed: DispersionImage, curves: DispersionCurves,
             raster: DispersionImage | None = None, raster_params: RasterParams | None = None) -> float:
    """Score one objective; rasterizes on demand if an image objective is asked
    for without a precomputed raster."""
    if kind is ObjectiveKind.CURVE:
        return curve_objective(curves, observed)
    if raster is None:
        if raster_params is None:
            raster_params = RasterParams(
                sigma=2.0, gamma_axis=observed.gamma_axis, omega_axis=observed.omega_axis
            )
        raster = rasterize(curves, raster_params)
    if kind is ObjectiveKind.SSIM:
        return ssim(raster, observed)
    if kind is ObjectiveKind.MSE_NEG:
        return -mse(raster, observed)
    if kind is ObjectiveKind.PSNR:
        return psnr(raster, observed)
    raise ValidationError(f"unknown objective kind {kind!r}")
