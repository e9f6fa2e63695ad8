"""Observed dispersion images from displacement fields via row-wise 2D FFTs.

Each pixel row of the horizontal and vertical displacement videos is
transformed over (space, time); magnitudes are averaged across rows and both
components. The two independent quadrants of the real-input spectrum
(+gamma, +omega) and (-gamma, +omega) are folded together by summing their
magnitudes, since boundary reflections put energy into both traveling
directions. All rows are assumed to image the same surface; any H >= 1 is
accepted. Axes are angular units: rad/m and rad/s.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    DegenerateInputError,
    InsufficientSamplesError,
    OutOfRangeError,
    ShapeError,
    ValidationError,
)
from .fields import DisplacementField

NORMALIZATION_PERCENTILE = 99.9


@dataclass(frozen=True)
class DispersionImage:
    """2D magnitude array over (wavenumber, frequency) bins.

    values[i, j] is the magnitude at gamma_axis[i] (rad/m), omega_axis[j]
    (rad/s). normalization is None for raw magnitudes or a tag naming the
    scaling applied. source_ppm/source_fps record the sampling rates of the
    field the image came from, when known (used for characteristic numbers).
    """

    values: np.ndarray
    gamma_axis: np.ndarray
    omega_axis: np.ndarray
    normalization: str | None = None
    source_ppm: float | None = None
    source_fps: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        g = np.asarray(self.gamma_axis, dtype=np.float64)
        w = np.asarray(self.omega_axis, dtype=np.float64)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "gamma_axis", g)
        object.__setattr__(self, "omega_axis", w)
        if v.ndim != 2 or v.shape != (g.size, w.size):
            raise ShapeError(f"values {v.shape} inconsistent with axes ({g.size}, {w.size})")
        if not np.isfinite(v).all():
            raise ValidationError("dispersion image contains non-finite values")
        if np.any(v < 0):
            raise ValidationError("dispersion image magnitudes must be nonnegative")
        for axis in (g, w):
            if axis.size > 1 and not np.all(np.diff(axis) > 0):
                raise ValidationError("axes must be strictly increasing")
            if axis.size and axis[0] < 0:
                raise ValidationError("axes must start at or above zero")

    @property
    def gamma_spacing(self):
        return float(self.gamma_axis[1] - self.gamma_axis[0]) if self.gamma_axis.size > 1 else 0.0

    @property
    def omega_spacing(self):
        return float(self.omega_axis[1] - self.omega_axis[0]) if self.omega_axis.size > 1 else 0.0


def observed_dispersion(field: DisplacementField) -> DispersionImage:
    """Average folded 2D FFT magnitude over all rows and both components.

    The per-pixel temporal mean is removed before transforming. The DC row
    and column are retained in the image (objective evaluation crops them).
    """
    H, W, F = field.shape
    if W < 4 or F < 4:
        raise InsufficientSamplesError(f"need W >= 4 and F >= 4, got W={W}, F={F}")

    n_gamma = W // 2 + 1
    n_omega = F // 2 + 1
    acc = np.zeros((n_gamma, n_omega))
    for comp in (field.u, field.v):
        detrended = comp - comp.mean(axis=2, keepdims=True)
        spectra = np.fft.fft2(detrended, axes=(1, 2))
        mag = np.abs(spectra[:, :, :n_omega])
        # fold: |S(+gamma, +omega)| + |S(-gamma, +omega)|; self-paired columns
        # (DC and, for even W, Nyquist) appear once
        folded = mag[:, :n_gamma, :].copy()
        for j in range(1, n_gamma):
            j_neg = (W - j) % W
            if j_neg != j:
                folded[:, j, :] += mag[:, j_neg, :]
        acc += folded.sum(axis=0)
    acc /= 2.0 * H

    gamma_axis = 2.0 * np.pi * field.ppm * np.arange(n_gamma) / W
    omega_axis = 2.0 * np.pi * field.fps * np.arange(n_omega) / F
    return DispersionImage(
        values=acc,
        gamma_axis=gamma_axis,
        omega_axis=omega_axis,
        source_ppm=field.ppm,
        source_fps=field.fps,
    )


def normalize(image: DispersionImage) -> DispersionImage:
    """Scale to [0, 1] by the 99.9th-percentile value, clipping above it."""
    scale = float(np.percentile(image.values, NORMALIZATION_PERCENTILE))
    if scale <= 0.0:
        raise DegenerateInputError("cannot normalize an all-zero dispersion image")
    values = np.clip(image.values / scale, 0.0, 1.0)
    return replace(image, values=values, normalization=f"p{NORMALIZATION_PERCENTILE}")


def regrid(image: DispersionImage, gamma_axis, omega_axis) -> DispersionImage:
    """Bilinear interpolation onto new axes, which must lie inside the source range."""
    gamma_axis = np.asarray(gamma_axis, dtype=np.float64)
    omega_axis = np.asarray(omega_axis, dtype=np.float64)
    for target, source, name in (
        (gamma_axis, image.gamma_axis, "gamma"),
        (omega_axis, image.omega_axis, "omega"),
    ):
        if target.size == 0:
            raise ValidationError(f"empty target {name} axis")
        if target.min() < source.min() - 1e-12 or target.max() > source.max() + 1e-12:
            raise OutOfRangeError(
                f"target {name} axis [{target.min()}, {target.max()}] extrapolates outside "
                f"source [{source.min()}, {source.max()}]"
            )

    gi = np.clip(np.interp(gamma_axis, image.gamma_axis, np.arange(image.gamma_axis.size)), 0, None)
    wi = np.clip(np.interp(omega_axis, image.omega_axis, np.arange(image.omega_axis.size)), 0, None)
    g0 = np.clip(np.floor(gi).astype(int), 0, image.gamma_axis.size - 2) if image.gamma_axis.size > 1 else np.zeros(gi.size, int)
    w0 = np.clip(np.floor(wi).astype(int), 0, image.omega_axis.size - 2) if image.omega_axis.size > 1 else np.zeros(wi.size, int)
    fg = (gi - g0)[:, None]
    fw = (wi - w0)[None, :]
    v = image.values
    if image.gamma_axis.size == 1:
        g1, fg = g0, np.zeros_like(fg)
    else:
        g1 = g0 + 1
    if image.omega_axis.size == 1:
        w1, fw = w0, np.zeros_like(fw)
    else:
        w1 = w0 + 1
    values = (
        v[np.ix_(g0, w0)] * (1 - fg) * (1 - fw)
        + v[np.ix_(g1, w0)] * fg * (1 - fw)
        + v[np.ix_(g0, w1)] * (1 - fg) * fw
        + v[np.ix_(g1, w1)] * fg * fw
    )
    return replace(image, values=values, gamma_axis=gamma_axis, omega_axis=omega_axis)


def crop_band(image: DispersionImage, gamma_max=None, omega_max=None, drop_dc=True) -> DispersionImage:
    """Restrict to gamma <= gamma_max, omega <= omega_max; optionally drop DC bins.

    This is how objective evaluation excludes the retained DC row/column.
    """
    g_mask = np.ones(image.gamma_axis.size, dtype=bool)
    w_mask = np.ones(image.omega_axis.size, dtype=bool)
    if gamma_max is not None:
        g_mask &= image.gamma_axis <= gamma_max * (1 + 1e-12)
    if omega_max is not None:
        w_mask &= image.omega_axis <= omega_max * (1 + 1e-12)
    if drop_dc:
        g_mask &= image.gamma_axis > 0
        w_mask &= image.omega_axis > 0
    if not g_mask.any() or not w_mask.any():
        raise ValidationError("crop leaves an empty dispersion image")
    return replace(
        image,
        values=image.values[np.ix_(g_mask, w_mask)],
        gamma_axis=image.gamma_axis[g_mask],
        omega_axis=image.omega_axis[w_mask],
    )


def energy_centroid(image: DispersionImage, drop_dc=True):
    """Magnitude-weighted (gamma, omega) centroid; the default reference point
    for characteristic numbers."""
    img = crop_band(image, drop_dc=drop_dc) if drop_dc else image
    total = img.values.sum()
    if total <= 0:
        raise DegenerateInputError("cannot take the centroid of an all-zero image")
    gamma_c = float((img.values.sum(axis=1) * img.gamma_axis).sum() / total)
    omega_c = float((img.values.sum(axis=0) * img.omega_axis).sum() / total)
    return gamma_c, omega_c


def window_length(image: DispersionImage):
    """Spatial window length implied by the gamma bin spacing: L = 2 pi / dgamma."""
    if image.gamma_axis.size < 2:
        raise ValidationError("need at least two gamma bins to infer the window length")
    return 2.0 * np.pi / image.gamma_spacing


def observation_time(image: DispersionImage):
    """Observation time implied by the omega bin spacing: tau = 2 pi / domega."""
    if image.omega_axis.size < 2:
        raise ValidationError("need at least two omega bins to infer the observation time")
    return 2.0 * np.pi / image.omega_spacing
