"""Sub-pixel displacement recovery from grayscale video via local phase.

Each frame is filtered with complex quadrature (Gabor-type) filters in two
orientations. Per-pixel phase differences against frame 0, unwrapped over
time, are converted to displacements through the frame-0 local phase
gradients: a motion d shifts the phase of orientation o by -grad(phi_o) . d,
so the two orientations give a 2x2 system per pixel whose solution is (u, v)
in pixels. For a separable texture the cross-gradients vanish and this
reduces to dividing each orientation's phase shift by its own local spatial
frequency. Valid for small motions (a fraction of the filter wavelength per
frame). Single scale: the filter wavelength is matched to the texture grain;
multi-scale pyramids are out of scope. Spurious global motion (flicker,
rigid-body drift) is not compensated; keep the camera and lighting steady.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .errors import AliasingWarning, InsufficientTextureError, ValidationError
from .fields import DisplacementField, VideoClip

ALIAS_STEP_THRESHOLD = 0.95 * np.pi


@dataclass(frozen=True)
class FilterParams:
    """Quadrature filter parameters.

    center_wavelength : filter carrier wavelength, pixels (>= 4 to be resolvable).
    bandwidth_octaves : full width at half maximum of the radial response.
    amplitude_floor   : fraction of the peak amplitude below which phase is
    considered noise and displacements are infilled from the neighborhood.
    """

    center_wavelength: float = 8.0
    bandwidth_octaves: float = 1.0
    amplitude_floor: float = 0.1

    def __post_init__(self):
        if self.center_wavelength < 4.0:
            raise ValidationError(
                f"center wavelength must be >= 4 px, got {self.center_wavelength}"
            )
        if not 0.0 < self.amplitude_floor < 1.0:
            raise ValidationError("amplitude floor must lie in (0, 1)")
        if self.bandwidth_octaves <= 0:
            raise ValidationError("bandwidth must be positive")

    @property
    def carrier(self):
        """Spatial carrier frequency, rad/px."""
        return 2.0 * np.pi / self.center_wavelength

    @property
    def envelope_sigma(self):
        """Gaussian envelope width (px) for the requested octave bandwidth."""
        b = self.bandwidth_octaves
        return (
            self.center_wavelength
            / np.pi
            * np.sqrt(np.log(2.0) / 2.0)
            * (2.0**b + 1.0)
            / (2.0**b - 1.0)
        )


def _quadrature_response(frames, params: FilterParams, axis):
    """Complex filter response along `axis`, Gaussian-smoothed across the other axis.

    One-sided Gaussian transfer function centered at +carrier: the response is
    analytic, so its phase tracks local position along `axis`.
    """
    n = frames.shape[axis]
    k = 2.0 * np.pi * np.fft.fftfreq(n)
    transfer = np.exp(-0.5 * (k - params.carrier) ** 2 * params.envelope_sigma**2)
    shape = [1, 1, 1]
    shape[axis] = n
    spec = np.fft.fft(frames, axis=axis) * transfer.reshape(shape)
    resp = np.fft.ifft(spec, axis=axis)
    cross_axis = 1 - axis
    sigma_cross = params.envelope_sigma
    resp = gaussian_filter1d(resp.real, sigma_cross, axis=cross_axis, mode="reflect") \
        + 1j * gaussian_filter1d(resp.imag, sigma_cross, axis=cross_axis, mode="reflect")
    return resp


def _smooth2(arr, sigma):
    return gaussian_filter1d(
        gaussian_filter1d(arr, sigma, axis=0, mode="reflect"), sigma, axis=1, mode="reflect"
    )


def _relative_phase(resp, params: FilterParams, significant):
    """Phase relative to frame 0, unwrapped over time via accumulated wrapped steps.

    Each inter-frame complex product is smoothed spatially before taking its
    angle: that is an amplitude-weighted phase average, which stabilizes
    weak-texture pixels. Aliasing is flagged from the raw steps of
    texture-significant pixels only.
    """
    H, W, F = resp.shape
    products = resp[:, :, 1:] * np.conj(resp[:, :, :-1])
    raw_steps = np.angle(products[significant]) if significant.any() else np.empty(0)
    if raw_steps.size and np.abs(raw_steps).max() >= ALIAS_STEP_THRESHOLD:
        warnings.warn(
            "frame-to-frame phase step at the wrap boundary: motion likely exceeds "
            "half the filter wavelength per frame and is aliased",
            AliasingWarning,
        )
    sigma = params.envelope_sigma
    steps = np.empty((H, W, F - 1))
    for k in range(F - 1):
        sm = _smooth2(products[:, :, k].real, sigma) + 1j * _smooth2(products[:, :, k].imag, sigma)
        steps[:, :, k] = np.angle(sm)
    return np.concatenate([np.zeros((H, W, 1)), np.cumsum(steps, axis=2)], axis=2)


def _phase_gradient(r0, axis):
    """Instantaneous spatial frequency of the frame-0 response along `axis`, rad/px.

    Central phase difference angle(r[i+1] conj(r[i-1])) / 2: exact for locally
    linear phase (a plain derivative of the complex signal would read
    sin(k) instead of k). Safe from wrapping while the step stays below pi,
    i.e. for wavelengths above 4 px, which FilterParams guarantees.
    """
    r = np.swapaxes(r0, 0, axis)
    grad = np.empty_like(r, dtype=np.float64)
    grad[1:-1] = np.angle(r[2:] * np.conj(r[:-2])) / 2.0
    grad[0] = np.angle(r[1] * np.conj(r[0]))
    grad[-1] = np.angle(r[-1] * np.conj(r[-2]))
    return np.swapaxes(grad, 0, axis)


def _weighted_infill(values, weights, sigma):
    num = gaussian_filter1d(gaussian_filter1d(values * weights, sigma, axis=0, mode="reflect"),
                            sigma, axis=1, mode="reflect")
    den = gaussian_filter1d(gaussian_filter1d(weights, sigma, axis=0, mode="reflect"),
                            sigma, axis=1, mode="reflect")
    return num / np.maximum(den, 1e-300)


def phase_displacements(video: VideoClip, params: FilterParams | None = None) -> DisplacementField:
    """Recover (u, v) displacement fields in meters from a textured video.

    Low-amplitude pixels (below amplitude_floor of the peak in either
    orientation) get their displacements infilled by amplitude-weighted
    Gaussian smoothing of the valid neighborhood.
    """
    if params is None:
        params = FilterParams()
    frames = video.frames
    H, W, F = frames.shape
    k0 = params.carrier

    r_h = _quadrature_response(frames, params, axis=1)
    r_v = _quadrature_response(frames, params, axis=0)
    amp_h = np.abs(r_h[:, :, 0])
    amp_v = np.abs(r_v[:, :, 0])
    peak = max(amp_h.max(), amp_v.max())
    if peak < 1e-12:
        raise InsufficientTextureError(
            "filter amplitude is zero everywhere: the video has no texture near the "
            f"filter wavelength ({params.center_wavelength} px)"
        )

    significant_h = amp_h >= params.amplitude_floor * amp_h.max()
    significant_v = amp_v >= params.amplitude_floor * amp_v.max()
    dphi_h = _relative_phase(r_h, params, significant_h)
    dphi_v = _relative_phase(r_v, params, significant_v)

    # frame-0 phase gradients; own-direction entries stay near the carrier,
    # cross entries are bounded relative to them so the determinant stays
    # safely positive everywhere
    jh_x = np.clip(_phase_gradient(r_h[:, :, 0], axis=1), 0.25 * k0, 4.0 * k0)
    jv_y = np.clip(_phase_gradient(r_v[:, :, 0], axis=0), 0.25 * k0, 4.0 * k0)
    jh_y = np.clip(_phase_gradient(r_h[:, :, 0], axis=0), -0.5 * jh_x, 0.5 * jh_x)
    jv_x = np.clip(_phase_gradient(r_v[:, :, 0], axis=1), -0.5 * jv_y, 0.5 * jv_y)
    det = jh_x * jv_y - jh_y * jv_x

    # motion d satisfies dphi_o = -grad(phi_o) . d per orientation
    u_px = -(jv_y[:, :, None] * dphi_h - jh_y[:, :, None] * dphi_v) / det[:, :, None]
    v_px = -(-jv_x[:, :, None] * dphi_h + jh_x[:, :, None] * dphi_v) / det[:, :, None]

    valid = (amp_h >= params.amplitude_floor * amp_h.max()) & (
        amp_v >= params.amplitude_floor * amp_v.max()
    )
    if not valid.all():
        weights = np.sqrt(amp_h * amp_v) * valid
        sigma = params.center_wavelength
        for f in range(F):
            for comp in (u_px, v_px):
                frame = comp[:, :, f]
                filled = _weighted_infill(frame, weights, sigma)
                frame[~valid] = filled[~valid]

    u = u_px / video.ppm
    v = v_px / video.ppm
    u -= u[:, :, :1]
    v -= v[:, :, :1]
    return DisplacementField(u=u, v=v, ppm=video.ppm, fps=video.fps)
