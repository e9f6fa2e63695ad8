"""Shared data containers for sampled motion: displacement fields and video clips.

A DisplacementField holds per-pixel horizontal (u) and vertical (v)
displacement time series in meters, relative to frame 0, together with the
spatial (pixels per meter) and temporal (frames per second) sampling rates.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class DisplacementField:
    """Displacement time series on a regular pixel grid.

    u, v : float64 arrays of shape (H, W, F), meters, relative to frame 0.
    ppm  : pixels per meter.
    fps  : frames per second.
    """

    u: np.ndarray
    v: np.ndarray
    ppm: float
    fps: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        if u.ndim != 3 or v.shape != u.shape:
            raise ValidationError(f"u and v must share an (H, W, F) shape, got {u.shape} and {v.shape}")
        if u.shape[2] < 2:
            raise ValidationError("displacement field needs at least 2 frames")
        if not (np.isfinite(u).all() and np.isfinite(v).all()):
            raise ValidationError("displacement field contains non-finite values")
        if self.ppm <= 0 or self.fps <= 0:
            raise ValidationError("ppm and fps must be positive")
        if np.any(u[:, :, 0]) or np.any(v[:, :, 0]):
            raise ValidationError("frame 0 must be identically zero (displacements are relative to it)")

    @property
    def shape(self):
        return self.u.shape

    def rebased(self):
        """Return a copy rebased so frame 0 is exactly zero."""
        return DisplacementField(
            u=self.u - self.u[:, :, :1],
            v=self.v - self.v[:, :, :1],
            ppm=self.ppm,
            fps=self.fps,
        )


def rebase_to_first_frame(u, v, ppm, fps):
    """Build a DisplacementField from raw series by subtracting the first frame."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    return DisplacementField(u=u - u[:, :, :1], v=v - v[:, :, :1], ppm=ppm, fps=fps)


@dataclass(frozen=True)
class VideoClip:
    """Grayscale video: intensities in [0, 1], shape (H, W, F)."""

    frames: np.ndarray
    fps: float
    ppm: float

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 3:
            raise ValidationError(f"frames must have shape (H, W, F), got {frames.shape}")
        if frames.shape[2] < 2:
            raise ValidationError("video needs at least 2 frames")
        if not np.isfinite(frames).all():
            raise ValidationError("video contains non-finite intensities")
        if self.ppm <= 0 or self.fps <= 0:
            raise ValidationError("ppm and fps must be positive")

    @property
    def shape(self):
        return self.frames.shape
