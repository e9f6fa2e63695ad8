"""Time-domain plane-strain simulation of a chirp-excited soft strip.

Ground truth for the pipeline: a long strip (length L_sim, thickness T) with
a fixed bottom, traction-free top and far side, and a vertical chirp applied
over an interval of the top surface near the left end. Newmark-beta
integration (beta = 1/4, gamma = 1/2, unconditionally stable) of

    M u'' + C u' + K u = f(t),      C = alpha M + beta K.

Reflections from the far edge are handled by sizing the strip at >= 4x the
observation window and by light stiffness-proportional Rayleigh damping
rather than absorbing boundaries. The chirp is a linear sweep with a
raised-cosine ramp over the first and last 5% of its duration, which avoids
broadband switch-on transients.
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.ndimage import gaussian_filter, map_coordinates

from .errors import (
    ConfigurationError,
    InstabilityError,
    ResamplingError,
    SizeError,
    ValidationError,
)
from .fem import LayerGeometry, Material, assemble, build_mesh
from .fields import DisplacementField, VideoClip

CHIRP_TAPER_FRACTION = 0.05
FINITE_CHECK_INTERVAL = 50


@dataclass(frozen=True)
class Excitation:
    """Linear chirp applied vertically over [span_start, span_end] on the top surface.

    amplitude is a prescribed displacement (m) when mode="displacement" or a
    line load (N/m) when mode="force".
    """

    f_start: float
    f_end: float
    duration: float
    amplitude: float
    span_start: float
    span_end: float
    mode: str = "displacement"

    def __post_init__(self):
        if not 0 < self.f_start < self.f_end:
            raise ConfigurationError(
                f"need 0 < f_start < f_end, got {self.f_start}, {self.f_end}"
            )
        if not self.duration > 0:
            raise ConfigurationError("chirp duration must be positive")
        if self.span_end <= self.span_start:
            raise ConfigurationError("excitation span must have positive length")
        if self.mode not in ("displacement", "force"):
            raise ConfigurationError(f"unknown excitation mode {self.mode!r}")


@dataclass(frozen=True)
class SimConfig:
    """Strip length, time step, total time, Rayleigh damping, and sim mesh size."""

    strip_length: float
    dt: float
    total_time: float
    rayleigh_alpha: float = 0.0
    rayleigh_beta: float = 2e-5
    element_size: float = 5e-4

    def __post_init__(self):
        if self.strip_length <= 0 or self.dt <= 0 or self.total_time <= 0:
            raise ConfigurationError("strip length, dt, and total time must be positive")
        if self.element_size <= 0:
            raise ConfigurationError("element size must be positive")

    def validate_against(self, excitation: Excitation):
        limit = 1.0 / (10.0 * excitation.f_end)
        if self.dt > limit * (1 + 1e-9):
            raise ConfigurationError(
                f"dt = {self.dt} exceeds 1/(10 f_end) = {limit}: fewer than 10 steps "
                "per shortest excited period"
            )
        if self.total_time < excitation.duration:
            raise ConfigurationError("total time must cover the excitation duration")
        if excitation.span_end > self.strip_length:
            raise ConfigurationError("excitation span lies outside the strip")


def chirp_signal(times, excitation: Excitation):
    """Ramped linear sweep f_start -> f_end over the excitation duration; zero after."""
    t = np.asarray(times, dtype=np.float64)
    dur = excitation.duration
    rate = (excitation.f_end - excitation.f_start) / dur
    phase = 2.0 * np.pi * (excitation.f_start * t + 0.5 * rate * t * t)
    s = np.sin(phase)
    ramp = np.ones_like(t)
    t_taper = CHIRP_TAPER_FRACTION * dur
    head = t < t_taper
    ramp[head] = 0.5 * (1.0 - np.cos(np.pi * t[head] / t_taper))
    tail = t > dur - t_taper
    ramp[tail] = 0.5 * (1.0 - np.cos(np.pi * np.clip(dur - t[tail], 0.0, t_taper) / t_taper))
    ramp[t > dur] = 0.0
    return excitation.amplitude * s * ramp


@dataclass(frozen=True)
class SimHistory:
    """Recorded displacement history.

    surface_x : x-coordinates of the top-edge nodes.
    surface_u, surface_v : (n_surface_nodes, n_steps + 1) series, meters.
    full_u, full_v : (n_dof, n_steps + 1) when recorded with record="all",
    else None (the full state of the fixture-scale strip would be GBs).
    """

    surface_x: np.ndarray
    surface_u: np.ndarray
    surface_v: np.ndarray
    dt: float
    thickness: float
    strip_length: float
    full_u: np.ndarray | None = None
    full_v: np.ndarray | None = None

    @property
    def n_steps(self):
        return self.surface_u.shape[1] - 1

    @property
    def times(self):
        return np.arange(self.surface_u.shape[1]) * self.dt


def _banded_from_csr(A, bandwidth):
    """Upper banded storage (for scipy.linalg.cholesky_banded) of symmetric csr A."""
    n = A.shape[0]
    ab = np.zeros((bandwidth + 1, n))
    Ac = A.tocoo()
    mask = Ac.row <= Ac.col
    rows, cols, vals = Ac.row[mask], Ac.col[mask], Ac.data[mask]
    ab[bandwidth + rows - cols, cols] = vals
    return ab


def _matrix_bandwidth(A):
    Ac = A.tocoo()
    return int(np.max(np.abs(Ac.row - Ac.col))) if Ac.nnz else 0


def simulate(thickness, material: Material, excitation: Excitation, config: SimConfig,
             record="surface") -> SimHistory:
    """Run the strip simulation and return the recorded history.

    record: "surface" records the top-edge node series; "all" additionally
    records full displacement and velocity states (small meshes only).
    """
    config.validate_against(excitation)
    geometry = LayerGeometry(
        thickness=thickness, cell_length=config.strip_length, element_size=config.element_size
    )
    mesh = build_mesh(geometry)
    K, M = assemble(mesh, material)
    C = config.rayleigh_alpha * M + config.rayleigh_beta * K

    ny = mesh.ny
    top_nodes = np.array([ix * (ny + 1) + ny for ix in range(mesh.nx + 1)], dtype=np.int64)
    top_x = mesh.coords[top_nodes, 0]

    fixed_dofs = np.concatenate([2 * mesh.bottom_nodes, 2 * mesh.bottom_nodes + 1])

    in_span = (top_x >= excitation.span_start - 1e-12) & (top_x <= excitation.span_end + 1e-12)
    if not in_span.any():
        center = 0.5 * (excitation.span_start + excitation.span_end)
        in_span = np.zeros_like(in_span)
        in_span[np.argmin(np.abs(top_x - center))] = True
    driven_nodes = top_nodes[in_span]
    driven_dofs = 2 * driven_nodes + 1  # vertical

    n_steps = int(round(config.total_time / config.dt))
    times = np.arange(n_steps + 1) * config.dt
    signal = chirp_signal(times, excitation)

    prescribed = excitation.mode == "displacement"
    if prescribed:
        blocked = np.concatenate([fixed_dofs, driven_dofs])
    else:
        blocked = fixed_dofs
    free = np.setdiff1d(np.arange(mesh.n_dof), blocked)

    K_ff = K[free][:, free].tocsr()
    M_ff = M[free][:, free].tocsr()
    C_ff = C[free][:, free].tocsr()

    dt = config.dt
    a0 = 4.0 / dt**2
    a1 = 2.0 / dt
    a2 = 4.0 / dt
    a3 = 1.0
    a4 = 1.0
    a6 = dt / 2.0
    a7 = dt / 2.0

    K_eff = (K_ff + a0 * M_ff + a1 * C_ff).tocsr()
    bw = _matrix_bandwidth(K_eff)
    cho = scipy.linalg.cholesky_banded(_banded_from_csr(K_eff, bw), lower=False)

    if prescribed:
        K_fp = K[free][:, driven_dofs].tocsr()
        M_fp = M[free][:, driven_dofs].tocsr()
        C_fp = C[free][:, driven_dofs].tocsr()
        up = signal
        vp = np.gradient(up, dt)
        ap = np.gradient(vp, dt)
        ones_p = np.ones(driven_dofs.size)
    else:
        # trapezoidal tributary lengths over the driven top nodes
        xs = top_x[in_span]
        w = np.zeros(xs.size)
        if xs.size == 1:
            w[0] = excitation.span_end - excitation.span_start
        else:
            w[1:-1] = (xs[2:] - xs[:-2]) / 2.0
            w[0] = (xs[1] - xs[0]) / 2.0
            w[-1] = (xs[-1] - xs[-2]) / 2.0
        load = np.zeros(mesh.n_dof)
        load[driven_dofs] = w
        load_f = load[free]

    n_free = free.size
    u = np.zeros(n_free)
    v = np.zeros(n_free)
    acc = np.zeros(n_free)

    n_rec = top_nodes.size
    surf_u = np.zeros((n_rec, n_steps + 1))
    surf_v = np.zeros((n_rec, n_steps + 1))
    full_u = full_v = None
    if record == "all":
        full_u = np.zeros((mesh.n_dof, n_steps + 1))
        full_v = np.zeros((mesh.n_dof, n_steps + 1))
    elif record != "surface":
        raise ValidationError(f"unknown record mode {record!r}")

    u_global = np.zeros(mesh.n_dof)
    v_global = np.zeros(mesh.n_dof)

    def scatter(step):
        u_global[free] = u
        v_global[free] = v
        if prescribed:
            u_global[driven_dofs] = signal[step]
            v_global[driven_dofs] = vp[step] if prescribed else 0.0
        surf_u[:, step] = u_global[2 * top_nodes]
        surf_v[:, step] = u_global[2 * top_nodes + 1]
        if record == "all":
            full_u[:, step] = u_global
            full_v[:, step] = v_global

    scatter(0)
    for step in range(1, n_steps + 1):
        rhs = M_ff @ (a0 * u + a2 * v + a3 * acc) + C_ff @ (a1 * u + a4 * v)
        if prescribed:
            rhs -= K_fp @ (ones_p * up[step])
            rhs -= C_fp @ (ones_p * vp[step])
            rhs -= M_fp @ (ones_p * ap[step])
        else:
            rhs += load_f * signal[step]
        u_new = scipy.linalg.cho_solve_banded((cho, False), rhs)
        acc_new = a0 * (u_new - u) - a2 * v - a3 * acc
        v = v + a6 * acc + a7 * acc_new
        u, acc = u_new, acc_new
        scatter(step)
        if step % FINITE_CHECK_INTERVAL == 0 or step == n_steps:
            if not np.isfinite(u).all():
                raise InstabilityError(f"non-finite state at step {step}", step=step)

    return SimHistory(
        surface_x=top_x,
        surface_u=surf_u,
        surface_v=surf_v,
        dt=dt,
        thickness=thickness,
        strip_length=config.strip_length,
        full_u=full_u,
        full_v=full_v,
    )


def sample_surface(history: SimHistory, ppm, fps, window, rows=1) -> DisplacementField:
    """Interpolate the surface-line history onto a regular pixel grid.

    window = (x_start, x_end) in meters inside the strip. Pixel columns sit at
    x_start + (j + 1/2)/ppm; frames at k/fps (linearly interpolated between
    time steps when 1/(fps dt) is not an integer). The surface line is
    replicated over `rows` image rows. Output is rebased to frame 0.
    """
    x0, x1 = window
    if x1 <= x0:
        raise ResamplingError("empty observation window")
    if x0 < -1e-12 or x1 > history.strip_length + 1e-12:
        raise ResamplingError("observation window outside the strip")
    if fps > 1.0 / history.dt * (1 + 1e-9):
        raise ResamplingError(
            f"fps = {fps} exceeds the simulation rate 1/dt = {1.0 / history.dt}"
        )
    if (x1 - x0) > history.strip_length / 4.0 * (1 + 1e-9):
        warnings.warn(
            "observation window longer than strip_length/4; far-edge reflections may "
            "contaminate the field",
            UserWarning,
        )

    W = max(4, int(round((x1 - x0) * ppm)))
    px_x = x0 + (np.arange(W) + 0.5) / ppm
    total_time = history.n_steps * history.dt
    F = int(np.floor(total_time * fps + 1e-9)) + 1
    t_frames = np.arange(F) / fps

    steps = t_frames / history.dt
    s0 = np.clip(np.floor(steps).astype(int), 0, history.n_steps - 1)
    frac = steps - s0

    u_rows = np.empty((W, F))
    v_rows = np.empty((W, F))
    for k in range(F):
        ut = history.surface_u[:, s0[k]] * (1 - frac[k]) + history.surface_u[:, s0[k] + 1] * frac[k]
        vt = history.surface_v[:, s0[k]] * (1 - frac[k]) + history.surface_v[:, s0[k] + 1] * frac[k]
        u_rows[:, k] = np.interp(px_x, history.surface_x, ut)
        v_rows[:, k] = np.interp(px_x, history.surface_x, vt)

    u = np.broadcast_to(u_rows[None, :, :], (rows, W, F)).copy()
    v = np.broadcast_to(v_rows[None, :, :], (rows, W, F)).copy()
    u -= u[:, :, :1]
    v -= v[:, :, :1]
    return DisplacementField(u=u, v=v, ppm=ppm, fps=fps)


def make_texture(height, width, grain_px=8.0, seed=0):
    """Smoothed-noise grayscale texture in [0.05, 0.95] with grain near grain_px."""
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width))
    tex = gaussian_filter(noise, grain_px / 4.0, mode="wrap")
    tex -= tex.min()
    peak = tex.max()
    if peak > 0:
        tex /= peak
    return 0.05 + 0.9 * tex


def render_video(field: DisplacementField, texture) -> VideoClip:
    """Warp the texture by each frame's displacement (bilinear inverse warping).

    The texture feature at pixel p in frame 0 appears at p + d(p, t) in frame
    t, realized as frame_t(p) = texture(p - d(p, t)).
    """
    texture = np.asarray(texture, dtype=np.float64)
    H, W, F = field.shape
    if texture.shape[0] < H or texture.shape[1] < W:
        raise SizeError(
            f"texture {texture.shape} smaller than field frame ({H}, {W})"
        )
    tex = texture[:H, :W]
    yy, xx = np.meshgrid(np.arange(H, dtype=float), np.arange(W, dtype=float), indexing="ij")
    frames = np.empty((H, W, F))
    u_px = field.u * field.ppm
    v_px = field.v * field.ppm
    for k in range(F):
        coords = np.array([yy - v_px[:, :, k], xx - u_px[:, :, k]])
        frames[:, :, k] = map_coordinates(tex, coords, order=1, mode="reflect")
    return VideoClip(frames=frames, fps=field.fps, ppm=field.ppm)


def discrete_energy(K, M, full_u, full_v):
    """Total discrete energy 0.5 v'Mv + 0.5 u'Ku per recorded step."""
    n = full_u.shape[1]
    out = np.empty(n)
    for k in range(n):
        u = full_u[:, k]
        v = full_v[:, k]
        out[k] = 0.5 * (v @ (M @ v)) + 0.5 * (u @ (K @ u))
    return out
