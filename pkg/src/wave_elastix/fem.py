"""Plane-strain FEM dispersion relations for a soft layer on a motionless base.

The layer occupies [0, a] x [0, T] with the bottom edge fixed (the stiff
foundation does not move) and the top edge traction-free. Phase-shifted
periodic boundary conditions u(x=a) = u(x=0) * exp(i*gamma*a) turn the strip
into a unit-cell eigenproblem per wavenumber gamma in [0, pi/a]; the sorted
eigenfrequency branches omega_i(gamma) form the dispersion relation.

Elements are 4-node bilinear quadrilaterals with 2x2 Gauss quadrature and a
consistent mass matrix. Because the layer stiffness is uniform, K is linear
in the elastic modulus, so curves computed at a reference modulus rescale to
any other modulus by sqrt(E_new / E_old) (see scale_stiffness).
"""

import io
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConstitutiveSingularityError,
    EigensolverError,
    InvalidGeometryError,
    InvalidMaterialError,
    OutOfRangeError,
    ValidationError,
)
from .parallel import thread_map

# Above this reduced dimension solve_branches switches from a dense Hermitian
# solve to shift-invert Lanczos; both paths agree to 1e-8 relative.
DENSE_EIGEN_LIMIT = 700

# Negative eigenvalues within this fraction of max(lambda) are numerical noise.
EIGEN_CLAMP_REL = 1e-9


@dataclass(frozen=True)
class Material:
    """Isotropic linear-elastic material of the soft layer.

    elastic_modulus : Young's modulus E, Pa.
    poisson_ratio   : nu, dimensionless, strictly inside (0, 0.5).
    density         : rho, kg/m^3.
    """

    elastic_modulus: float
    poisson_ratio: float = 0.45
    density: float = 1000.0

    def __post_init__(self):
        if not self.elastic_modulus > 0:
            raise InvalidMaterialError(f"elastic modulus must be positive, got {self.elastic_modulus}")
        if not 0.0 < self.poisson_ratio < 0.5:
            raise InvalidMaterialError(
                f"poisson ratio must lie strictly in (0, 0.5), got {self.poisson_ratio}"
            )
        if not self.density > 0:
            raise InvalidMaterialError(f"density must be positive, got {self.density}")

    @property
    def shear_wave_speed(self):
        """c_s = sqrt(E / (2 (1 + nu) rho))."""
        return np.sqrt(self.elastic_modulus / (2.0 * (1.0 + self.poisson_ratio) * self.density))

    @property
    def pressure_wave_speed(self):
        """Plane-strain P speed: sqrt(E (1 - nu) / ((1 + nu)(1 - 2 nu) rho))."""
        E, nu, rho = self.elastic_modulus, self.poisson_ratio, self.density
        return np.sqrt(E * (1.0 - nu) / ((1.0 + nu) * (1.0 - 2.0 * nu) * rho))

    @property
    def rayleigh_wave_speed(self):
        """Viktorov approximation c_R = c_s (0.87 + 1.12 nu) / (1 + nu)."""
        nu = self.poisson_ratio
        return self.shear_wave_speed * (0.87 + 1.12 * nu) / (1.0 + nu)


@dataclass(frozen=True)
class LayerGeometry:
    """Unit cell of the layer: thickness T, Bloch cell length a, element size e."""

    thickness: float
    cell_length: float
    element_size: float

    def __post_init__(self):
        if not self.thickness > 0:
            raise InvalidGeometryError(f"thickness must be positive, got {self.thickness}")
        if not self.cell_length > 0:
            raise InvalidGeometryError(f"cell length must be positive, got {self.cell_length}")
        e = self.element_size
        if not 0 < e <= min(self.thickness, self.cell_length):
            raise InvalidGeometryError(
                f"element size {e} must satisfy 0 < e <= min(T={self.thickness}, a={self.cell_length})"
            )
        if self.n_elements_y < 2:
            raise InvalidGeometryError(
                f"mesh needs at least 2 element rows through the thickness, got {self.n_elements_y}"
            )

    @property
    def n_elements_x(self):
        return max(1, round(self.cell_length / self.element_size))

    @property
    def n_elements_y(self):
        return round(self.thickness / self.element_size)


@dataclass(frozen=True)
class Mesh:
    """Structured bilinear-quad mesh of the unit cell.

    coords   : (n_nodes, 2) node positions, meters.
    elements : (n_ele, 4) counter-clockwise connectivity.
    Node ids run column-major: node(ix, iy) = ix * (ny + 1) + iy, so the
    left/right edge index sets are aligned by construction (equal length,
    matching y), which the Bloch pairing relies on.
    """

    coords: np.ndarray
    elements: np.ndarray
    nx: int
    ny: int
    bottom_nodes: np.ndarray
    left_nodes: np.ndarray
    right_nodes: np.ndarray

    @property
    def n_nodes(self):
        return self.coords.shape[0]

    @property
    def n_dof(self):
        return 2 * self.n_nodes

    @property
    def cell_length(self):
        return float(self.coords[:, 0].max())

    @property
    def thickness(self):
        return float(self.coords[:, 1].max())


def build_mesh(geometry: LayerGeometry) -> Mesh:
    """Structured mesh of [0, a] x [0, T] with nx * ny bilinear quads."""
    nx, ny = geometry.n_elements_x, geometry.n_elements_y
    xs = np.linspace(0.0, geometry.cell_length, nx + 1)
    ys = np.linspace(0.0, geometry.thickness, ny + 1)

    def node(ix, iy):
        return ix * (ny + 1) + iy

    coords = np.empty(((nx + 1) * (ny + 1), 2))
    for ix in range(nx + 1):
        base = ix * (ny + 1)
        coords[base : base + ny + 1, 0] = xs[ix]
        coords[base : base + ny + 1, 1] = ys

    elements = np.empty((nx * ny, 4), dtype=np.int64)
    k = 0
    for ix in range(nx):
        for iy in range(ny):
            elements[k] = (node(ix, iy), node(ix + 1, iy), node(ix + 1, iy + 1), node(ix, iy + 1))
            k += 1

    bottom = np.array([node(ix, 0) for ix in range(nx + 1)], dtype=np.int64)
    left = np.array([node(0, iy) for iy in range(ny + 1)], dtype=np.int64)
    right = np.array([node(nx, iy) for iy in range(ny + 1)], dtype=np.int64)
    return Mesh(coords=coords, elements=elements, nx=nx, ny=ny,
                bottom_nodes=bottom, left_nodes=left, right_nodes=right)


def constitutive_matrix(elastic_modulus, poisson_ratio):
    """Plane-strain isotropic constitutive matrix (3x3, Voigt order xx, yy, xy)."""
    if poisson_ratio >= 0.5:
        raise ConstitutiveSingularityError(
            f"plane-strain constitutive matrix is singular at nu = {poisson_ratio}"
        )
    E, nu = elastic_modulus, poisson_ratio
    c = E / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return c * np.array([
        [1.0 - nu, nu, 0.0],
        [nu, 1.0 - nu, 0.0],
        [0.0, 0.0, (1.0 - 2.0 * nu) / 2.0],
    ])


def element_matrices(hx, hy, material: Material):
    """Stiffness and consistent mass (8x8) of one hx * hy rectangular element.

    2x2 Gauss quadrature; DOF order (u1, v1, ..., u4, v4) with nodes
    counter-clockwise from the lower-left corner.
    """
    D = constitutive_matrix(material.elastic_modulus, material.poisson_ratio)
    g = 1.0 / np.sqrt(3.0)
    gauss = [(-g, -g), (g, -g), (g, g), (-g, g)]
    corners = np.array([(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)])
    detJ = hx * hy / 4.0

    Ke = np.zeros((8, 8))
    Me = np.zeros((8, 8))
    for xi, eta in gauss:
        N = 0.25 * (1.0 + xi * corners[:, 0]) * (1.0 + eta * corners[:, 1])
        dN_dxi = 0.25 * corners[:, 0] * (1.0 + eta * corners[:, 1])
        dN_deta = 0.25 * corners[:, 1] * (1.0 + xi * corners[:, 0])
        dN_dx = dN_dxi * (2.0 / hx)
        dN_dy = dN_deta * (2.0 / hy)

        B = np.zeros((3, 8))
        B[0, 0::2] = dN_dx
        B[1, 1::2] = dN_dy
        B[2, 0::2] = dN_dy
        B[2, 1::2] = dN_dx

        Nm = np.zeros((2, 8))
        Nm[0, 0::2] = N
        Nm[1, 1::2] = N

        Ke += B.T @ D @ B * detJ
        Me += material.density * (Nm.T @ Nm) * detJ

    Ke = 0.5 * (Ke + Ke.T)
    Me = 0.5 * (Me + Me.T)
    return Ke, Me


def assemble(mesh: Mesh, material: Material):
    """Assemble global sparse K (PSD) and consistent M (PD), both real symmetric.

    The structured mesh has identical elements, so the element pair is built
    once and scattered.
    """
    hx = mesh.cell_length / mesh.nx
    hy = mesh.thickness / mesh.ny
    Ke, Me = element_matrices(hx, hy, material)

    n_ele = mesh.elements.shape[0]
    edofs = np.empty((n_ele, 8), dtype=np.int64)
    edofs[:, 0::2] = 2 * mesh.elements
    edofs[:, 1::2] = 2 * mesh.elements + 1

    rows = np.repeat(edofs, 8, axis=1).ravel()
    cols = np.tile(edofs, (1, 8)).ravel()
    K = sp.coo_matrix((np.tile(Ke.ravel(), n_ele), (rows, cols)), shape=(mesh.n_dof, mesh.n_dof)).tocsr()
    M = sp.coo_matrix((np.tile(Me.ravel(), n_ele), (rows, cols)), shape=(mesh.n_dof, mesh.n_dof)).tocsr()
    K = (K + K.T) * 0.5
    M = (M + M.T) * 0.5
    return K, M


def _partition_dofs(mesh: Mesh):
    """Master / slave(right-edge) / fixed(bottom) DOF index sets for Bloch reduction."""
    fixed_nodes = set(mesh.bottom_nodes.tolist())
    slave_nodes = [n for n in mesh.right_nodes.tolist() if n not in fixed_nodes]
    left_partner = {}
    for left, right in zip(mesh.left_nodes.tolist(), mesh.right_nodes.tolist()):
        left_partner[right] = left
    slave_set = set(slave_nodes)
    master_nodes = [
        n for n in range(mesh.n_nodes) if n not in fixed_nodes and n not in slave_set
    ]
    return master_nodes, slave_nodes, left_partner


def bloch_transform(mesh: Mesh, gamma):
    """Sparse complex P with u_full = P @ u_master for Bloch number gamma.

    Right-edge DOFs are folded onto their left-edge partners with multiplier
    exp(i * gamma * a); bottom-edge DOFs are dropped (motionless base).
    """
    a = mesh.cell_length
    if not -1e-12 <= gamma <= np.pi / a * (1.0 + 1e-12):
        raise OutOfRangeError(f"gamma = {gamma} outside [0, pi/a] = [0, {np.pi / a}]")
    master_nodes, slave_nodes, left_partner = _partition_dofs(mesh)

    master_col = {}
    for col, n in enumerate(master_nodes):
        master_col[n] = col

    # snap to exactly +-1 at the zone center/boundary so those pencils are real
    ga = gamma * a
    if abs(ga) < 1e-12:
        phase = 1.0 + 0.0j
    elif abs(ga - np.pi) < 1e-12:
        phase = -1.0 + 0.0j
    else:
        phase = np.exp(1j * ga)
    rows, cols, vals = [], [], []
    for col, n in enumerate(master_nodes):
        for c in (0, 1):
            rows.append(2 * n + c)
            cols.append(2 * col + c)
            vals.append(1.0 + 0.0j)
    for n in slave_nodes:
        partner = left_partner[n]
        col = master_col[partner]
        for c in (0, 1):
            rows.append(2 * n + c)
            cols.append(2 * col + c)
            vals.append(phase)
    P = sp.coo_matrix(
        (np.array(vals), (np.array(rows), np.array(cols))),
        shape=(mesh.n_dof, 2 * len(master_nodes)),
        dtype=np.complex128,
    )
    return P.tocsr()


def apply_bloch(K, M, mesh: Mesh, gamma):
    """Reduce (K, M) to the Hermitian Bloch pencil (K_g, M_g) at wavenumber gamma."""
    P = bloch_transform(mesh, gamma)
    Ph = P.conj().T
    Kg = (Ph @ K @ P).tocsr()
    Mg = (Ph @ M @ P).tocsr()
    # exact Hermitian symmetrization kills matmul round-off asymmetry
    Kg = (Kg + Kg.conj().T) * 0.5
    Mg = (Mg + Mg.conj().T) * 0.5
    return Kg, Mg


def solve_branches(Kg, Mg, n_branches, method="auto"):
    """Smallest n_branches eigenfrequencies of K_g u = lambda M_g u, ascending rad/s.

    method: "dense" (LAPACK, reference), "iterative" (shift-invert Lanczos), or
    "auto" (dense below DENSE_EIGEN_LIMIT). Eigenvalues in [-eps, 0) are
    clamped to zero; anything more negative is an error.
    """
    n = Kg.shape[0]
    if n_branches > n:
        raise ValidationError(f"requested {n_branches} branches from a {n}-dim pencil")
    if method not in ("auto", "dense", "iterative"):
        raise ValidationError(f"unknown eigen method {method!r}")
    use_dense = method == "dense" or (method == "auto" and n <= DENSE_EIGEN_LIMIT)
    if not use_dense and n_branches >= n - 1:
        use_dense = True  # ARPACK needs k < n - 1

    if use_dense:
        # full "gv" solve then slice: faster than the subset driver at these sizes
        lam = scipy.linalg.eigh(Kg.toarray(), Mg.toarray(), eigvals_only=True, driver="gv")
        lam = lam[:n_branches]
    else:
        try:
            lam = spla.eigsh(
                Kg.tocsc(), k=n_branches, M=Mg.tocsc(), sigma=0.0, which="LM",
                return_eigenvectors=False,
            )
        except spla.ArpackNoConvergence as exc:
            raise EigensolverError(f"shift-invert Lanczos did not converge: {exc}") from exc
        lam = np.sort(lam.real)

    lam = np.asarray(lam, dtype=np.float64)
    clamp = EIGEN_CLAMP_REL * max(lam.max(), 0.0) if lam.size else 0.0
    if np.any(lam < -clamp - 1e-30):
        raise EigensolverError(f"eigenvalue {lam.min()} below the noise floor -{clamp}")
    return np.sqrt(np.clip(lam, 0.0, None))


def gamma_grid(cell_length, count, include_zero=False):
    """Uniform wavenumber grid on (0, pi/a] (or [0, pi/a] with include_zero).

    The endpoint pi/a is always included; gamma = 0 is excluded by default
    because the observed image's DC column carries no propagating-wave
    information.
    """
    if count < 1:
        raise ValidationError("gamma grid needs at least one point")
    top = np.pi / cell_length
    if include_zero:
        return np.linspace(0.0, top, count)
    return np.linspace(top / count, top, count)


@dataclass(frozen=True)
class DispersionCurves:
    """N sorted eigenfrequency branches over a wavenumber grid.

    branches[i, j] is the i-th smallest angular frequency (rad/s) at
    gamma_grid[j] (rad/m). thickness/stiffness record the (T, E) provenance;
    cell_length is kept for axis bookkeeping.
    """

    gamma_grid: np.ndarray
    branches: np.ndarray
    thickness: float
    stiffness: float
    cell_length: float

    def __post_init__(self):
        g = np.asarray(self.gamma_grid, dtype=np.float64)
        b = np.asarray(self.branches, dtype=np.float64)
        object.__setattr__(self, "gamma_grid", g)
        object.__setattr__(self, "branches", b)
        if g.ndim != 1 or b.ndim != 2 or b.shape[1] != g.size:
            raise ValidationError(f"branches {b.shape} do not match gamma grid of length {g.size}")
        if g.size > 1 and not np.all(np.diff(g) > 0):
            raise ValidationError("gamma grid must be strictly increasing")
        if g.size and (g[0] < -1e-12 or g[-1] > np.pi / self.cell_length * (1 + 1e-9)):
            raise OutOfRangeError("gamma grid must lie within [0, pi/a]")
        if np.any(b < 0):
            raise ValidationError("branch frequencies must be nonnegative")
        if np.any(np.diff(b, axis=0) < -1e-9 * max(b.max(), 1.0)):
            raise ValidationError("branches must be sorted ascending per wavenumber column")

    @property
    def n_branches(self):
        return self.branches.shape[0]


def dispersion_curves(geometry: LayerGeometry, material: Material, gammas=None,
                      n_branches=12, method="auto", workers=None) -> DispersionCurves:
    """Assemble once, then solve the Bloch pencil per wavenumber.

    gammas defaults to the 60-point grid on (0, pi/a]. Per-gamma solves run on
    the shared read-only (K, M) and may execute concurrently.
    """
    if gammas is None:
        gammas = gamma_grid(geometry.cell_length, 60)
    gammas = np.asarray(gammas, dtype=np.float64)
    mesh = build_mesh(geometry)
    K, M = assemble(mesh, material)

    def solve_one(g):
        try:
            Kg, Mg = apply_bloch(K, M, mesh, g)
            return solve_branches(Kg, Mg, n_branches, method=method)
        except EigensolverError as exc:
            raise EigensolverError(f"at gamma = {g:.6g} rad/m: {exc}") from exc

    columns = thread_map(solve_one, gammas, workers=workers)
    branches = np.column_stack(columns) if len(columns) else np.zeros((n_branches, 0))
    return DispersionCurves(
        gamma_grid=gammas,
        branches=branches,
        thickness=geometry.thickness,
        stiffness=material.elastic_modulus,
        cell_length=geometry.cell_length,
    )


def scale_stiffness(curves: DispersionCurves, new_stiffness) -> DispersionCurves:
    """Rescale curves to a new uniform modulus: omega *= sqrt(E_new / E_old).

    Exact for the uniform-stiffness layer because K is linear in E while M is
    independent of it.
    """
    if new_stiffness <= 0:
        raise InvalidMaterialError(f"stiffness must be positive, got {new_stiffness}")
    factor = np.sqrt(new_stiffness / curves.stiffness)
    return replace(curves, branches=curves.branches * factor, stiffness=float(new_stiffness))


def curves_to_csv(curves: DispersionCurves) -> str:
    """CSV text: header gamma_rad_per_m,omega_1,...,omega_N; one row per gamma."""
    buf = io.StringIO()
    n = curves.n_branches
    buf.write("gamma_rad_per_m," + ",".join(f"omega_{i + 1}" for i in range(n)) + "\n")
    for j, g in enumerate(curves.gamma_grid):
        row = [repr(float(g))] + [repr(float(w)) for w in curves.branches[:, j]]
        buf.write(",".join(row) + "\n")
    return buf.getvalue()


def curves_from_csv(text, thickness=float("nan"), stiffness=float("nan"), cell_length=None):
    """Parse curves_to_csv output back into DispersionCurves."""
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[0] != "gamma_rad_per_m":
        raise ValidationError(f"unexpected curves CSV header: {lines[0]!r}")
    data = np.array([[float(val) for val in ln.split(",")] for ln in lines[1:]])
    gammas = data[:, 0]
    branches = data[:, 1:].T
    if cell_length is None:
        cell_length = np.pi / gammas.max() if gammas.size else 1.0
    return DispersionCurves(gamma_grid=gammas, branches=branches, thickness=thickness,
                            stiffness=stiffness, cell_length=cell_length)
