"""Taylor-Hood spaces (quadratic velocity / linear pressure) and form assembly.

All integrals in the package go through one fixed symmetric degree-5
triangle rule (7 points), which integrates every velocity-velocity-gradient
product exactly and keeps the energy bookkeeping self-consistent: the
diagnostics use the same rule as the operators.

Velocity coefficient layout is component-blocked: dof = comp * n_scalar + s,
where scalar node s enumerates mesh vertices followed by edge midpoints.
Dirichlet (no-slip) values are identically zero; coefficient vectors keep
full length with zeros on constrained dofs, and only solvers reduce.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

_SQRT15 = np.sqrt(15.0)

# barycentric degree-5 rule; weights include the factor 1/2 so that
# integral over element = sum(w_q * f(x_q) * detJ)
_QA1 = (6.0 + _SQRT15) / 21.0
_QA2 = (6.0 - _SQRT15) / 21.0
_QW0 = 9.0 / 80.0
_QW1 = (155.0 + _SQRT15) / 2400.0
_QW2 = (155.0 - _SQRT15) / 2400.0

_QPOINTS = np.array(
    [
        [1.0 / 3.0, 1.0 / 3.0],
        [_QA1, _QA1],
        [1.0 - 2.0 * _QA1, _QA1],
        [_QA1, 1.0 - 2.0 * _QA1],
        [_QA2, _QA2],
        [1.0 - 2.0 * _QA2, _QA2],
        [_QA2, 1.0 - 2.0 * _QA2],
    ]
)
_QWEIGHTS = np.array([_QW0, _QW1, _QW1, _QW1, _QW2, _QW2, _QW2])


@dataclass(frozen=True)
class QuadratureRule:
    """Reference-triangle rule: points in (xi, eta), weights include area factor."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def _p2_values(pts):
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)  # (nq, 3)
    vals = np.empty((len(pts), 6))
    for i in range(3):
        vals[:, i] = lam[:, i] * (2.0 * lam[:, i] - 1.0)
    vals[:, 3] = 4.0 * lam[:, 0] * lam[:, 1]
    vals[:, 4] = 4.0 * lam[:, 1] * lam[:, 2]
    vals[:, 5] = 4.0 * lam[:, 2] * lam[:, 0]
    return vals


def _p2_ref_grads(pts):
    xi, eta = pts[:, 0], pts[:, 1]
    lam = np.stack([1.0 - xi - eta, xi, eta], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    grads = np.empty((len(pts), 6, 2))
    for i in range(3):
        grads[:, i, :] = (4.0 * lam[:, i, None] - 1.0) * dlam[i]
    pairs = [(0, 1), (1, 2), (2, 0)]
    for k, (i, j) in enumerate(pairs):
        grads[:, 3 + k, :] = 4.0 * (lam[:, i, None] * dlam[j] + lam[:, j, None] * dlam[i])
    return grads


def _p1_values(pts):
    xi, eta = pts[:, 0], pts[:, 1]
    return np.stack([1.0 - xi - eta, xi, eta], axis=1)


class TaylorHood:
    """Velocity/pressure dof maps, Dirichlet masks and precomputed basis data."""

    def __init__(self, mesh):
        self.mesh = mesh
        nv, ne = mesh.num_vertices, mesh.num_edges
        self.n_scalar = nv + ne
        self.n_pressure = nv
        self.n_velocity = 2 * self.n_scalar
        self.quad = QuadratureRule(_QPOINTS.copy(), _QWEIGHTS.copy(), degree=5)

        # scalar dofs per element: 3 vertices then midpoints of edges 01,12,20
        self.tri_sdofs = np.concatenate(
            [mesh.triangles, nv + mesh.tri_edges], axis=1
        )
        self.tri_pdofs = mesh.triangles

        mids = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        self.node_coords = np.concatenate([mesh.vertices, mids], axis=0)

        scalar_dirichlet = np.zeros(self.n_scalar, dtype=bool)
        scalar_dirichlet[:nv] = mesh.boundary_markers > 0
        scalar_dirichlet[nv:] = mesh.boundary_edge_mask
        self.scalar_dirichlet = scalar_dirichlet
        self.velocity_dirichlet = np.concatenate([scalar_dirichlet, scalar_dirichlet])

        p0 = mesh.vertices[mesh.triangles[:, 0]]
        d1 = mesh.vertices[mesh.triangles[:, 1]] - p0
        d2 = mesh.vertices[mesh.triangles[:, 2]] - p0
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.detJ = det
        inv = np.empty((len(det), 2, 2))
        inv[:, 0, 0] = d2[:, 1] / det
        inv[:, 0, 1] = -d2[:, 0] / det
        inv[:, 1, 0] = -d1[:, 1] / det
        inv[:, 1, 1] = d1[:, 0] / det

        self.p2_vals = _p2_values(self.quad.points)
        self.p1_vals = _p1_values(self.quad.points)
        gref = _p2_ref_grads(self.quad.points)
        # physical gradient: g_c = sum_r invJ[r, c] * gref_r
        self.p2_grads = np.einsum("erc,qkr->eqkc", inv, gref)

        # physical quadrature point coordinates and integration weights
        lam = np.concatenate(
            [1.0 - self.quad.points.sum(axis=1, keepdims=True), self.quad.points],
            axis=1,
        )
        tri_xy = mesh.vertices[mesh.triangles]  # (M, 3, 2)
        self.qpoints = np.einsum("qv,evc->eqc", lam, tri_xy)
        self.qweights = self.quad.weights[None, :] * det[:, None]

    @property
    def num_elements(self):
        return self.mesh.num_triangles

    def velocity_dofs(self, comp, snodes):
        return comp * self.n_scalar + snodes


@dataclass
class FeFunction:
    """Coefficient vector over a Taylor-Hood space ('velocity' or 'pressure')."""

    space: TaylorHood
    kind: str
    coeffs: np.ndarray = field(default=None)

    def __post_init__(self):
        expected = (
            self.space.n_velocity if self.kind == "velocity" else self.space.n_pressure
        )
        if self.kind not in ("velocity", "pressure"):
            raise ValueError(f"unknown space tag {self.kind!r}")
        if self.coeffs is None:
            self.coeffs = np.zeros(expected)
        else:
            self.coeffs = np.asarray(self.coeffs, dtype=float)
            if self.coeffs.shape != (expected,):
                raise ValueError(
                    f"{self.kind} coefficients must have length {expected}, "
                    f"got {self.coeffs.shape}"
                )

    def copy(self):
        return FeFunction(self.space, self.kind, self.coeffs.copy())


def velocity_function(space, coeffs=None):
    return FeFunction(space, "velocity", coeffs)


def pressure_function(space, coeffs=None):
    return FeFunction(space, "pressure", coeffs)


def interpolate_velocity(space, fn):
    """Nodal interpolation of fn(x, y) -> (u1, u2) into the velocity space."""
    x, y = space.node_coords[:, 0], space.node_coords[:, 1]
    u1, u2 = fn(x, y)
    coeffs = np.concatenate(
        [np.broadcast_to(u1, x.shape).astype(float),
         np.broadcast_to(u2, x.shape).astype(float)]
    )
    return velocity_function(space, coeffs)


def qp_velocity_values(space, coeffs):
    """Velocity at quadrature points, shape (elements, points, 2)."""
    ns = space.n_scalar
    out = np.empty((space.num_elements, len(space.quad.weights), 2))
    for c in range(2):
        local = coeffs[c * ns : (c + 1) * ns][space.tri_sdofs]  # (M, 6)
        out[:, :, c] = np.einsum("qk,ek->eq", space.p2_vals, local)
    return out


def qp_velocity_grads(space, coeffs):
    """Velocity gradient at quadrature points, shape (M, nq, 2, 2), rows = component."""
    ns = space.n_scalar
    out = np.empty((space.num_elements, len(space.quad.weights), 2, 2))
    for c in range(2):
        local = coeffs[c * ns : (c + 1) * ns][space.tri_sdofs]
        out[:, :, c, :] = np.einsum("eqkd,ek->eqd", space.p2_grads, local)
    return out


def integrate(space, values):
    """Integrate a per-quadrature-point scalar field (M, nq) over the domain."""
    return float(np.sum(space.qweights * values))


def _scatter_scalar(space, local):
    dofs = space.tri_sdofs
    m = len(dofs)
    rows = np.broadcast_to(dofs[:, :, None], (m, 6, 6)).ravel()
    cols = np.broadcast_to(dofs[:, None, :], (m, 6, 6)).ravel()
    n = space.n_scalar
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def _vector_blockdiag(space, scalar_op):
    return sp.block_diag([scalar_op, scalar_op], format="csr")


def assemble_mass(space):
    """Velocity-space mass operator (symmetric positive definite)."""
    # contract a bitwise-symmetric outer product so M == M^T exactly
    outer = space.p2_vals[:, :, None] * space.p2_vals[:, None, :]
    local = np.einsum("eq,qij->eij", space.qweights, outer)
    return _vector_blockdiag(space, _scatter_scalar(space, local))


def _check_qp_layout(space, arr, name):
    expected = (space.num_elements, len(space.quad.weights))
    arr = np.asarray(arr, dtype=float)
    if arr.shape != expected:
        raise ValueError(
            f"{name} must be evaluated on the quadrature layout {expected}, "
            f"got {arr.shape}"
        )
    return arr


def assemble_weighted_mass(space, left, right):
    """Velocity operator with entries int(left*right*phi_i*phi_j).

    left/right are per-quadrature-point weight fields (elements, points);
    identical layouts are required.
    """
    left = _check_qp_layout(space, left, "left weight")
    right = _check_qp_layout(space, right, "right weight")
    comb = space.qweights * left * right
    outer = space.p2_vals[:, :, None] * space.p2_vals[:, None, :]
    local = np.einsum("eq,qij->eij", comb, outer)
    return _vector_blockdiag(space, _scatter_scalar(space, local))


def assemble_total_stiffness(space, nu, nu_t=None, mode="gradient",
                             allow_negative=False):
    """Viscous operator for coefficient nu + nu_t.

    gradient mode: entries int((nu+nu_t) grad(phi_i) : grad(phi_j));
    strain mode:   entries int(2 (nu+nu_t) S(phi_i) : S(phi_j)).

    nu_t is a per-quadrature-point field (or None for plain viscosity).
    Negative nu_t values are rejected unless allow_negative is set (the
    extrapolated coefficients of the second-order stepper may undershoot).
    """
    if nu <= 0.0:
        raise ValueError(f"molecular viscosity must be positive, got {nu}")
    if nu_t is None:
        coef = np.full_like(space.qweights, nu)
    else:
        nu_t = _check_qp_layout(space, nu_t, "nu_t")
        if not allow_negative and nu_t.min() < 0.0:
            raise ValueError("negative eddy viscosity violates the closure invariant")
        coef = nu + nu_t
    comb = space.qweights * coef
    if mode not in ("gradient", "strain"):
        raise ValueError(f"unknown stiffness mode {mode!r}")

    g = space.p2_grads
    gouter = np.einsum("eqid,eqjd->eqij", g, g)  # bitwise symmetric in (i, j)
    base = np.einsum("eq,eqij->eij", comb, gouter)
    if mode == "gradient":
        return _vector_blockdiag(space, _scatter_scalar(space, base))

    blocks = [[None, None], [None, None]]
    for c in range(2):
        for d in range(2):
            cross_outer = g[..., :, None, d] * g[..., None, :, c]
            cross = np.einsum("eq,eqij->eij", comb, cross_outer)
            local = cross + base if c == d else cross
            blocks[c][d] = _scatter_scalar(space, local)
    return sp.bmat(blocks, format="csr")


def assemble_convection_skew(space, advecting):
    """Explicitly skew-symmetrized convection operator for a velocity iterate.

    Realizes b*(u, v, z) = 1/2 (u . grad v, z) - 1/2 (u . grad z, v); the
    assembled operator N satisfies z^T N z = 0 for every z by construction.
    """
    if not isinstance(advecting, FeFunction) or advecting.kind != "velocity":
        raise ValueError("advecting field must be a velocity FeFunction")
    u_qp = qp_velocity_values(space, advecting.coeffs)
    udg = np.einsum("eqd,eqkd->eqk", u_qp, space.p2_grads)
    local = np.einsum("eq,eqk,qj->ejk", space.qweights, udg, space.p2_vals)
    c_scalar = _scatter_scalar(space, local)
    c_vec = _vector_blockdiag(space, c_scalar)
    n = 0.5 * (c_vec - c_vec.T)
    return n.tocsr()


def assemble_div(space):
    """Pressure-velocity coupling B with (B w)_i = -int(psi_i div w)."""
    m = space.num_elements
    n_p, n_v = space.n_pressure, space.n_velocity
    data, rows, cols = [], [], []
    for c in range(2):
        local = -np.einsum(
            "eq,qi,eqk->eik", space.qweights, space.p1_vals, space.p2_grads[..., c]
        )
        rows.append(np.broadcast_to(space.tri_pdofs[:, :, None], (m, 3, 6)).ravel())
        cols.append(
            np.broadcast_to(
                (c * space.n_scalar + space.tri_sdofs)[:, None, :], (m, 3, 6)
            ).ravel()
        )
        data.append(local.ravel())
    return sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n_p, n_v),
    ).tocsr()


def pressure_integral_vector(space):
    """Vector c with c_i = int(psi_i); c . q is the integral of a pressure field."""
    local = np.einsum("eq,qi->ei", space.qweights, space.p1_vals)
    c = np.zeros(space.n_pressure)
    np.add.at(c, space.tri_pdofs.ravel(), local.ravel())
    return c


def lebesgue_norms(w):
    """(||w||_L2, ||w||_L3, ||grad w||_L2, ||grad w||_L3) by quadrature."""
    if w.kind != "velocity":
        raise ValueError("lebesgue_norms expects a velocity FeFunction")
    space = w.space
    vals = qp_velocity_values(space, w.coeffs)
    grads = qp_velocity_grads(space, w.coeffs)
    speed = np.sqrt(np.sum(vals**2, axis=2))
    gnorm = np.sqrt(np.sum(grads**2, axis=(2, 3)))
    l2 = np.sqrt(integrate(space, speed**2))
    l3 = integrate(space, speed**3) ** (1.0 / 3.0)
    g2 = np.sqrt(integrate(space, gnorm**2))
    g3 = integrate(space, gnorm**3) ** (1.0 / 3.0)
    return l2, l3, g2, g3
