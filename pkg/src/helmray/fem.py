"""P1 Galerkin discretization of the truncated exterior problem.

The sesquilinear form is
    a(u, v) = int_D (A grad u . conj(grad v) - k^2 nu u conj(v)) - <T (u|_G), v|_G>
with T the modal radiation operator on the outer circle G.  Obstacle vertices
carry homogeneous Dirichlet constraints.  The radiation block couples outer
boundary degrees of freedom through the uniform-angle Fourier projection, so it
is a dense complex-symmetric block of rank 2 n_max + 1.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dtn import DtnOperator, FourierTrace, dtn_pairing, incident_wave_data
from .geometry import CoefficientField
from .mesh import Mesh, OBSTACLE_BOUNDARY, TRUNCATION_BOUNDARY
from .util import triangle_rule


class SolveError(Exception):
    pass


class SingularSystemError(SolveError):
    """The discrete system failed to factorize; discrete uniqueness is not
    guaranteed below the mesh threshold, so this is surfaced as data."""


@dataclass
class FeSpace:
    mesh: Mesh
    dirichlet_outer: bool = False
    dof_of_vertex: np.ndarray = None
    free_vertices: np.ndarray = None
    boundary_dofs: np.ndarray = None      # outer-circle dofs in angular order
    boundary_thetas: np.ndarray = None

    @property
    def n_dofs(self):
        return len(self.free_vertices)


def build_space(mesh: Mesh, dirichlet_outer: bool = False) -> FeSpace:
    constrained = mesh.vertex_tags == OBSTACLE_BOUNDARY
    if dirichlet_outer:
        constrained = constrained | (mesh.vertex_tags == TRUNCATION_BOUNDARY)
    free = np.nonzero(~constrained)[0]
    dof_of_vertex = np.full(mesh.n_vertices, -1, dtype=int)
    dof_of_vertex[free] = np.arange(len(free))
    if dirichlet_outer:
        bdofs = np.array([], dtype=int)
        bthetas = np.array([])
    else:
        bdofs = dof_of_vertex[mesh.boundary_indices]
        bthetas = mesh.boundary_thetas
    return FeSpace(mesh=mesh, dirichlet_outer=dirichlet_outer,
                   dof_of_vertex=dof_of_vertex, free_vertices=free,
                   boundary_dofs=bdofs, boundary_thetas=bthetas)


# ---------------------------------------------------------------------------
# element geometry and quadrature


def element_gradients(mesh: Mesh):
    """Constant P1 basis gradients per element: (M, 3, 2), plus areas (M,)."""
    p = mesh.vertices[mesh.triangles]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    g1 = np.stack([e2[:, 1], -e2[:, 0]], axis=1) / det[:, None]
    g2 = np.stack([-e1[:, 1], e1[:, 0]], axis=1) / det[:, None]
    g0 = -(g1 + g2)
    return np.stack([g0, g1, g2], axis=1), area


def quadrature(mesh: Mesh, degree=4):
    """Physical quadrature points (M, Q, 2), absolute weights (M, Q), bary (Q, 3)."""
    bary, w = triangle_rule(degree)
    p = mesh.vertices[mesh.triangles]          # (M, 3, 2)
    pts = np.einsum("qj,mjd->mqd", bary, p)
    _, area = element_gradients(mesh)
    weights = area[:, None] * w[None, :]
    return pts, weights, bary


# ---------------------------------------------------------------------------
# assembly


@dataclass
class GalerkinSystem:
    fe_space: FeSpace
    coeffs: CoefficientField
    dtn: Optional[DtnOperator]
    k: float
    stiffness: sp.csr_matrix
    mass_nu: sp.csr_matrix
    mass_plain: sp.csr_matrix
    dtn_block: Optional[sp.csr_matrix]
    rhs: Optional[np.ndarray] = None
    _matrix: Optional[sp.csr_matrix] = field(default=None, repr=False)
    _lu = None

    @property
    def matrix(self):
        if self._matrix is None:
            K = self.stiffness.astype(complex) - (self.k**2) * self.mass_nu
            if self.dtn_block is not None:
                K = K - self.dtn_block
            self._matrix = K.tocsr()
        return self._matrix

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix.tocsc())
            except RuntimeError as exc:
                raise SingularSystemError(str(exc)) from exc
        return self._lu

    def energy_matrix(self):
        """Real SPD Gram of the k-weighted norm: stiffness + k^2 nu-mass."""
        return (self.stiffness + (self.k**2) * self.mass_nu).tocsr()

    def action(self, u, v):
        """a(u, v) for dof vectors: trial u, test v (conjugated slot)."""
        return complex(np.vdot(v, self.matrix @ u))


def _scatter(fe_space, local, tri_dofs):
    """Accumulate (M, 3, 3) element blocks into a CSR over free dofs."""
    n = fe_space.n_dofs
    keep = tri_dofs >= 0
    rows = np.repeat(tri_dofs[:, :, None], 3, axis=2)
    cols = np.repeat(tri_dofs[:, None, :], 3, axis=1)
    mask = keep[:, :, None] & keep[:, None, :]
    A = sp.coo_matrix((local[mask], (rows[mask], cols[mask])), shape=(n, n))
    return A.tocsr()


def assemble(coeffs: CoefficientField, fe_space: FeSpace,
             dtn: Optional[DtnOperator], k: float, quad_degree=4) -> GalerkinSystem:
    """Assemble stiffness, masses, and the radiation block."""
    mesh = fe_space.mesh
    grads, area = element_gradients(mesh)
    pts, wts, bary = quadrature(mesh, quad_degree)

    flat = pts.reshape(-1, 2)
    A_q = coeffs.eval_A(flat).reshape(pts.shape[0], pts.shape[1], 2, 2)
    nu_q = coeffs.eval_nu(flat).reshape(pts.shape[:2])

    A_bar = np.einsum("mq,mqab->mab", wts, A_q)
    S_loc = np.einsum("mia,mab,mjb->mij", grads, A_bar, grads)

    phi = bary  # (Q, 3)
    Mnu_loc = np.einsum("mq,mq,qi,qj->mij", wts, nu_q, phi, phi)
    M0_loc = np.einsum("mq,qi,qj->mij", wts, phi, phi)

    tri_dofs = fe_space.dof_of_vertex[mesh.triangles]
    S = _scatter(fe_space, S_loc, tri_dofs)
    Mnu = _scatter(fe_space, Mnu_loc, tri_dofs)
    M0 = _scatter(fe_space, M0_loc, tri_dofs)

    block = None
    if dtn is not None:
        if fe_space.dirichlet_outer:
            raise ValueError("radiation block incompatible with outer Dirichlet")
        if abs(dtn.k - k) > 1e-12:
            raise ValueError(f"operator wavenumber {dtn.k} != {k}")
        block = _dtn_block(fe_space, dtn)

    return GalerkinSystem(fe_space=fe_space, coeffs=coeffs, dtn=dtn, k=k,
                          stiffness=S, mass_nu=Mnu, mass_plain=M0,
                          dtn_block=block)


def modal_projection(fe_space: FeSpace, n_max: int):
    """Matrix taking outer-boundary nodal values to Fourier coefficients.

    Row n (for n = -n_max..n_max) is e^{-i n theta_b} / N_b: the trapezoidal
    projection on the uniformly spaced boundary vertices.
    """
    th = fe_space.boundary_thetas
    Nb = len(th)
    if Nb < 2 * n_max + 5:
        raise ValueError(f"{Nb} boundary vertices cannot resolve {n_max} modes")
    gaps = np.diff(np.sort(th % (2 * np.pi)))
    if np.max(np.abs(gaps - 2 * np.pi / Nb)) > 1e-8:
        raise ValueError("boundary vertices are not uniformly spaced in angle")
    n = np.arange(-n_max, n_max + 1)
    return np.exp(-1j * np.outer(n, th)) / Nb


def _dtn_block(fe_space: FeSpace, dtn: DtnOperator):
    Mm = modal_projection(fe_space, dtn.n_max)
    dense = (2.0 * np.pi * dtn.R) * (Mm.conj().T * dtn.coefficients) @ Mm
    n = fe_space.n_dofs
    bd = fe_space.boundary_dofs
    rows = np.repeat(bd, len(bd))
    cols = np.tile(bd, len(bd))
    return sp.coo_matrix((dense.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def boundary_trace(fe_space: FeSpace, vertex_values, n_max) -> FourierTrace:
    """Fourier trace of a nodal function on the outer circle."""
    Mm = modal_projection(fe_space, n_max)
    mesh = fe_space.mesh
    vals = np.asarray(vertex_values)[mesh.boundary_indices]
    R = float(np.hypot(*mesh.vertices[mesh.boundary_indices[0]]))
    return FourierTrace(coefficients=Mm @ vals.astype(complex), R=R)


# ---------------------------------------------------------------------------
# loads


def assemble_load_source(fe_space: FeSpace, f: Callable, quad_degree=4,
                         support_radius=None):
    """Right-hand side F(v) = int f conj(v) for a callable source."""
    mesh = fe_space.mesh
    pts, wts, bary = quadrature(mesh, quad_degree)
    fv = np.asarray(f(pts.reshape(-1, 2)), dtype=complex).reshape(pts.shape[:2])
    if support_radius is not None:
        r = np.hypot(pts[..., 0], pts[..., 1])
        tail = np.abs(fv[r > support_radius])
        if tail.size and tail.max() > 1e-12 * max(np.abs(fv).max(), 1e-300):
            warnings.warn("source is not supported inside the stated radius")
    loc = np.einsum("mq,mq,qi->mi", wts, fv, bary)
    tri_dofs = fe_space.dof_of_vertex[mesh.triangles]
    rhs = np.zeros(fe_space.n_dofs, dtype=complex)
    keep = tri_dofs >= 0
    np.add.at(rhs, tri_dofs[keep], loc[keep])
    return rhs


def assemble_load_scattering(fe_space: FeSpace, dtn: DtnOperator, direction):
    """Boundary data load for plane-wave scattering off the Dirichlet obstacle."""
    data = incident_wave_data(dtn, direction)
    Mm = modal_projection(fe_space, dtn.n_max)
    vals = (2.0 * np.pi * dtn.R) * (Mm.conj().T @ data.coefficients)
    rhs = np.zeros(fe_space.n_dofs, dtype=complex)
    rhs[fe_space.boundary_dofs] = vals
    return rhs


# ---------------------------------------------------------------------------
# solves


@dataclass
class DiscreteSolution:
    dofs: np.ndarray
    fe_space: FeSpace
    k: float
    residual: float = 0.0

    def vertex_values(self):
        out = np.zeros(self.fe_space.mesh.n_vertices, dtype=complex)
        out[self.fe_space.free_vertices] = self.dofs
        return out

    def evaluate(self, points):
        return self.fe_space.mesh.interpolate(self.vertex_values(), points)

    def trace_fourier(self, n_max):
        return boundary_trace(self.fe_space, self.vertex_values(), n_max)


def solve(system: GalerkinSystem, rhs=None, rtol=1e-10) -> DiscreteSolution:
    """Direct sparse solve with a residual certificate."""
    b = system.rhs if rhs is None else np.asarray(rhs, dtype=complex)
    if b is None:
        raise ValueError("no right-hand side")
    lu = system.factorize()
    x = lu.solve(b)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("factorization produced non-finite solution")
    bn = np.linalg.norm(b)
    res = float(np.linalg.norm(system.matrix @ x - b) / bn) if bn > 0 else 0.0
    if res > rtol:
        raise SolveError(f"relative residual {res:.3e} exceeds {rtol:g}")
    return DiscreteSolution(dofs=x, fe_space=system.fe_space, k=system.k, residual=res)


def solve_adjoint(system: GalerkinSystem, f: Union[Callable, np.ndarray]) -> DiscreteSolution:
    """Solution of the adjoint problem with L^2 data f.

    Realized as the conjugate of the direct solve with source conj(f): the
    adjoint solution operator satisfies S* f = conj(S conj(f)).
    """
    if callable(f):
        load = assemble_load_source(system.fe_space, lambda x: np.conj(f(x)))
    else:
        load = system.mass_plain @ np.conj(np.asarray(f, dtype=complex))
    u = solve(system, load)
    return DiscreteSolution(dofs=np.conj(u.dofs), fe_space=system.fe_space,
                            k=system.k, residual=u.residual)


# ---------------------------------------------------------------------------
# norms, errors, interpolation


def energy_norm(coeffs: CoefficientField, fe_space: FeSpace, u, k: float,
                system: Optional[GalerkinSystem] = None) -> float:
    """k-weighted norm: (|A^{1/2} grad u|^2 + k^2 |nu^{1/2} u|^2)^{1/2}."""
    dofs = u.dofs if isinstance(u, DiscreteSolution) else np.asarray(u)
    if system is not None:
        E = system.energy_matrix()
        return float(np.sqrt(max(np.real(np.vdot(dofs, E @ dofs)), 0.0)))
    vals, grads_q, pts, wts = _fe_values(fe_space, dofs)
    A_q = coeffs.eval_A(pts.reshape(-1, 2)).reshape(pts.shape[:2] + (2, 2))
    nu_q = coeffs.eval_nu(pts.reshape(-1, 2)).reshape(pts.shape[:2])
    gAg = np.einsum("mqa,mqab,mqb->mq", np.conj(grads_q), A_q, grads_q).real
    total = np.sum(wts * (gAg + k**2 * nu_q * np.abs(vals) ** 2))
    return float(np.sqrt(max(total, 0.0)))


def _fe_values(fe_space, dofs, quad_degree=4):
    """FE function values and (constant) gradients at quadrature points."""
    mesh = fe_space.mesh
    grads, _ = element_gradients(mesh)
    pts, wts, bary = quadrature(mesh, quad_degree)
    vv = np.zeros(mesh.n_vertices, dtype=complex)
    vv[fe_space.free_vertices] = dofs
    nodal = vv[mesh.triangles]                       # (M, 3)
    vals = np.einsum("qj,mj->mq", bary, nodal)
    grad = np.einsum("mj,mja->ma", nodal, grads)     # per element
    grads_q = np.repeat(grad[:, None, :], pts.shape[1], axis=1)
    return vals, grads_q, pts, wts


def errors_vs_exact(coeffs: CoefficientField, fe_space: FeSpace, u, exact,
                    exact_grad, k: float, quad_degree=4):
    """(energy error, L2 error) of a discrete function against callables."""
    dofs = u.dofs if isinstance(u, DiscreteSolution) else np.asarray(u)
    vals, grads_q, pts, wts = _fe_values(fe_space, dofs, quad_degree)
    flat = pts.reshape(-1, 2)
    ev = np.asarray(exact(flat), dtype=complex).reshape(pts.shape[:2])
    eg = np.asarray(exact_grad(flat), dtype=complex).reshape(pts.shape[:2] + (2,))
    dv = vals - ev
    dg = grads_q - eg
    A_q = coeffs.eval_A(flat).reshape(pts.shape[:2] + (2, 2))
    nu_q = coeffs.eval_nu(flat).reshape(pts.shape[:2])
    gAg = np.einsum("mqa,mqab,mqb->mq", np.conj(dg), A_q, dg).real
    energy = np.sqrt(np.sum(wts * (gAg + k**2 * nu_q * np.abs(dv) ** 2)))
    l2 = np.sqrt(np.sum(wts * np.abs(dv) ** 2))
    return float(energy), float(l2)


def l2_norm_exact(fe_space: FeSpace, fn, quad_degree=4):
    pts, wts, _ = quadrature(fe_space.mesh, quad_degree)
    v = np.asarray(fn(pts.reshape(-1, 2))).reshape(pts.shape[:2])
    return float(np.sqrt(np.sum(wts * np.abs(v) ** 2)))


def nodal_interpolant(fe_space: FeSpace, v):
    """Dof vector of the vertex interpolant of a callable."""
    mesh = fe_space.mesh
    vals = np.asarray(v(mesh.vertices), dtype=complex)
    return vals[fe_space.free_vertices]


@dataclass
class InterpolationErrors:
    l2_weighted: float       # |nu^{1/2}(v - I_h v)|_{L2}
    grad_weighted: float     # |A^{1/2} grad(v - I_h v)|_{L2}
    h2_norm: float           # full H^2 norm of v (mixed derivative counted once)
    h_fem: float

    @property
    def ratio(self):
        """(l2 + h grad) / (h^2 |v|_{H2}): the empirical interpolation constant."""
        return (self.l2_weighted + self.h_fem * self.grad_weighted) / (
            self.h_fem**2 * self.h2_norm)


def nodal_interpolation_error(coeffs: CoefficientField, fe_space: FeSpace,
                              v, grad_v, hess_v, quad_degree=4) -> InterpolationErrors:
    """Interpolation error norms of a twice-differentiable function."""
    dofs = nodal_interpolant(fe_space, v)
    vals, grads_q, pts, wts = _fe_values(fe_space, dofs, quad_degree)
    flat = pts.reshape(-1, 2)
    ev = np.asarray(v(flat), dtype=complex).reshape(pts.shape[:2])
    eg = np.asarray(grad_v(flat), dtype=complex).reshape(pts.shape[:2] + (2,))
    eh = np.asarray(hess_v(flat), dtype=complex).reshape(pts.shape[:2] + (2, 2))
    A_q = coeffs.eval_A(flat).reshape(pts.shape[:2] + (2, 2))
    nu_q = coeffs.eval_nu(flat).reshape(pts.shape[:2])

    dv = vals - ev
    dg = grads_q - eg
    l2w = np.sqrt(np.sum(wts * nu_q * np.abs(dv) ** 2))
    gAg = np.einsum("mqa,mqab,mqb->mq", np.conj(dg), A_q, dg).real
    gw = np.sqrt(np.sum(wts * gAg))
    h2 = np.sqrt(np.sum(wts * (np.abs(ev) ** 2
                               + np.sum(np.abs(eg) ** 2, axis=-1)
                               + np.abs(eh[..., 0, 0]) ** 2
                               + np.abs(eh[..., 0, 1]) ** 2
                               + np.abs(eh[..., 1, 1]) ** 2)))
    return InterpolationErrors(float(l2w), float(gw), float(h2), fe_space.mesh.h_fem)


def recovered_hessian_h2_norm(fe_space: FeSpace, u, within_radius=None):
    """Discrete full H^2 norm via nodal gradient recovery.

    The piecewise gradient is averaged to vertices (area weights), then
    differentiated again per element; optionally restricted to elements whose
    centroid lies inside the given radius.
    """
    mesh = fe_space.mesh
    dofs = u.dofs if isinstance(u, DiscreteSolution) else np.asarray(u)
    grads, area = element_gradients(mesh)
    vv = np.zeros(mesh.n_vertices, dtype=complex)
    vv[fe_space.free_vertices] = dofs
    nodal = vv[mesh.triangles]
    grad_K = np.einsum("mj,mja->ma", nodal, grads)   # (M, 2)

    wsum = np.zeros(mesh.n_vertices)
    gsum = np.zeros((mesh.n_vertices, 2), dtype=complex)
    for loc in range(3):
        idx = mesh.triangles[:, loc]
        np.add.at(wsum, idx, area)
        np.add.at(gsum, idx, area[:, None] * grad_K)
    grad_nodal = gsum / wsum[:, None]

    hess = np.einsum("mjb,mja->mab", grad_nodal[mesh.triangles], grads)
    hess = 0.5 * (hess + np.swapaxes(hess, 1, 2))

    pts, wts, bary = quadrature(mesh, 2)
    vals = np.einsum("qj,mj->mq", bary, nodal)
    sel = np.ones(len(area), dtype=bool)
    if within_radius is not None:
        cent = mesh.vertices[mesh.triangles].mean(axis=1)
        sel = np.hypot(cent[:, 0], cent[:, 1]) <= within_radius
    hnorm2 = (np.abs(hess[:, 0, 0]) ** 2 + np.abs(hess[:, 0, 1]) ** 2
              + np.abs(hess[:, 1, 1]) ** 2)
    total = (np.sum(wts[sel] * np.abs(vals[sel]) ** 2)
             + np.sum(area[sel] * np.sum(np.abs(grad_K[sel]) ** 2, axis=-1))
             + np.sum(area[sel] * hnorm2[sel]))
    return float(np.sqrt(total))


def bilinear_action_quadrature(system: GalerkinSystem, u_dofs, v_dofs,
                               quad_degree=4):
    """a(u, v) evaluated by direct quadrature plus the modal boundary pairing.

    Independent of the assembled matrix path; used to cross-check assembly.
    """
    fe_space, coeffs, k = system.fe_space, system.coeffs, system.k
    uv, ug, pts, wts = _fe_values(fe_space, np.asarray(u_dofs), quad_degree)
    vv, vg, _, _ = _fe_values(fe_space, np.asarray(v_dofs), quad_degree)
    flat = pts.reshape(-1, 2)
    A_q = coeffs.eval_A(flat).reshape(pts.shape[:2] + (2, 2))
    nu_q = coeffs.eval_nu(flat).reshape(pts.shape[:2])
    grad_term = np.einsum("mq,mqa,mqab,mqb->", wts, np.conj(vg), A_q, ug)
    mass_term = np.sum(wts * nu_q * uv * np.conj(vv))
    val = grad_term - k**2 * mass_term
    if system.dtn is not None:
        uvert = np.zeros(fe_space.mesh.n_vertices, dtype=complex)
        uvert[fe_space.free_vertices] = u_dofs
        vvert = np.zeros(fe_space.mesh.n_vertices, dtype=complex)
        vvert[fe_space.free_vertices] = v_dofs
        tu = boundary_trace(fe_space, uvert, system.dtn.n_max)
        tv = boundary_trace(fe_space, vvert, system.dtn.n_max)
        val = val - dtn_pairing(system.dtn, tu, tv)
    return complex(val)
