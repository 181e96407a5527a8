"""Hadamard shape-derivative densities and parametric gradients.

Every derivative is carried as a density g on the boundary nodes; pairing it
with a deformation field theta gives

    J'(D; theta) = sum_k g(x_k) (theta(x_k) . nu(x_k)) w_k

with the shared trapezoid weights w_k.  The densities come from the boundary
density representations of the capacitance derivatives:

    g^C_ij = psi_i K*[psi_j] + psi_j K*[psi_i]
    g^V_ij = chi_i chi_j
    g^m_j  = psi_j K*[psi_tilde] + psi_tilde K*[psi_j] - nu_d psi_j

with the Laplace adjoint double layer K*, followed by first-order eigenpair
perturbation and the chain rule onto the Fourier design parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import layerpot, rom
from .capacitance import CapacitanceData
from .geometry import params_per_shape, velocity_field
from .rom import RomModel, band_quadrature, lambda_of_omega

__all__ = [
    "GradientDensity",
    "DegenerateSpectrumError",
    "ShapeGradients",
    "gradient_densities",
    "grad_reflection",
    "grad_objective_ref",
    "grad_objective_res",
    "parametric_gradient",
    "normal_velocities",
]

# relative eigenvalue gap below which eigenpair derivatives are refused
DEGENERATE_GAP_REFUSE = 1e-8


class DegenerateSpectrumError(ValueError):
    """Eigenpair shape derivatives are undefined for (nearly) repeated modes."""


@dataclass(frozen=True)
class GradientDensity:
    """Boundary samples of a Hadamard density; first axis indexes nodes."""

    values: np.ndarray
    grid: object

    def pair(self, normal_velocity):
        """Contract against theta.nu node values with the trapezoid weights."""
        w = self.grid.weights * np.asarray(normal_velocity)
        return np.tensordot(w, self.values, axes=(0, 0))


@dataclass(frozen=True)
class ShapeGradients:
    """All modal densities for one geometry (node-indexed leading axis)."""

    cap: CapacitanceData
    gC: np.ndarray  # (n, N, N)
    gV: np.ndarray  # (n, N, N)
    gm: np.ndarray  # (n, N)
    glam0: np.ndarray  # (n, N)
    gu: np.ndarray  # (n, N_modes, N_components)
    glam1: np.ndarray  # (n, N)


def grad_capacitance(cap: CapacitanceData, kstar=None):
    """Density g^C_ij(x) = psi_i K*[psi_j] + psi_j K*[psi_i] (symmetric in ij)."""
    grid = cap.grid
    K = kstar if kstar is not None else layerpot.assemble_adjoint_double_layer(grid)
    kp = K.matrix @ cap.psi
    return cap.psi[:, :, None] * kp[:, None, :] + cap.psi[:, None, :] * kp[:, :, None]


def grad_volume(cap: CapacitanceData):
    """Density g^V_ij = chi_i chi_j (block indicators on the diagonal)."""
    grid = cap.grid
    n, nres = grid.n_total, grid.n_res
    gV = np.zeros((n, nres, nres))
    idx = grid.block_index()
    gV[np.arange(n), idx, idx] = 1.0
    return gV


def grad_moments(cap: CapacitanceData, kstar=None):
    """Density g^m_j = psi_j K*[psi_tilde] + psi_tilde K*[psi_j] - nu_d psi_j."""
    grid = cap.grid
    K = kstar if kstar is not None else layerpot.assemble_adjoint_double_layer(grid)
    kp = K.matrix @ cap.psi
    kpt = K.matrix @ cap.psi_tilde
    nu_d = grid.normals[:, 1]
    return (
        cap.psi * kpt[:, None]
        + cap.psi_tilde[:, None] * kp
        - nu_d[:, None] * cap.psi
    )


def grad_eigs(cap: CapacitanceData, gC, gV):
    """Densities of the eigenpairs: g^lam0_j and the eigenvector field g^u_j.

    g^lam0_j = u_j^T (g^C - lam_j g^V) u_j,
    g^u_j = sum_{i != j} [u_j^T (g^C - lam_j g^V) u_i / (lam_j - lam_i)] u_i
            - (1/2) (u_j^T g^V u_j) u_j.

    Refuses nearly degenerate spectra (the formulas divide by lam_j - lam_i).
    """
    lam, u = cap.lam, cap.u
    nres = len(lam)
    if nres > 1:
        gap = np.min(np.diff(np.sort(lam))) / np.max(np.abs(lam))
        if gap < DEGENERATE_GAP_REFUSE:
            raise DegenerateSpectrumError(
                f"degenerate spectrum (relative gap {gap:.2e} < {DEGENERATE_GAP_REFUSE:g})"
            )
    # q[x, i, j] = u_i^T (g^C(x) - lam_j g^V(x)) u_j
    gCu = np.einsum("xab,bj->xaj", gC, u)
    gVu = np.einsum("xab,bj->xaj", gV, u)
    uq = np.einsum("ai,xaj->xij", u, gCu)
    uv = np.einsum("ai,xaj->xij", u, gVu)
    glam0 = np.stack([uq[:, j, j] - lam[j] * uv[:, j, j] for j in range(nres)], axis=1)
    gu = np.zeros((gC.shape[0], nres, nres))
    for j in range(nres):
        coef = np.zeros((gC.shape[0], nres))
        for i in range(nres):
            if i == j:
                continue
            coef[:, i] = (uq[:, i, j] - lam[j] * uv[:, i, j]) / (lam[j] - lam[i])
        gu[:, j, :] = coef @ u.T
        gu[:, j, :] -= 0.5 * uv[:, j, j][:, None] * u[:, j]
    return glam0, gu


def grad_radiative_widths(cap: CapacitanceData, gu, gm, materials):
    """g^lam1_j = (2 tau_m (m^T u_j) / |Y|) (m^T g^u_j + u_j^T g^m)."""
    mtu = cap.m @ cap.u
    m_gu = np.einsum("b,xjb->xj", cap.m, gu)
    u_gm = gm @ cap.u
    return (2.0 * materials.tau_m / cap.cell_measure) * mtu[None, :] * (m_gu + u_gm)


def gradient_densities(cap: CapacitanceData, materials, kstar=None) -> ShapeGradients:
    """All modal Hadamard densities for one geometry in one pass."""
    if cap.lam is None or cap.m is None:
        raise ValueError("capacitance data must carry moments and eigenpairs")
    grid = cap.grid
    K = kstar if kstar is not None else layerpot.assemble_adjoint_double_layer(grid)
    gC = grad_capacitance(cap, kstar=K)
    gV = grad_volume(cap)
    gm = grad_moments(cap, kstar=K)
    glam0, gu = grad_eigs(cap, gC, gV)
    glam1 = grad_radiative_widths(cap, gu, gm, materials)
    return ShapeGradients(cap=cap, gC=gC, gV=gV, gm=gm, glam0=glam0, gu=gu, glam1=glam1)


def grad_reflection(model: RomModel, grads: ShapeGradients, omega):
    """Complex density of r(omega):

    g^r = - sum_j 2 i omega [(lam_j - lam(omega)) g^lam1_j - lam1_j g^lam0_j]
          / (lam_j - i omega lam1_j - lam(omega))^2.
    """
    omega = float(omega)
    lam_w = lambda_of_omega(model, omega)
    den = model.lam - 1j * omega * model.lam1 - lam_w
    if np.any(den == 0):
        raise ValueError("resonant singularity: modal denominator vanished")
    num = (model.lam - lam_w) * grads.glam1 - model.lam1 * grads.glam0
    return -np.sum(2j * omega * num / den**2, axis=1)


def grad_objective_ref(model: RomModel, grads: ShapeGradients, band, n_quad: int = 64):
    """Real density of the band-averaged reflectance J^ref.

    g^ref = (2 / (omega_max - omega_min)) int Re(conj(r) g^r) domega, on the
    same Gauss-Legendre nodes as the objective value.
    """
    nodes, weights = band_quadrature(band, n_quad)
    out = np.zeros(grads.glam0.shape[0])
    for om, wq in zip(nodes, weights):
        r = rom.reflection_rom(model, float(om), warn_band=False)
        gr = grad_reflection(model, grads, om)
        out += wq * np.real(np.conj(r) * gr)
    return 2.0 * out / (band[1] - band[0])


def grad_objective_res(model: RomModel, grads: ShapeGradients, targets):
    """Real density of the resonance-matching objective J^res.

    g^res = (2/M) sum_j [ (lam_j/Re lam(w_j*) - 1) g^lam0_j / Re lam(w_j*)
                        + (w_j* lam1_j/Im lam(w_j*) - 1) w_j* g^lam1_j / Im lam(w_j*) ].

    Targets are assigned to the M lowest modes in ascending order.
    """
    targets = np.asarray(targets, dtype=float)
    m_t = len(targets)
    if m_t > model.n_modes:
        raise ValueError("more targets than modes")
    lam_w = lambda_of_omega(model, targets)
    re_l, im_l = np.real(lam_w), np.imag(lam_w)
    if np.any(im_l == 0):
        raise ValueError("J^res undefined: Im lambda(omega*) = 0 (lossless material)")
    out = np.zeros(grads.glam0.shape[0])
    for j in range(m_t):
        out += (model.lam[j] / re_l[j] - 1.0) * grads.glam0[:, j] / re_l[j]
        out += (
            (targets[j] * model.lam1[j] / im_l[j] - 1.0)
            * targets[j]
            * grads.glam1[:, j]
            / im_l[j]
        )
    return (2.0 / m_t) * out


def normal_velocities(grid) -> np.ndarray:
    """theta_p . nu at every node for every design parameter (params x nodes).

    Velocity fields vanish outside their own resonator, so the matrix is
    block sparse; rows follow the per-shape layout of shapes_to_params.
    """
    orders = {p.order for p in grid.shapes}
    if len(orders) != 1:
        raise ValueError("all shapes must share one Fourier order")
    order = orders.pop()
    npp = params_per_shape(order)
    out = np.zeros((npp * grid.n_res, grid.n_total))
    t = grid.t[: grid.n_pts]
    for j, p in enumerate(grid.shapes):
        b = grid.block(j)
        nu = grid.normals[b]
        for q in range(npp):
            theta = velocity_field(p, q, t)
            out[j * npp + q, b] = np.einsum("ki,ki->k", theta, nu)
    return out


def parametric_gradient(density, grid, velocities=None):
    """Chain rule onto the design vector: dJ/dp = sum_k g (theta_p . nu) w_k.

    ``density`` has the node axis first and may be scalar, vector or matrix
    valued (complex allowed); the result prepends the parameter axis.
    """
    vel = velocities if velocities is not None else normal_velocities(grid)
    values = density.values if isinstance(density, GradientDensity) else np.asarray(density)
    return np.tensordot(vel * grid.weights[None, :], values, axes=(1, 0))
