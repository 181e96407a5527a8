"""Reduced-order model: resonances, reflection coefficient, absorptance, impedance.

Everything frequency-dependent costs O(N) per frequency once the capacitance
quantities are known.  The modal reflection coefficient is

    r(omega) = -1 - sum_j 2 i omega lam1_j / (lam_j - i omega lam1_j - lam(omega)),

with lam(omega) = omega^2 / (delta v_b^2) and the radiative widths
lam1_j = tau_m (m^T u_j)^2 / |Y|.  The O(omega) corrections of the underlying
expansion are dropped; agreement with the full-order solver is the accuracy
contract.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .capacitance import CapacitanceData

__all__ = [
    "MaterialParams",
    "RomModel",
    "lambda_of_omega",
    "radiative_widths",
    "resonant_frequencies",
    "build_rom",
    "reflection_rom",
    "absorptance",
    "impedance_from_reflection",
    "impedance_gamma",
    "band_quadrature",
]


@dataclass(frozen=True)
class MaterialParams:
    """Wave speeds, contrast and incidence of the scattering problem.

    The time convention is e^{-i omega t}, so losses mean Im(v_b) <= 0.
    theta_d is the vertical component of the unit incidence direction
    (1 for normal incidence); tau_m = theta_d / v_m.
    """

    v_m: float = 1.0
    v_b: complex = 1.0 - 0.05j
    delta: float = 0.001
    theta_d: float = 1.0

    def __post_init__(self):
        if self.v_m <= 0:
            raise ValueError("background speed v_m must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError("contrast must be in (0, 1)")
        if complex(self.v_b).real <= 0:
            raise ValueError("Re(v_b) must be positive")
        if complex(self.v_b).imag > 0:
            raise ValueError("Im(v_b) must be <= 0 (lossy convention)")
        if not 0.0 < self.theta_d <= 1.0:
            raise ValueError("theta_d must be in (0, 1]")
        if self.delta > 0.05:
            warnings.warn("contrast delta > 0.05: outside the asymptotic regime")
        object.__setattr__(self, "v_b", complex(self.v_b))

    @property
    def tau_m(self) -> float:
        return self.theta_d / self.v_m

    @property
    def lossless(self) -> bool:
        return self.v_b.imag == 0.0


@dataclass(frozen=True)
class RomModel:
    """Frequency-independent modal quantities plus material constants."""

    lam: np.ndarray
    lam1: np.ndarray
    materials: MaterialParams
    cell_measure: float

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float)
        lam1 = np.asarray(self.lam1, dtype=float)
        if lam.shape != lam1.shape:
            raise ValueError("lam and lam1 must have matching shapes")
        if np.any(lam1 < -1e-15):
            raise ValueError("radiative widths must be nonnegative")
        lam.setflags(write=False)
        lam1.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "lam1", np.maximum(lam1, 0.0))

    @property
    def n_modes(self) -> int:
        return len(self.lam)

    @property
    def omega_max_single_mode(self) -> float:
        return 2.0 * np.pi / self.cell_measure * self.materials.v_m


def lambda_of_omega(model_or_materials, omega):
    """Material scaling lambda(omega) = omega^2 / (delta v_b^2)."""
    mats = (
        model_or_materials.materials
        if isinstance(model_or_materials, RomModel)
        else model_or_materials
    )
    if mats.delta == 0:
        raise ValueError("contrast delta must be nonzero")
    omega = np.asarray(omega, dtype=float)
    return omega * omega / (mats.delta * mats.v_b**2)


def radiative_widths(cap: CapacitanceData, materials: MaterialParams) -> np.ndarray:
    """lam1_j = tau_m (m^T u_j)^2 / |Y|; invariant under eigenvector sign flips."""
    if cap.u is None or cap.m is None:
        raise ValueError("capacitance data must carry moments and eigenpairs")
    mtu = cap.m @ cap.u
    return materials.tau_m * mtu**2 / cap.cell_measure


def resonant_frequencies(cap: CapacitanceData, materials: MaterialParams) -> np.ndarray:
    """Leading-order complex resonances omega_j.

    omega_j = v_b sqrt(delta lam_j) - i tau_m v_b^2 (m^T u_j)^2 delta / (2 |Y|).
    For real v_b these sit in the (closed) lower half plane.
    """
    if cap.u is None or cap.m is None:
        raise ValueError("capacitance data must carry moments and eigenpairs")
    mats = materials
    mtu = cap.m @ cap.u
    lead = mats.v_b * np.sqrt(mats.delta * cap.lam.astype(complex))
    damp = 1j * mats.tau_m * mats.v_b**2 * mtu**2 * mats.delta / (2.0 * cap.cell_measure)
    return lead - damp


def build_rom(cap: CapacitanceData, materials: MaterialParams) -> RomModel:
    return RomModel(
        lam=cap.lam.copy(),
        lam1=radiative_widths(cap, materials),
        materials=materials,
        cell_measure=cap.cell_measure,
    )


def reflection_rom(model: RomModel, omega, warn_band: bool = True):
    """Modal reflection coefficient r(omega); vectorized over omega."""
    omega = np.asarray(omega, dtype=float)
    if warn_band and np.any(omega >= model.omega_max_single_mode):
        warnings.warn("frequency outside the validated single-mode band")
    om = omega[..., None]
    den = model.lam - 1j * om * model.lam1 - lambda_of_omega(model, omega)[..., None]
    if np.any(den == 0):
        raise ValueError("resonant singularity: modal denominator vanished")
    r = -1.0 - np.sum(2j * om * model.lam1 / den, axis=-1)
    return complex(r) if omega.ndim == 0 else r


def absorptance(model: RomModel, omega):
    """A(omega) = 1 - |r|^2, returned unclamped (may be slightly negative)."""
    r = reflection_rom(model, omega)
    return 1.0 - np.abs(r) ** 2


def impedance_from_reflection(r, omega, tau_m):
    """gamma = (1 + r) / (i omega tau_m (1 - r)); infinite at r = 1."""
    r = np.asarray(r)
    if np.any(r == 1.0):
        raise ValueError("sound-hard limit, impedance infinite")
    return (1.0 + r) / ((1.0 - r) * 1j * np.asarray(omega, dtype=float) * tau_m)


def impedance_gamma(model: RomModel, omega):
    """Effective impedance of the macroscopic boundary condition at omega."""
    return impedance_from_reflection(
        reflection_rom(model, omega), omega, model.materials.tau_m
    )


def band_quadrature(band, n_quad: int):
    """Gauss-Legendre nodes and weights on [omega_min, omega_max].

    Shared by the band-averaged objective and its shape gradient so that
    finite-difference checks see one and the same discrete functional.
    """
    lo, hi = band
    if not lo < hi:
        raise ValueError("band must satisfy omega_min < omega_max")
    x, w = np.polynomial.legendre.leggauss(n_quad)
    nodes = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
    weights = 0.5 * (hi - lo) * w
    return nodes, weights
