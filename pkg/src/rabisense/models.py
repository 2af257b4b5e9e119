"""Parameter containers, Hamiltonian builders, and analytic rate formulas.

All rates live in a common reference unit chosen by the caller (the CLI
defaults to units of the phonon dissipation rate); nothing in here carries
physical dimensions.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .hilbert import (
    ANCILLA_D,
    ANCILLA_E,
    ANCILLA_G,
    HilbertSpec,
    SparseOperator,
    ancilla_transition,
    build_ladder,
    build_pauli,
    number_operator,
)


@dataclass(frozen=True)
class RabiParams:
    """Sensor-model parameters: mode frequency, qubit splitting, coupling, damping."""

    omega: float
    Omega_q: float
    lambda_c: float
    kappa: float = 0.0

    def __post_init__(self):
        if self.omega < 0 or self.Omega_q < 0:
            raise ValueError("omega and Omega_q must be non-negative")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")

    @property
    def degenerate(self) -> bool:
        """omega == 0: allowed for decoupled-limit tests, unusable for sensing."""
        return self.omega == 0.0 or self.Omega_q == 0.0

    @property
    def eta(self) -> float:
        """Effective system size Omega_q/omega."""
        if self.degenerate:
            raise ZeroDivisionError("eta undefined for degenerate (omega or Omega_q zero) parameters")
        return self.Omega_q / self.omega

    @property
    def g(self) -> float:
        """Dimensionless coupling 2λ/√(ωΩ)."""
        if self.degenerate:
            raise ZeroDivisionError("g undefined for degenerate parameters")
        return 2.0 * self.lambda_c / np.sqrt(self.omega * self.Omega_q)


@dataclass(frozen=True)
class AncillaParams:
    """Phonon-detector parameters: strong carrier, weak sideband, decays, efficiency."""

    Omega_s: float
    Omega_w: float
    Gamma_s: float
    Gamma_w: float
    eta_ld2: float
    epsilon: float = 1.0

    def __post_init__(self):
        for name in ("Omega_s", "Omega_w", "Gamma_s", "Gamma_w"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")

    def regime_ok(self, threshold: float = 10.0) -> bool:
        """Strong/weak separation check: Omega_s/Omega_w and Gamma_s/Gamma_w >= threshold."""
        if self.Omega_w == 0.0 or self.Gamma_w == 0.0:
            return True
        return (self.Omega_s / self.Omega_w >= threshold
                and self.Gamma_s / self.Gamma_w >= threshold)

    @property
    def sideband_coupling(self) -> float:
        """Lamb-Dicke-weighted sideband strength η_LD2 * Omega_w."""
        return self.eta_ld2 * self.Omega_w


@dataclass(frozen=True)
class IonDriveParams:
    """Bichromatic drive of the system ion: sideband offsets, Rabi frequency, Lamb-Dicke."""

    delta_b: float
    delta_r: float
    Omega_0: float
    eta_ld: float

    def __post_init__(self):
        if not 0.0 < self.eta_ld < 1.0:
            raise ValueError("eta_ld must lie in (0, 1)")


@dataclass(frozen=True)
class NoiseParams:
    """Decoherence rates: spin dephasing, motional dephasing, heating, cooling."""

    gamma_dph: float = 0.0
    gamma_m: float = 0.0
    gamma_h: float = 0.0
    gamma_c: float = 0.0

    def __post_init__(self):
        for name in ("gamma_dph", "gamma_m", "gamma_h", "gamma_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def any_nonzero(self) -> bool:
        return any((self.gamma_dph, self.gamma_m, self.gamma_h, self.gamma_c))


@dataclass(frozen=True)
class RamanParams:
    """Repump-laser parameters setting the effective weak decay rate."""

    Omega_tilde_s: float
    Delta: float
    Gamma_s: float

    def __post_init__(self):
        if self.Gamma_s <= 0:
            raise ValueError("Gamma_s must be positive")


def critical_coupling(params: RabiParams) -> float:
    """Critical coupling g_c = sqrt(1 + (κ/ω)²) of the damped model."""
    if params.omega == 0.0:
        raise ZeroDivisionError("critical coupling undefined at omega = 0")
    return float(np.sqrt(1.0 + (params.kappa / params.omega) ** 2))


def tune_to_cp(omega: float, eta: float, kappa: float = 0.0,
               g_over_gc: float = 1.0) -> RabiParams:
    """RabiParams with Omega_q = η·ω and λ set so g = g_over_gc · g_c exactly."""
    if omega <= 0 or eta <= 0:
        raise ValueError("omega and eta must be positive")
    Omega_q = eta * omega
    g_c = np.sqrt(1.0 + (kappa / omega) ** 2)
    lambda_c = g_over_gc * g_c * np.sqrt(omega * Omega_q) / 2.0
    return RabiParams(omega=omega, Omega_q=Omega_q, lambda_c=lambda_c, kappa=kappa)


def build_rabi_hamiltonian(params: RabiParams, space: HilbertSpec) -> SparseOperator:
    """H = ω c†c + (Ω/2) σ_z − λ (c + c†) σ_x on the given space."""
    c, cdag = build_ladder(space)
    n = number_operator(space)
    sz = build_pauli(space, "z")
    sx = build_pauli(space, "x")
    h = (params.omega * n.matrix
         + 0.5 * params.Omega_q * sz.matrix
         - params.lambda_c * ((c.matrix + cdag.matrix) @ sx.matrix))
    return SparseOperator(space, sp.csr_matrix(h), hermitian=True)


def parity_operator(space: HilbertSpec) -> SparseOperator:
    """exp(iπ c†c) ⊗ σ_z, the conserved parity of the Rabi Hamiltonian."""
    signs = sp.diags((-1.0) ** np.arange(space.fock_dim))
    m = space.embed(phonon=signs) @ build_pauli(space, "z").matrix
    return SparseOperator(space, sp.csr_matrix(m), hermitian=True)


def rabi_from_ion(ion: IonDriveParams) -> RabiParams:
    """Map bichromatic-drive parameters to Rabi-model parameters (κ left zero).

    ω = (δ_b − δ_r)/2, Ω = (δ_b + δ_r)/2, λ = η_LD Ω₀ / 2.  Degenerate
    offsets (δ_b = δ_r) give ω = 0, which RabiParams flags rather than
    rejects.
    """
    return RabiParams(
        omega=(ion.delta_b - ion.delta_r) / 2.0,
        Omega_q=(ion.delta_b + ion.delta_r) / 2.0,
        lambda_c=ion.eta_ld * ion.Omega_0 / 2.0,
        kappa=0.0,
    )


def build_ancilla_hamiltonian(anc: AncillaParams, space: HilbertSpec) -> SparseOperator:
    """H_a = Ω_s(|d⟩⟨e| + |e⟩⟨d|) + η_LD2 Ω_w (|e⟩⟨g| c + |g⟩⟨e| c†)."""
    c, cdag = build_ladder(space)
    de = ancilla_transition(space, ANCILLA_D, ANCILLA_E).matrix
    eg = ancilla_transition(space, ANCILLA_E, ANCILLA_G).matrix
    h = (anc.Omega_s * (de + de.getH())
         + anc.sideband_coupling * (eg @ c.matrix + (eg @ c.matrix).getH()))
    return SparseOperator(space, sp.csr_matrix(h), hermitian=True)


def effective_kappa_analytic(anc: AncillaParams) -> float:
    """Order-of-magnitude cooling-rate estimate Γ_s (η_LD2 Ω_w)² / Ω_s².

    The inverse of the dark→bright cycle time with the Lamb-Dicke-weighted
    sideband coupling.  Good to a factor of a few; the fitted rate from the
    simulated detector dynamics is the authoritative value.
    """
    if anc.Omega_s <= 0:
        raise ZeroDivisionError("analytic kappa estimate undefined at Omega_s = 0")
    return anc.Gamma_s * anc.sideband_coupling ** 2 / anc.Omega_s ** 2


def enhancement_factor(anc: AncillaParams) -> float:
    """Detected photons per annihilated phonon, N_ph = ε Γ_s / Γ_w."""
    if anc.Gamma_w <= 0:
        raise ZeroDivisionError("enhancement factor undefined at Gamma_w = 0")
    return anc.epsilon * anc.Gamma_s / anc.Gamma_w


def emitted_per_phonon(anc: AncillaParams) -> float:
    """Photons emitted per annihilated phonon, N_em = Γ_s / Γ_w (detector-independent)."""
    if anc.Gamma_w <= 0:
        raise ZeroDivisionError("emission count undefined at Gamma_w = 0")
    return anc.Gamma_s / anc.Gamma_w


def weak_rate_raman(raman: RamanParams) -> float:
    """Effective |e⟩→|g⟩ rate from an off-resonant repump laser.

    Γ_w = (Γ_s/2) · s / (1 + s + (2Δ/Γ_s)²) with s = (2Ω̃_s/Γ_s)².
    """
    s = (2.0 * raman.Omega_tilde_s / raman.Gamma_s) ** 2
    d = (2.0 * raman.Delta / raman.Gamma_s) ** 2
    return 0.5 * raman.Gamma_s * s / (1.0 + s + d)


def shift_param(params: RabiParams, name: str, delta: float) -> RabiParams:
    """Copy of params with one scalar field shifted; used by likelihood replay."""
    if name not in ("omega", "Omega_q", "lambda_c", "kappa"):
        raise ValueError(f"cannot shift unknown parameter {name!r}")
    return replace(params, **{name: getattr(params, name) + delta})
