"""Truncated Hilbert-space plumbing shared by all physics modules.

Spaces are phonon ⊗ (system qubit) ⊗ (ancilla), with the phonon index slowest,
so the flat index of |n⟩|q⟩|a⟩ is (n*2 + q)*3 + a when both factors are
present.  Qubit levels are ordered (down, up) so σ_z = diag(-1, +1); ancilla
levels are ordered (g, e, d).  States persisted with this ordering are
portable across versions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

HERMITICITY_TOL = 1e-12

QUBIT_DOWN, QUBIT_UP = 0, 1
ANCILLA_G, ANCILLA_E, ANCILLA_D = 0, 1, 2


class ConfigurationError(ValueError):
    """Requested an operator the space does not support."""


class DegenerateStateError(ZeroDivisionError):
    """Expectation value of a state with vanishing norm or trace."""


@dataclass(frozen=True)
class HilbertSpec:
    """Dimensions of a truncated phonon ⊗ qubit ⊗ ancilla space.

    fock_dim is the phonon truncation (levels 0 .. fock_dim-1); the qubit
    factor has dimension 2 and the ancilla factor dimension 3 when enabled.
    """

    fock_dim: int
    has_system_qubit: bool = False
    has_ancilla: bool = False

    def __post_init__(self):
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise ValueError(f"fock_dim must be an integer >= 2, got {self.fock_dim}")

    @property
    def qubit_dim(self) -> int:
        return 2 if self.has_system_qubit else 1

    @property
    def ancilla_dim(self) -> int:
        return 3 if self.has_ancilla else 1

    @property
    def sub_dim(self) -> int:
        """Dimension of everything below the phonon index."""
        return self.qubit_dim * self.ancilla_dim

    @property
    def dim(self) -> int:
        return self.fock_dim * self.sub_dim

    def index(self, n: int, qubit: int = 0, ancilla: int = 0) -> int:
        """Flat index of |n⟩|qubit⟩|ancilla⟩."""
        if not 0 <= n < self.fock_dim:
            raise ValueError(f"fock level {n} outside truncation {self.fock_dim}")
        if qubit and not self.has_system_qubit:
            raise ConfigurationError("space has no system qubit")
        if ancilla and not self.has_ancilla:
            raise ConfigurationError("space has no ancilla")
        return (n * self.qubit_dim + qubit) * self.ancilla_dim + ancilla

    def embed(self, phonon=None, qubit=None, ancilla=None) -> sp.csr_matrix:
        """Kronecker-embed single-factor matrices, identity on omitted factors."""
        f = sp.identity(self.fock_dim, format="csr") if phonon is None else sp.csr_matrix(phonon)
        q = sp.identity(self.qubit_dim, format="csr") if qubit is None else sp.csr_matrix(qubit)
        a = sp.identity(self.ancilla_dim, format="csr") if ancilla is None else sp.csr_matrix(ancilla)
        if qubit is not None and not self.has_system_qubit:
            raise ConfigurationError("space has no system qubit")
        if ancilla is not None and not self.has_ancilla:
            raise ConfigurationError("space has no ancilla")
        out = sp.kron(sp.kron(f, q, format="csr"), a, format="csr")
        out.sort_indices()
        return out


@dataclass(frozen=True)
class SparseOperator:
    """A CSR matrix tied to its HilbertSpec, with an optional verified Hermitian flag."""

    space: HilbertSpec
    matrix: sp.csr_matrix
    hermitian: bool = False

    def __post_init__(self):
        m = self.matrix
        if m.shape[0] != m.shape[1] or m.shape[0] != self.space.dim:
            raise ValueError(f"operator shape {m.shape} does not match space dim {self.space.dim}")
        if self.hermitian:
            resid = abs(m - m.getH()).max() if m.nnz else 0.0
            if resid >= HERMITICITY_TOL:
                raise ValueError(f"operator flagged Hermitian but ‖A-A†‖_max = {resid:.3e}")

    def dag(self) -> "SparseOperator":
        return SparseOperator(self.space, self.matrix.getH().tocsr(), self.hermitian)

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()


def _operator(space: HilbertSpec, matrix, hermitian=False) -> SparseOperator:
    m = sp.csr_matrix(matrix, dtype=np.complex128)
    m.sort_indices()
    return SparseOperator(space, m, hermitian)


def build_ladder(space: HilbertSpec) -> tuple[SparseOperator, SparseOperator]:
    """Return (c, c†) for the phonon mode, identity on the other factors.

    c|n⟩ = √n |n-1⟩ inside the truncation; the image of the top level stays
    in the space (the matrix simply has no row feeding level fock_dim).
    """
    n = np.arange(1, space.fock_dim)
    c_phonon = sp.diags(np.sqrt(n), offsets=1, shape=(space.fock_dim, space.fock_dim))
    c = _operator(space, space.embed(phonon=c_phonon))
    return c, c.dag()


def number_operator(space: HilbertSpec) -> SparseOperator:
    """c†c, diagonal with entries 0 .. fock_dim-1 on the phonon factor."""
    nvals = np.arange(space.fock_dim, dtype=float)
    return _operator(space, space.embed(phonon=sp.diags(nvals)), hermitian=True)


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, 1j], [-1j, 0]], dtype=complex),
    "z": np.array([[-1, 0], [0, 1]], dtype=complex),  # (down, up) ordering
}


def build_pauli(space: HilbertSpec, which: str) -> SparseOperator:
    """Pauli matrix on the system-qubit factor, identity elsewhere."""
    if not space.has_system_qubit:
        raise ConfigurationError("space has no system qubit")
    if which not in _PAULI:
        raise ValueError(f"unknown Pauli axis {which!r}")
    return _operator(space, space.embed(qubit=_PAULI[which]), hermitian=True)


def ancilla_transition(space: HilbertSpec, upper: int, lower: int) -> SparseOperator:
    """|upper⟩⟨lower| on the three-level ancilla factor."""
    if not space.has_ancilla:
        raise ConfigurationError("space has no ancilla")
    m = np.zeros((3, 3), dtype=complex)
    m[upper, lower] = 1.0
    return _operator(space, space.embed(ancilla=m))


def ancilla_projector(space: HilbertSpec, level: int) -> SparseOperator:
    return _operator(space, ancilla_transition(space, level, level).matrix, hermitian=True)


@dataclass
class QuantumState:
    """Pure vector or density matrix, possibly unnormalized.

    norm_log accumulates the log of normalization removed along a conditional
    evolution, so the likelihood of a detection record can be read off as
    norm_log plus the log of the current norm/trace.
    """

    space: HilbertSpec
    kind: str  # "pure" | "density"
    amplitudes: np.ndarray
    norm_log: float = 0.0

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.kind == "pure":
            if a.shape != (self.space.dim,):
                raise ValueError(f"pure state needs shape ({self.space.dim},), got {a.shape}")
        elif self.kind == "density":
            if a.shape != (self.space.dim, self.space.dim):
                raise ValueError(f"density matrix needs shape ({self.space.dim},)*2, got {a.shape}")
            hresid = np.abs(a - a.conj().T).max()
            scale = max(np.abs(a).max(), 1e-300)
            if hresid > 1e-10 * scale:
                raise ValueError(f"density matrix not Hermitian: relative residue {hresid/scale:.3e}")
            tr = np.trace(a)
            if abs(tr.imag) > 1e-10 * max(abs(tr.real), 1e-300) or tr.real <= 0:
                raise ValueError(f"density matrix trace must be real positive, got {tr}")
        else:
            raise ValueError(f"unknown state kind {self.kind!r}")
        self.amplitudes = a

    @property
    def weight(self) -> float:
        """Squared norm (pure) or trace (density) of the raw amplitudes."""
        if self.kind == "pure":
            return float(np.vdot(self.amplitudes, self.amplitudes).real)
        return float(np.trace(self.amplitudes).real)

    def physical(self) -> "QuantumState":
        """Unit-norm / unit-trace copy (the measurable conditional state)."""
        w = self.weight
        if w <= 0.0 or not np.isfinite(w):
            raise DegenerateStateError("state has vanishing norm/trace")
        scale = 1.0 / np.sqrt(w) if self.kind == "pure" else 1.0 / w
        return QuantumState(self.space, self.kind, self.amplitudes * scale, 0.0)

    def density(self) -> np.ndarray:
        """Dense density matrix of the raw (unnormalized) state."""
        if self.kind == "pure":
            return np.outer(self.amplitudes, self.amplitudes.conj())
        return np.array(self.amplitudes)


def fock_state(space: HilbertSpec, n: int = 0, qubit: int = QUBIT_DOWN,
               ancilla: int = ANCILLA_G, kind: str = "pure") -> QuantumState:
    """Product basis state |n⟩|qubit⟩|ancilla⟩ (defaults: everything in its ground level)."""
    idx = space.index(n, qubit if space.has_system_qubit else 0,
                      ancilla if space.has_ancilla else 0)
    vec = np.zeros(space.dim, dtype=np.complex128)
    vec[idx] = 1.0
    if kind == "pure":
        return QuantumState(space, "pure", vec)
    return QuantumState(space, "density", np.outer(vec, vec.conj()))


def expectation(state: QuantumState, op: SparseOperator):
    """Normalized expectation ⟨A⟩ = ⟨ψ|A|ψ⟩/⟨ψ|ψ⟩ or tr(ρA)/tr(ρ).

    Hermitian-flagged operators return the real part after asserting the
    imaginary residue is below 1e-8.
    """
    if op.space.dim != state.space.dim:
        raise ValueError("operator/state dimension mismatch")
    w = state.weight
    if w <= 0.0 or not np.isfinite(w):
        raise DegenerateStateError("state has vanishing norm/trace")
    if state.kind == "pure":
        val = complex(np.vdot(state.amplitudes, op.matrix @ state.amplitudes)) / w
    else:
        val = complex((op.matrix @ state.amplitudes).trace()) / w
    if op.hermitian:
        assert abs(val.imag) < 1e-8 * max(1.0, abs(val.real)), \
            f"imaginary residue {val.imag:.3e} on Hermitian operator"
        return val.real
    return val


def top_fock_population(state: QuantumState) -> float:
    """Population of the highest retained phonon level (truncation-leakage monitor)."""
    space = state.space
    top = slice((space.fock_dim - 1) * space.sub_dim, space.dim)
    w = state.weight
    if w <= 0.0 or not np.isfinite(w):
        raise DegenerateStateError("state has vanishing norm/trace")
    if state.kind == "pure":
        return float(np.sum(np.abs(state.amplitudes[top]) ** 2)) / w
    return float(np.trace(state.amplitudes[top, top]).real) / w


def default_fock_dim(eta: float) -> int:
    """Truncation heuristic for critical-point runs: ceil(4√η) + 10.

    Sized for the η^(1/2) growth of the steady-state occupation at the
    critical point; override wherever the run is known to stay colder.
    """
    return int(np.ceil(4.0 * np.sqrt(eta))) + 10
