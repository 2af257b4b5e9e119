import numpy as np
import pytest

from rabisense.hilbert import (
    ANCILLA_D,
    ANCILLA_E,
    ANCILLA_G,
    QUBIT_DOWN,
    QUBIT_UP,
    ConfigurationError,
    DegenerateStateError,
    HilbertSpec,
    QuantumState,
    SparseOperator,
    ancilla_projector,
    ancilla_transition,
    build_ladder,
    build_pauli,
    default_fock_dim,
    expectation,
    fock_state,
    number_operator,
    top_fock_population,
)


def test_spec_dimensions():
    assert HilbertSpec(4).dim == 4
    assert HilbertSpec(4, has_system_qubit=True).dim == 8
    assert HilbertSpec(4, has_system_qubit=True, has_ancilla=True).dim == 24
    with pytest.raises(ValueError):
        HilbertSpec(1)


def test_index_ordering_phonon_slowest():
    space = HilbertSpec(3, has_system_qubit=True, has_ancilla=True)
    # |n⟩|q⟩|a⟩ -> (n*2+q)*3+a
    assert space.index(0, QUBIT_DOWN, ANCILLA_G) == 0
    assert space.index(0, QUBIT_UP, ANCILLA_D) == 5
    assert space.index(2, QUBIT_UP, ANCILLA_E) == 16


def test_ladder_two_level_matrix():
    space = HilbertSpec(2)
    c, cdag = build_ladder(space)
    assert np.allclose(c.to_dense(), [[0, 1], [0, 0]])
    assert np.allclose(cdag.to_dense(), [[0, 0], [1, 0]])


def test_number_operator_diagonal():
    space = HilbertSpec(5)
    c, cdag = build_ladder(space)
    n_from_ladder = (cdag.matrix @ c.matrix).toarray()
    assert np.allclose(n_from_ladder, np.diag(np.arange(5)))
    assert np.allclose(number_operator(space).to_dense(), np.diag(np.arange(5.0)))


def test_fock_one_expectation():
    space = HilbertSpec(4)
    state = fock_state(space, n=1)
    assert expectation(state, number_operator(space)) == pytest.approx(1.0)
    assert expectation(fock_state(space, 0), number_operator(space)) == pytest.approx(0.0)


def test_unnormalized_state_expectation():
    space = HilbertSpec(4)
    raw = np.zeros(space.dim, dtype=complex)
    raw[space.index(0)] = 2.0
    state = QuantumState(space, "pure", raw)
    assert expectation(state, number_operator(space)) == pytest.approx(0.0)
    phys = state.physical()
    assert phys.weight == pytest.approx(1.0)


def test_pauli_algebra():
    space = HilbertSpec(2, has_system_qubit=True)
    sx = build_pauli(space, "x").to_dense()
    sz = build_pauli(space, "z").to_dense()
    sy = build_pauli(space, "y").to_dense()
    ident = np.eye(space.dim)
    assert np.allclose(sz @ sz, ident)
    assert np.allclose(sx @ sz, -sz @ sx)
    assert np.allclose(sx @ sy, 1j * sz @ np.kron(np.eye(2), np.eye(2)))
    assert np.trace(sz) == pytest.approx(0.0)
    # σ_z|down⟩ = -|down⟩ fixes the sign convention used by the Hamiltonians
    down = fock_state(space, 0, qubit=QUBIT_DOWN)
    assert expectation(down, build_pauli(space, "z")) == pytest.approx(-1.0)


def test_pauli_requires_qubit():
    with pytest.raises(ConfigurationError):
        build_pauli(HilbertSpec(2), "z")


def test_ancilla_operators():
    space = HilbertSpec(2, has_ancilla=True)
    t_eg = ancilla_transition(space, ANCILLA_E, ANCILLA_G)
    state = fock_state(space, 0, ancilla=ANCILLA_G)
    lifted = QuantumState(space, "pure", t_eg.matrix @ state.amplitudes)
    assert expectation(lifted, ancilla_projector(space, ANCILLA_E)) == pytest.approx(1.0)
    with pytest.raises(ConfigurationError):
        ancilla_transition(HilbertSpec(2), ANCILLA_E, ANCILLA_G)


def test_hermitian_flag_verified():
    space = HilbertSpec(2)
    c, _ = build_ladder(space)
    with pytest.raises(ValueError):
        SparseOperator(space, c.matrix, hermitian=True)


def test_tensor_product_expectation_factorizes():
    # ⟨A ⊗ I⟩ on a product state equals the single-factor expectation
    rng = np.random.default_rng(7)
    space = HilbertSpec(4, has_system_qubit=True)
    phonon = rng.normal(size=4) + 1j * rng.normal(size=4)
    qubit = rng.normal(size=2) + 1j * rng.normal(size=2)
    product = np.kron(phonon, qubit)
    state = QuantumState(space, "pure", product)
    n_full = expectation(state, number_operator(space))
    n_factor = (np.abs(phonon) ** 2 @ np.arange(4)) / (np.abs(phonon) ** 2).sum()
    assert abs(n_full - n_factor) < 1e-10


def test_builders_are_pure():
    space = HilbertSpec(6, has_system_qubit=True, has_ancilla=True)
    a = build_ladder(space)[0].matrix
    b = build_ladder(space)[0].matrix
    assert np.array_equal(a.data, b.data)
    assert np.array_equal(a.indices, b.indices)
    assert np.array_equal(a.indptr, b.indptr)


def test_degenerate_state_raises():
    space = HilbertSpec(2)
    zero = QuantumState(space, "pure", np.zeros(2, dtype=complex))
    with pytest.raises(DegenerateStateError):
        expectation(zero, number_operator(space))


def test_top_fock_population():
    space = HilbertSpec(3, has_system_qubit=True)
    state = fock_state(space, n=2, qubit=QUBIT_UP)
    assert top_fock_population(state) == pytest.approx(1.0)
    assert top_fock_population(fock_state(space, 0)) == pytest.approx(0.0)


def test_density_state_validation():
    space = HilbertSpec(2)
    with pytest.raises(ValueError):
        QuantumState(space, "density", np.array([[0.5, 0.4], [0.1, 0.5]], dtype=complex))


def test_default_fock_dim_rule():
    assert default_fock_dim(50) == int(np.ceil(4 * np.sqrt(50))) + 10
