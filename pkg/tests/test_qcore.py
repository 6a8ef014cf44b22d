import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sgqtlab.qcore import (
    PSI_MINUS,
    PSI_PLUS,
    SIGMA_I,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    BlochVector,
    DensityMatrix,
    PauliOp,
    PureState,
    bloch_from_state,
    density_from_pauli_table,
    expectation,
    fidelity,
    haar_random_state,
    ket,
    pauli,
    pauli_expectation,
    pauli_table,
    random_density_matrix,
    state_from_bloch,
    tensor,
    two_qubit_paulis,
)

from conftest import pure_states

ZERO, ONE = ket("0"), ket("1")
PLUS = PureState([1, 1])
PLUS_I = PureState([1, 1j])


# -- states ------------------------------------------------------------------


@given(pure_states(2))
def test_pure_state_is_normalized(psi):
    assert abs(np.linalg.norm(psi.amplitudes) - 1) < 1e-12


@given(pure_states(4))
def test_two_qubit_state_normalized_and_sized(psi):
    assert psi.dim == 4 and psi.n_qubits == 2
    assert abs(np.linalg.norm(psi.amplitudes) - 1) < 1e-12


@pytest.mark.parametrize("bad", [[1, 0, 0], [0, 0], [1]])
def test_pure_state_rejects_bad_input(bad):
    with pytest.raises(ValueError):
        PureState(bad)


def test_pure_state_equality_ignores_global_phase():
    assert PureState([1, 1j]) == PureState([1j, -1])
    assert PureState([1, 0]) != PureState([0, 1])


def test_pure_state_is_immutable_and_picklable():
    psi = PureState([0.6, 0.8j])
    with pytest.raises(AttributeError):
        psi.amplitudes = None
    with pytest.raises(ValueError):
        psi.amplitudes[0] = 1
    assert pickle.loads(pickle.dumps(psi)) == psi
    rho = psi.density()
    assert np.allclose(pickle.loads(pickle.dumps(rho)).elements, rho.elements)


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        DensityMatrix([[1, 0], [0, 1]])  # trace 2
    with pytest.raises(ValueError):
        DensityMatrix([[1.5, 0], [0, -0.5]])
    with pytest.raises(ValueError):
        DensityMatrix([[0.5, 0.5j], [0.5j, 0.5]])  # not Hermitian
    assert np.allclose(DensityMatrix.maximally_mixed(4).elements, np.eye(4) / 4)


# -- expectation ---------------------------------------------------------------


def test_expectation_examples():
    assert expectation(ZERO.density(), ZERO) == 1.0
    assert expectation(ZERO.density(), PLUS) == pytest.approx(0.5, abs=1e-15)
    assert expectation(PSI_MINUS.density(), ket("01")) == pytest.approx(0.5, abs=1e-15)


def test_expectation_dimension_mismatch():
    with pytest.raises(ValueError):
        expectation(PSI_MINUS.density(), ZERO)


@given(pure_states(4), st.integers(0, 2**32 - 1))
def test_expectation_in_unit_interval(psi, seed):
    rho = random_density_matrix(4, np.random.default_rng(seed))
    assert 0.0 <= expectation(rho, psi) <= 1.0


def test_expectation_clamps_roundoff_only():
    m = np.diag([1 + 1e-11, -1e-11]).astype(complex)
    assert expectation(m, ZERO) == 1.0
    with pytest.raises(ValueError):
        expectation(np.diag([1.1, -0.1]), ZERO)


# -- Pauli -------------------------------------------------------------------


def test_pauli_expectation_examples():
    singlet = PSI_MINUS.density()
    assert pauli_expectation(singlet, pauli("ZZ")) == pytest.approx(-1.0, abs=1e-15)
    assert pauli_expectation(singlet, pauli("II")) == pytest.approx(1.0, abs=1e-15)
    assert pauli_expectation(DensityMatrix.maximally_mixed(2), pauli("X")) == 0.0
    with pytest.raises(ValueError):
        pauli_expectation(singlet, pauli("X"))


def test_pauli_labels_and_indices():
    ops = two_qubit_paulis()
    assert len(ops) == 16
    assert [op.index for op in ops] == list(range(16))
    assert pauli((1, 2)).name == "XY" and pauli((1, 2)).index == 6
    assert pauli(6, 2) == pauli("XY")
    with pytest.raises(ValueError):
        PauliOp((4,))
    with pytest.raises(ValueError):
        pauli(16, 2)


@pytest.mark.parametrize("op", two_qubit_paulis())
def test_pauli_matrices_hermitian_unitary_involutive(op):
    m = op.matrix
    assert np.allclose(m, m.conj().T, atol=0)
    assert np.allclose(m @ m, np.eye(4), atol=0)


def test_pauli_algebra_exact():
    assert np.array_equal(SIGMA_X @ SIGMA_Y, 1j * SIGMA_Z)
    assert np.array_equal(SIGMA_Y @ SIGMA_Z, 1j * SIGMA_X)
    assert np.array_equal(SIGMA_Z @ SIGMA_X, 1j * SIGMA_Y)


# -- fidelity ----------------------------------------------------------------


def test_fidelity_examples():
    assert fidelity(ZERO.density(), ZERO.density()) == pytest.approx(1.0, abs=1e-15)
    assert fidelity(ZERO.density(), ONE.density()) == pytest.approx(0.0, abs=1e-15)
    assert fidelity(ZERO.density(), DensityMatrix.maximally_mixed(2)) == pytest.approx(0.5, abs=1e-12)


def test_fidelity_rejects_non_psd():
    with pytest.raises(ValueError):
        fidelity(np.diag([1.2, -0.2]), np.diag([0.5, 0.5]))


@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 4]))
def test_fidelity_symmetric_and_bounded(seed, dim):
    rng = np.random.default_rng(seed)
    a, b = random_density_matrix(dim, rng), random_density_matrix(dim, rng)
    fab, fba = fidelity(a, b), fidelity(b, a)
    assert abs(fab - fba) < 1e-9
    assert 0.0 <= fab <= 1.0
    assert fidelity(a, a) == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 2**32 - 1))
def test_fidelity_pure_matches_expectation(seed):
    rng = np.random.default_rng(seed)
    psi, rho = haar_random_state(4, rng), random_density_matrix(4, rng)
    assert fidelity(psi, rho) == pytest.approx(expectation(rho, psi), abs=1e-12)
    # the matrix-square-root path must agree on a rank-one input
    assert fidelity(np.array(psi.density().elements), rho) == pytest.approx(expectation(rho, psi), abs=1e-7)


def test_uhlmann_fidelity_oracle_commuting_states():
    # commuting states: F = (sum sqrt(p_i q_i))**2
    p, q = np.array([0.7, 0.2, 0.1, 0.0]), np.array([0.25, 0.25, 0.25, 0.25])
    assert fidelity(np.diag(p), np.diag(q)) == pytest.approx(np.sum(np.sqrt(p * q)) ** 2, abs=1e-12)


# -- Bloch ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "psi, xyz",
    [(ZERO, (0, 0, 1)), (PLUS, (1, 0, 0)), (PLUS_I, (0, 1, 0)), (ONE, (0, 0, -1))],
)
def test_bloch_examples(psi, xyz):
    assert np.allclose(bloch_from_state(psi).as_array(), xyz, atol=1e-15)


@given(pure_states(2))
def test_bloch_round_trip(psi):
    v = bloch_from_state(psi)
    assert abs(v.length - 1) < 1e-10
    assert state_from_bloch(v).overlap(psi) == pytest.approx(1.0, abs=1e-10)


def test_bloch_rejects_non_unit():
    with pytest.raises(ValueError):
        state_from_bloch(BlochVector(0.5, 0, 0))
    with pytest.raises(ValueError):
        BlochVector(1, 1, 0)


# -- tensor and Pauli table ----------------------------------------------------


def test_tensor_examples():
    assert np.array_equal(tensor(SIGMA_I, SIGMA_I), np.eye(4))
    assert tensor(ZERO, ONE) == ket("01")
    zz = tensor(SIGMA_Z, SIGMA_Z)
    assert np.allclose(zz @ PSI_MINUS.amplitudes, -PSI_MINUS.amplitudes)


def test_pauli_table_singlet():
    t = pauli_table(PSI_MINUS)
    expected = np.zeros((4, 4))
    expected[0, 0] = 0.25
    for i in (1, 2, 3):
        expected[i, i] = -0.25
    assert np.allclose(t, expected, atol=1e-15)


def test_pauli_table_zero_zero():
    t = pauli_table(ket("00"))
    expected = np.zeros((4, 4))
    expected[0, 0] = expected[0, 3] = expected[3, 0] = expected[3, 3] = 0.25
    assert np.allclose(t, expected, atol=1e-15)


def test_pauli_table_psi_plus_differs_in_xx_yy():
    t = pauli_table(PSI_PLUS)
    assert t[1, 1] == pytest.approx(0.25) and t[2, 2] == pytest.approx(0.25) and t[3, 3] == pytest.approx(-0.25)


@given(pure_states(4))
def test_pauli_table_round_trip_and_independent_path(psi):
    t = pauli_table(psi)
    assert t[0, 0] == pytest.approx(0.25, abs=1e-15)
    assert np.all(np.abs(t) <= 0.25 + 1e-12)
    rho = psi.density()
    for op in two_qubit_paulis():
        i, j = op.label
        assert 4 * t[i, j] == pytest.approx(pauli_expectation(rho, op), abs=1e-12)
    assert fidelity(psi, density_from_pauli_table(t)) == pytest.approx(1.0, abs=1e-10)


def test_pauli_table_wrong_dimension():
    with pytest.raises(ValueError):
        pauli_table(ZERO)


def test_random_density_matrix_rank():
    rho = random_density_matrix(4, np.random.default_rng(0), rank=1)
    assert np.sum(rho.eigvalsh() > 1e-10) == 1
