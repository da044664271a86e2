import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.linalg import expm

from robustpulse.quantum import (
    GEN_IM,
    GEN_RE,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    SQRT_HALF,
    NotSpecialUnitaryError,
    PulseMeta,
    QutritModel,
    cvec_to_unitary,
    qubit_generator,
    qubit_loss,
    qutrit_hamiltonian,
    qutrit_loss,
    qutrit_loss_grad,
    unitary_to_cvec,
)

finite = st.floats(-10, 10, allow_nan=False)
unit_vectors = st.lists(st.floats(-1, 1), min_size=4, max_size=4).filter(
    lambda v: np.linalg.norm(v) > 1e-3
).map(lambda v: np.asarray(v) / np.linalg.norm(v))


def _x90():
    return expm(-0.25j * np.pi * SIGMA_X)


class TestQubitGenerator:
    def test_real_drive(self):
        m = qubit_generator(1.0)
        assert m[0, 1] == -0.5 and m[1, 0] == 0.5
        assert np.allclose(m, GEN_RE)
        assert m[0, 2] == 0 and m[2, 0] == 0

    def test_zero_drive(self):
        assert np.array_equal(qubit_generator(0.0), np.zeros((4, 4)))

    def test_imaginary_drive(self):
        m = qubit_generator(1j)
        assert m[0, 2] == -0.5 and m[2, 0] == 0.5
        assert np.allclose(m, GEN_IM)
        assert m[0, 1] == 0 and m[1, 0] == 0

    @given(finite, finite)
    def test_antisymmetric(self, re, im):
        m = qubit_generator(complex(re, im))
        assert np.array_equal(m + m.T, np.zeros((4, 4)))

    @given(finite, finite)
    def test_matches_schrodinger_equation(self, re, im):
        # dU/dt = -i H U with H = (Re X + Im Y) / 2, written for c
        omega = complex(re, im)
        c = np.array([0.3, -0.2, 0.5, 0.7])
        c /= np.linalg.norm(c)
        h = 0.5 * (omega.real * SIGMA_X + omega.imag * SIGMA_Y)
        du = -1j * h @ cvec_to_unitary(c)
        # c is linear in U, so read the derivative off with the same map
        from robustpulse.quantum import block_cvec

        assert np.allclose(block_cvec(du), qubit_generator(omega) @ c, atol=1e-12)


class TestCvecToUnitary:
    def test_identity(self):
        assert np.allclose(cvec_to_unitary([1, 0, 0, 0]), np.eye(2))

    def test_x90(self):
        assert np.allclose(cvec_to_unitary([SQRT_HALF, SQRT_HALF, 0, 0]), _x90(), atol=1e-15)

    def test_z(self):
        assert np.allclose(cvec_to_unitary([0, 0, 0, 1]), -1j * SIGMA_Z)

    def test_rejects_unnormalized(self):
        with pytest.raises(ValueError, match="normalized"):
            cvec_to_unitary([1, 1, 0, 0])

    @given(unit_vectors)
    def test_special_unitary(self, c):
        u = cvec_to_unitary(c)
        assert np.allclose(u.conj().T @ u, np.eye(2), atol=1e-12)
        assert np.isclose(np.linalg.det(u), 1.0, atol=1e-12)


class TestUnitaryToCvec:
    def test_identity(self):
        assert np.allclose(unitary_to_cvec(np.eye(2)), [1, 0, 0, 0])

    def test_y90(self):
        u = expm(-0.25j * np.pi * SIGMA_Y)
        assert np.allclose(unitary_to_cvec(u), [np.cos(np.pi / 4), 0, np.sin(np.pi / 4), 0])

    @given(unit_vectors)
    def test_round_trip(self, c):
        assert np.allclose(unitary_to_cvec(cvec_to_unitary(c)), c, atol=1e-12)

    @given(unit_vectors)
    def test_inverse_round_trip(self, c):
        u = cvec_to_unitary(c)
        assert np.allclose(cvec_to_unitary(unitary_to_cvec(u)), u, atol=1e-8)

    def test_rejects_global_phase(self):
        with pytest.raises(NotSpecialUnitaryError, match="determinant"):
            unitary_to_cvec(1j * np.eye(2))

    def test_rejects_non_unitary(self):
        with pytest.raises(NotSpecialUnitaryError):
            unitary_to_cvec(np.array([[1, 1], [0, 1]]))


class TestQutritHamiltonian:
    def test_undriven(self):
        h = qutrit_hamiltonian(0, QutritModel(Delta=-2.5))
        assert np.allclose(h, np.diag([0, 0, -2.5]))

    def test_matrix_elements(self):
        h = qutrit_hamiltonian(1.0, QutritModel(Delta=0.0, lam=1.37))
        assert h[1, 0] == 0.5
        assert np.isclose(h[2, 1], 0.685)

    @given(finite, finite, finite)
    def test_hermitian(self, re, im, delta):
        h = qutrit_hamiltonian(complex(re, im), QutritModel(delta))
        assert np.array_equal(h, h.conj().T)

    def test_lambda_must_be_positive(self):
        with pytest.raises(ValueError, match="lam"):
            QutritModel(Delta=1.0, lam=0.0)

    @pytest.mark.parametrize(
        "duration, expected", [(60e-9, -83.82), (20e-9, -27.94)]
    )
    def test_from_physical(self, duration, expected):
        model = QutritModel.from_physical(-222.34e6, duration)
        assert model.Delta == pytest.approx(expected, abs=5e-3)


class TestQubitLoss:
    @pytest.mark.parametrize(
        "c, expected",
        [
            ([SQRT_HALF, SQRT_HALF, 0, 0], 0.0),
            ([1, 0, 0, 0], (1 - SQRT_HALF) ** 2),
            ([SQRT_HALF, 0, 0, SQRT_HALF], 0.5),
        ],
    )
    def test_values(self, c, expected):
        assert qubit_loss(c) == pytest.approx(expected, abs=1e-15)

    def test_identity_value(self):
        assert qubit_loss([1, 0, 0, 0]) == pytest.approx(0.085786, abs=1e-6)

    @given(unit_vectors)
    def test_non_negative(self, c):
        assert qubit_loss(c) >= 0

    @given(st.floats(-np.pi, np.pi))
    def test_zero_loss_implies_equatorial_axis(self, phi):
        c = np.array([SQRT_HALF, SQRT_HALF * np.cos(phi), SQRT_HALF * np.sin(phi), 0.0])
        assert qubit_loss(c) == pytest.approx(0, abs=1e-15)
        assert c[1] ** 2 + c[2] ** 2 == pytest.approx(0.5)


def _embed(u2, phase=1.0):
    u = np.zeros((3, 3), dtype=complex)
    u[:2, :2] = u2
    u[2, 2] = phase
    return u


class TestQutritLoss:
    def test_target_with_phase(self):
        assert qutrit_loss(_embed(_x90(), np.exp(0.7j))) == pytest.approx(0, abs=1e-15)

    def test_global_phase_on_block_is_ignored(self):
        assert qutrit_loss(_embed(np.exp(0.3j) * _x90())) == pytest.approx(0, abs=1e-15)

    def test_identity(self):
        assert qutrit_loss(np.eye(3)) == pytest.approx(0.335786, abs=1e-6)

    @pytest.mark.parametrize("leak_weight", [0.5, 1.0, 3.0])
    def test_leakage_with_exact_block(self, leak_weight):
        # exact block plus 0.01 population in row 2 (a probe, not a unitary)
        u = _embed(_x90())
        u[2, 0] = 0.1
        assert qutrit_loss(u, leak_weight) == pytest.approx(0.01 * leak_weight, abs=1e-15)

    def test_gradient_matches_finite_differences(self, rng):
        u = expm(-1j * (lambda a: a + a.conj().T)(rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))))
        loss, grad = qutrit_loss_grad(u, 0.7)
        assert loss == pytest.approx(qutrit_loss(u, 0.7))
        h = 1e-6
        for i in range(3):
            for j in range(2):
                for unit in (1.0, 1j):
                    up, dn = u.copy(), u.copy()
                    up[i, j] += h * unit
                    dn[i, j] -= h * unit
                    fd = (qutrit_loss(up, 0.7) - qutrit_loss(dn, 0.7)) / (2 * h)
                    analytic = grad[i, j].real if unit == 1.0 else grad[i, j].imag
                    assert analytic == pytest.approx(fd, abs=1e-8)


class TestPulseMeta:
    def test_time_mapping(self):
        meta = PulseMeta(60e-9)
        assert meta.to_training_time(0.0) == pytest.approx(-np.pi)
        assert meta.to_training_time(60e-9) == pytest.approx(np.pi)
        assert meta.to_physical_time(meta.to_training_time(17e-9)) == pytest.approx(17e-9)

    def test_detuning_units(self):
        meta = PulseMeta(60e-9)
        assert meta.detuning_hz(1.0) == pytest.approx(1 / 60e-9)
        assert meta.detuning_from_hz(meta.detuning_hz(0.37)) == pytest.approx(0.37)

    def test_rejects_non_positive_duration(self):
        with pytest.raises(ValueError):
            PulseMeta(0.0)
