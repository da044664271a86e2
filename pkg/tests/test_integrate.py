import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustpulse import network as nn
from robustpulse.baselines import CompositeSequence, composite_field, rectangular_pulse
from robustpulse.fields import ConstantField, FunctionField, PiecewiseConstantField, ZeroField
from robustpulse.integrate import (
    QUBIT,
    TRAINING_TOLERANCE,
    IntegrationError,
    IntegratorConfig,
    Scenario,
    final_qubit,
    final_qutrit,
    final_states,
    loss_and_gradient,
    piecewise_exact_finals,
    propagate_batch,
    propagate_qubit,
    propagate_qutrit,
    recommended_steps,
    scenario_losses,
)
from robustpulse.quantum import QutritModel, cvec_to_unitary

from oracles import exponential_oracle

DELTA_60 = QutritModel.from_physical(-222.34e6, 60e-9)


def smooth_field(t):
    return 0.6 * np.exp(-0.5 * t**2) * np.exp(1j * (0.4 * t + 0.2 * np.sin(2 * t))) + 0.1


class TestIntegratorConfig:
    def test_default(self):
        cfg = IntegratorConfig()
        assert cfg.n_steps == 512
        assert cfg.h == pytest.approx(2 * np.pi / 512)

    @pytest.mark.parametrize("n", [0, 8, 15, 16.5])
    def test_rejects_small_or_fractional(self, n):
        with pytest.raises(ValueError):
            IntegratorConfig(n)

    def test_stage_triples(self):
        cfg = IntegratorConfig(16)
        tri = cfg.stage_triples()
        assert tri.shape == (16, 3)
        assert np.allclose(tri[:, 1], 0.5 * (tri[:, 0] + tri[:, 2]))
        assert tri[0, 0] == -np.pi and tri[-1, 2] == np.pi

    def test_recommended_steps(self):
        assert recommended_steps(QUBIT) == 512
        n = recommended_steps(DELTA_60)
        assert n & (n - 1) == 0
        drift = lambda k: k * (abs(DELTA_60.Delta) * 2 * np.pi / k) ** 6 / 72
        assert drift(n) <= 1e-8 < drift(n // 2)
        assert recommended_steps(DELTA_60, TRAINING_TOLERANCE) < n


class TestPropagateQubit:
    def test_resonant_rabi(self):
        c = final_qubit(ConstantField(0.25))
        assert np.allclose(c, [np.cos(np.pi / 4), np.sin(np.pi / 4), 0, 0], atol=1e-8)

    def test_zero_field(self):
        traj = propagate_qubit(ZeroField())
        assert np.array_equal(traj.states, np.tile([1.0, 0, 0, 0], (513, 1)))
        assert traj.times[0] == -np.pi and traj.times[-1] == np.pi

    def test_detuned_against_exponential_oracle(self):
        field = ConstantField(0.25).perturbed(delta=0.3)
        assert np.allclose(final_qubit(field), exponential_oracle(field), atol=1e-7)

    def test_detuned_shape_against_exponential_oracle(self):
        field = FunctionField(smooth_field).perturbed(delta=-0.7)
        assert np.allclose(final_qubit(field), exponential_oracle(field), atol=1e-7)

    def test_fourth_order(self):
        field = FunctionField(smooth_field).perturbed(delta=0.5)
        ref = final_qubit(field, IntegratorConfig(8192))
        errs = [np.linalg.norm(final_qubit(field, IntegratorConfig(n)) - ref) for n in (32, 64, 128)]
        ratios = np.array(errs[:-1]) / np.array(errs[1:])
        assert np.all((ratios > 13) & (ratios < 19)), ratios

    def test_non_finite_field_names_time(self):
        field = FunctionField(lambda t: np.where(np.abs(t - 1.0) < 0.01, np.nan, 0.1))
        with pytest.raises(IntegrationError, match=r"t = 0\.99|t = 1\.0"):
            propagate_qubit(field)

    def test_deterministic(self):
        params = nn.init_params(3)
        a = propagate_qubit(nn.NetworkField(params)).states
        b = propagate_qubit(nn.NetworkField(params)).states
        assert a.tobytes() == b.tobytes()

    @settings(max_examples=15)
    @given(st.integers(0, 10_000), st.floats(-2, 2))
    def test_norm_conserved(self, seed, delta):
        field = nn.NetworkField(nn.init_params(seed)).perturbed(delta=delta)
        states = propagate_qubit(field).states
        assert np.max(np.abs(np.linalg.norm(states, axis=1) - 1)) < 1e-9


class TestPropagateQutrit:
    def test_free_evolution(self):
        model = QutritModel(Delta=1.0)
        traj = propagate_qutrit(ZeroField(), model)
        phase = np.exp(-1j * model.Delta * (traj.times + np.pi))
        expected = np.zeros((len(traj.times), 3, 3), dtype=complex)
        expected[:, 0, 0] = expected[:, 1, 1] = 1
        expected[:, 2, 2] = phase
        assert np.allclose(traj.states, expected, atol=1e-10)

    def test_decoupled_limit_matches_qubit(self):
        field = FunctionField(smooth_field).perturbed(delta=0.3)
        model = QutritModel(Delta=-5.0, lam=1e-300)
        u = final_qutrit(field, model)
        c = final_qubit(field)
        assert np.allclose(u[:2, :2], cvec_to_unitary(c), atol=1e-8)
        assert np.allclose(np.abs(u[2]), [0, 0, 1], atol=1e-12)

    def test_unitary_along_trajectory(self):
        field = nn.NetworkField(nn.init_params(5)).perturbed(delta=0.4)
        traj = propagate_qutrit(field, DELTA_60, IntegratorConfig(recommended_steps(DELTA_60)))
        gram = np.einsum("nji,njk->nik", traj.states.conj(), traj.states)
        assert np.max(np.abs(gram - np.eye(3))) < 5e-8

    def test_against_exponential_oracle(self):
        model = QutritModel(Delta=-4.0)
        field = FunctionField(smooth_field).perturbed(delta=0.2)
        u = final_qutrit(field, model, IntegratorConfig(1024))
        assert np.allclose(u, exponential_oracle(field, 20_000, model), atol=1e-7)


class TestPiecewiseExact:
    # segment edges fall on step boundaries; RK4 is only first order across a jump inside a step
    seq = CompositeSequence.from_arrays([0.25, 0.5, 0.25], [1.2, -0.8, 2.1], [0.1, 1.7, -2.4])

    @pytest.mark.parametrize("delta", [-0.8, 0.0, 0.45, 1.1])
    def test_qubit_matches_rk4(self, delta):
        field = composite_field(self.seq)
        exact = piecewise_exact_finals(field, [delta])[0]
        rk4 = final_states(field, [delta], QUBIT, IntegratorConfig(4096), exact=False)[0]
        assert np.allclose(exact, rk4, atol=1e-7)

    @pytest.mark.parametrize("delta", [-0.5, 0.7])
    def test_qutrit_matches_rk4(self, delta):
        field = composite_field(self.seq)
        model = QutritModel(Delta=-6.0)
        exact = piecewise_exact_finals(field, [delta], model)[0]
        rk4 = final_states(field, [delta], model, IntegratorConfig(4096), exact=False)[0]
        assert np.allclose(exact, rk4, atol=1e-7)

    def test_single_segment_is_rectangular(self):
        field = PiecewiseConstantField([-np.pi, np.pi], [0.25])
        assert np.allclose(final_states(field, [0.0])[0], final_qubit(rectangular_pulse()), atol=1e-12)


class TestPropagateBatch:
    def test_accepts_both_layouts(self):
        cfg = IntegratorConfig(64)
        t = cfg.stage_times()
        omega = smooth_field(t)[None]
        shared = propagate_batch(omega, QUBIT, cfg)
        tri = propagate_batch(smooth_field(cfg.stage_triples())[None], QUBIT, cfg)
        assert np.array_equal(shared, tri)

    def test_rejects_wrong_shape(self):
        with pytest.raises(ValueError, match="expected"):
            propagate_batch(np.zeros((2, 10)), QUBIT, IntegratorConfig(64))


def _fd_check(params, scenarios, system, cfg, idx, h=1e-5):
    loss, grad = loss_and_gradient(params, scenarios, cfg, system)
    flat = params.flat()
    for i in idx:
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        fd = (loss_and_gradient(params.with_flat(up), scenarios, cfg, system)[0]
              - loss_and_gradient(params.with_flat(dn), scenarios, cfg, system)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-4, abs=1e-9)
    return loss


class TestLossAndGradient:
    def test_zero_output_layer_gives_identity_loss(self):
        params = nn.init_params(0)
        params.weights[-1][:] = 0
        params.biases[-1][:] = 0
        loss, _ = loss_and_gradient(params, [Scenario(0.3)])
        assert loss == pytest.approx(0.085786, abs=1e-6)

    def test_loss_equals_forward_loss(self):
        params = nn.init_params(7)
        deltas = [-0.5, 0.2, 0.9]
        loss, _ = loss_and_gradient(params, [Scenario(d) for d in deltas])
        assert loss == pytest.approx(np.mean(scenario_losses(params, deltas)), rel=1e-12)

    def test_qubit_finite_differences(self, rng):
        params = nn.init_params(11)
        idx = rng.choice(params.n_params, 8, replace=False)
        _fd_check(params, [Scenario(0.4), Scenario(-0.6, alpha=0.05)], QUBIT, IntegratorConfig(128), idx)

    def test_qutrit_finite_differences(self, rng):
        params = nn.init_params(12)
        idx = rng.choice(params.n_params, 6, replace=False)
        _fd_check(params, [Scenario(0.2)], QutritModel(Delta=-3.0), IntegratorConfig(256), idx)

    def test_duplicated_hidden_unit(self):
        params = nn.init_params(4)
        j, k = 3, 11
        params.weights[1][:, k] = 0  # unit k no longer feeds forward
        base, _ = loss_and_gradient(params, [Scenario(0.1)])
        params.weights[0][k] = params.weights[0][j]
        params.biases[0][k] = params.biases[0][j]
        half = params.weights[1][:, j] / 2
        params.weights[1][:, j] = half
        params.weights[1][:, k] = half
        dup, _ = loss_and_gradient(params, [Scenario(0.1)])
        assert dup == pytest.approx(base, rel=1e-13)

    def test_non_finite_params(self):
        params = nn.init_params(0)
        flat = params.flat()
        flat[0] = np.inf
        with pytest.raises(IntegrationError, match="not finite"):
            loss_and_gradient(_raw(params, flat), [Scenario()])

    def test_needs_scenarios(self):
        with pytest.raises(ValueError, match="scenario"):
            loss_and_gradient(nn.init_params(0), [])


def _raw(params, flat):
    # bypass validation to hand a non-finite vector to the integrator
    out = params.copy()
    i = 0
    for w, b in zip(out.weights, out.biases):
        w[...] = flat[i:i + w.size].reshape(w.shape)
        i += w.size
        b[...] = flat[i:i + b.size]
        i += b.size
    return out
