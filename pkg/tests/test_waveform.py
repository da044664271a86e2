import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from robustpulse import waveform as wf
from robustpulse.baselines import drag_pulse, rectangular_pulse
from robustpulse.fields import ScaledField
from robustpulse.integrate import IntegratorConfig
from robustpulse.quantum import PulseMeta

META = PulseMeta(60e-9, 10e-9)
FS = 2.4e9


def exact_envelope(field, meta, n=2001, factor=1.0):
    t = np.linspace(0, meta.duration_physical, n)
    return t, factor * meta.omega_2pi * field(meta.to_training_time(t))


class TestAnalyticSignal:
    @pytest.mark.parametrize("k", [3, 17, 50])
    def test_cosine_to_exponential(self, k):
        n = 256
        t = np.arange(n) / n
        z = wf.analytic_signal(np.cos(2 * np.pi * k * t))
        assert np.allclose(z, np.exp(2j * np.pi * k * t), atol=1e-12)

    def test_sine_pair(self):
        t = np.arange(128) / 128
        z = wf.analytic_signal(np.sin(2 * np.pi * 5 * t))
        assert np.allclose(z.imag, -np.cos(2 * np.pi * 5 * t), atol=1e-12)

    def test_dc_kept(self):
        assert np.allclose(wf.analytic_signal(np.full(64, 2.0)), 2.0)

    @given(st.lists(st.floats(-10, 10), min_size=16, max_size=200))
    def test_real_part_and_energy(self, xs):
        x = np.asarray(xs)
        z = wf.analytic_signal(x)
        assert np.allclose(z.real, x, atol=1e-9)
        # a negative-frequency-free spectrum carries twice the AC energy of x
        ac = x - x.mean()
        if len(x) % 2 == 0:
            nyq = np.fft.fft(x)[len(x) // 2].real / len(x)
            ac = ac - nyq * (-1.0) ** np.arange(len(x))
        zc = z - z.mean()
        if len(x) % 2 == 0:
            zc = zc - nyq * (-1.0) ** np.arange(len(x))
        assert np.sum(np.abs(zc) ** 2) == pytest.approx(2 * np.sum(ac ** 2), rel=1e-9, abs=1e-9)

    @pytest.mark.parametrize("n", [0, 15])
    def test_too_short(self, n):
        with pytest.raises(ValueError):
            wf.analytic_signal(np.zeros(n))


class TestDemodulate:
    def test_pure_tone_to_dc(self):
        fs, f = 1e9, 125e6
        t = np.arange(400) / fs
        env = wf.demodulate(np.exp(2j * np.pi * f * t), f, fs)
        assert np.allclose(env, 1, atol=1e-12)

    def test_offset_tone(self):
        fs, f, df = 1e9, 125e6, 5e6
        t = 3e-9 + np.arange(400) / fs
        env = wf.demodulate(np.exp(2j * np.pi * (f + df) * t), f, fs, t0=3e-9)
        assert np.allclose(env, np.exp(2j * np.pi * df * t), atol=1e-12)

    @pytest.mark.parametrize("f", [5e8, 7e8, -6e8])
    def test_beyond_nyquist(self, f):
        with pytest.raises(ValueError, match="Nyquist"):
            wf.demodulate(np.ones(32), f, 1e9)


class TestSynthesize:
    def test_carrier_and_envelope(self):
        trace = wf.synthesize(rectangular_pulse(), META, 100e6, FS)
        assert trace.times[0] == 0 and trace.times[-1] == pytest.approx(60e-9)
        amp = rectangular_pulse()(0.0).real
        assert trace.samples[:5] == pytest.approx(amp * np.cos(2 * np.pi * 100e6 * trace.times[:5]))

    def test_padding_is_silent(self):
        trace = wf.synthesize(rectangular_pulse(), META, 100e6, FS, padding=0.5)
        assert trace.t0 == pytest.approx(-30e-9)
        assert np.all(trace.samples[trace.times < -1e-12] == 0)
        assert np.all(trace.samples[trace.times > 60e-9 * (1 + 1e-9)] == 0)

    @pytest.mark.parametrize("carrier", [100e6, 250e6, 400e6])
    def test_round_trip(self, carrier):
        field = drag_pulse(np.pi / 2, -10.0, 0.8)
        trace = wf.synthesize(field, META, carrier, FS, padding=0.5)
        t, env = wf.crop(trace.times, wf.envelope_of(trace, carrier), 0.0, 60e-9)
        ref = field(META.to_training_time(t))
        sl = wf.interior(len(t))
        rms = np.sqrt(np.mean(np.abs(env[sl] - ref[sl]) ** 2) / np.mean(np.abs(ref[sl]) ** 2))
        assert rms < 0.01


class TestCalibrateAmplitude:
    def test_recovers_scale(self):
        ref = np.exp(1j * np.linspace(0, 3, 50)) * np.linspace(1, 2, 50)
        assert wf.calibrate_amplitude(ref / 7.5, ref) == pytest.approx(7.5)

    def test_zero_envelope(self):
        with pytest.raises(ValueError, match="zero"):
            wf.calibrate_amplitude(np.zeros(5), np.ones(5))


class TestTrajectoryFidelity:
    @pytest.mark.parametrize("calibrate", [True, False])
    def test_exact_envelope(self, calibrate):
        field = drag_pulse(np.pi / 2, -10.0, 0.8)
        t, env = exact_envelope(field, META)
        trace = wf.trajectory_fidelity(t, env, field, META, calibrate=calibrate)
        assert trace.min_F == pytest.approx(1, abs=1e-9)
        assert trace.t_seconds[-1] == pytest.approx(60e-9)

    def test_over_rotation(self):
        field = rectangular_pulse()
        t, env = exact_envelope(field, META, factor=1.05)
        trace = wf.trajectory_fidelity(t, env, field, META, calibrate=False)
        # the two drives share an axis, so the relative rotation is 5% of the angle so far
        angle = 0.25 * (trace.t + np.pi)
        assert np.allclose(trace.F, np.cos(0.05 * angle / 2), atol=1e-9)
        calibrated = wf.trajectory_fidelity(t, env, field, META, calibrate=True)
        assert calibrated.scale == pytest.approx(1 / (1.05 * META.omega_2pi))
        assert calibrated.min_F == pytest.approx(1, abs=1e-9)

    @given(st.floats(-np.pi, np.pi))
    def test_global_phase_invariance(self, phi):
        field = drag_pulse(np.pi / 2, -10.0, 0.8)
        t, env = exact_envelope(field, META, n=401)
        a = wf.trajectory_fidelity(t, env, field, META, cfg=IntegratorConfig(256))
        # a constant drive phase is a z rotation of the frame; compare against the rotated theory
        b = wf.trajectory_fidelity(t, env * np.exp(1j * phi), ScaledField(field, np.exp(1j * phi)),
                                   META, cfg=IntegratorConfig(256))
        assert np.allclose(a.F, b.F, atol=1e-9)

    def test_duration_mismatch(self):
        field = rectangular_pulse()
        t, env = exact_envelope(field, PulseMeta(50e-9))
        with pytest.raises(ValueError, match="spans"):
            wf.trajectory_fidelity(t, env, field, META)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="matching"):
            wf.trajectory_fidelity(np.zeros(10), np.zeros(9), rectangular_pulse(), META)


class TestCsv:
    def test_round_trip(self, tmp_path):
        trace = wf.synthesize(rectangular_pulse(), META, 100e6, FS)
        wf.write_waveform_csv(tmp_path / "w.csv", trace)
        back = wf.read_waveform_csv(tmp_path / "w.csv")
        assert back.sample_rate == pytest.approx(FS, rel=1e-9)
        assert np.array_equal(back.samples, trace.samples)

    def test_single_column(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("# sample_rate: 1e9\n1\n2\n3\n")
        trace = wf.read_waveform_csv(path)
        assert trace.sample_rate == 1e9 and list(trace.samples) == [1, 2, 3]

    def test_single_column_needs_rate(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("1\n2\n")
        with pytest.raises(ValueError, match="sample_rate"):
            wf.read_waveform_csv(path)

    def test_uneven_times(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("t_seconds,value\n0,1\n1e-9,2\n3e-9,3\n")
        with pytest.raises(ValueError, match="evenly"):
            wf.read_waveform_csv(path)

    def test_empty(self, tmp_path):
        path = tmp_path / "w.csv"
        path.write_text("t_seconds,value\n")
        with pytest.raises(ValueError, match="no samples"):
            wf.read_waveform_csv(path)
