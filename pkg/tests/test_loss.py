import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from cmask.errors import ParameterError
from cmask.loss import magnitude_loss, sdr_loss, sdr_plus_mag_loss
from cmask.stft import Spectrogram, StftParams, Waveform, istft

from conftest import central_difference, rel_error

P = StftParams(window_size=64, hop_size=16, sample_rate=22050)
waves = arrays(np.float64, st.integers(2, 200), elements=st.floats(-10, 10, allow_nan=False))


def complex_gradient_fd(f, z: np.ndarray, h=1e-6) -> np.ndarray:
    packed = np.stack([z.real, z.imag])
    g = central_difference(lambda p: f(p[0] + 1j * p[1]), packed, h=h)
    return g[0] + 1j * g[1]


def test_magnitude_loss_values(rng):
    y = rng.normal(size=(4, 33)) + 1j * rng.normal(size=(4, 33))
    assert magnitude_loss(y, y).value == 0.0
    ones = np.exp(1j * rng.uniform(-3, 3, (4, 33)))
    assert magnitude_loss(ones, np.zeros((4, 33))).value == pytest.approx(1.0)
    with pytest.raises(ParameterError):
        magnitude_loss(y, y[:3])


def test_magnitude_loss_gradient(rng):
    for _ in range(20):
        y = rng.normal(size=(3, 9)) + 1j * rng.normal(size=(3, 9))
        yh = rng.normal(size=(3, 9)) + 1j * rng.normal(size=(3, 9))
        assert np.min(np.abs(np.abs(y) - np.abs(yh))) > 1e-4
        g = magnitude_loss(y, yh).gradient
        fd = complex_gradient_fd(lambda z: magnitude_loss(y, z).value, yh)
        assert rel_error(g.real, fd.real) < 1e-5 and rel_error(g.imag, fd.imag) < 1e-5


@settings(max_examples=50, deadline=None)
@given(arrays(np.complex128, (2, 5), elements=st.complex_numbers(max_magnitude=10)),
       arrays(np.complex128, (2, 5), elements=st.complex_numbers(max_magnitude=10)))
def test_magnitude_loss_nonnegative(y, yh):
    v = magnitude_loss(y, yh).value
    assert v >= 0
    assert (v == 0) == np.array_equal(np.abs(y), np.abs(yh))


def test_sdr_loss_values():
    y = np.sin(np.linspace(0, 20, 500)) + 0.1
    assert sdr_loss(y, y).value == pytest.approx(-1.0, abs=1e-12)
    assert sdr_loss(y, -y).value == pytest.approx(1.0, abs=1e-12)
    t = np.arange(1000) / 1000
    assert abs(sdr_loss(np.sin(2 * np.pi * 5 * t), np.cos(2 * np.pi * 5 * t)).value) < 1e-9
    with pytest.raises(ParameterError):
        sdr_loss(np.zeros(10), np.ones(10))
    with pytest.raises(ParameterError):
        sdr_loss(np.ones(10), np.ones(11))
    silent = sdr_loss(np.ones(10), np.zeros(10))
    assert silent.value == 0.0 and np.all(np.isfinite(silent.gradient))


@settings(max_examples=60, deadline=None)
@given(waves, st.floats(1e-3, 1e3))
def test_sdr_loss_bound_and_scale(y, c):
    yh = np.roll(y, 1) + 0.5
    if not np.any(y) or not np.any(yh):
        return
    v = sdr_loss(y, yh).value
    assert -1 - 1e-12 <= v <= 1 + 1e-12
    assert sdr_loss(y, c * yh).value == pytest.approx(v, abs=1e-12)


def test_sdr_loss_gradient(rng):
    for eps in (0.0, 1e-8):
        for _ in range(20):
            y, yh = rng.normal(size=50), rng.normal(size=50)
            g = sdr_loss(y, yh, eps=eps).gradient
            fd = central_difference(lambda z: sdr_loss(y, z, eps=eps).value, yh)
            assert rel_error(g, fd) < 1e-5


def _pair(rng, frames=6):
    n = (frames - 1) * P.hop_size
    bins = lambda: rng.normal(size=(frames, 33)) + 1j * rng.normal(size=(frames, 33))
    return Spectrogram(bins(), P), Spectrogram(bins(), P), n


def test_sdr_plus_mag_value_and_gradient(rng):
    for _ in range(10):
        ys, es, n = _pair(rng)
        yw, ew = istft(ys, n), istft(es, n)
        total = sdr_plus_mag_loss(yw, ew, ys, es)
        parts = sdr_loss(yw, ew).value + magnitude_loss(ys, es).value
        assert total.value == pytest.approx(parts, abs=1e-12)

        def f(z):
            s = Spectrogram(z, P)
            return sdr_plus_mag_loss(yw, istft(s, n), ys, s).value

        fd = complex_gradient_fd(f, es.bins)
        assert rel_error(total.gradient.real, fd.real) < 1e-5
        assert rel_error(total.gradient.imag, fd.imag) < 1e-5


def test_sdr_plus_mag_perfect_estimate(rng):
    ys, _, n = _pair(rng)
    yw = istft(ys, n)
    assert sdr_plus_mag_loss(yw, yw, ys, ys).value == pytest.approx(-1.0, abs=1e-12)
