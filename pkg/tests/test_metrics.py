import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cmask.errors import ParameterError
from cmask.loss import sdr_loss
from cmask.metrics import DB_CAP, evaluate, sdr_db, si_sdr_db


def test_sdr_examples(rng):
    y = rng.normal(size=1000)
    assert sdr_db(y, y) == DB_CAP
    assert sdr_db(y, np.zeros_like(y)) == pytest.approx(0.0, abs=1e-12)
    n = rng.normal(size=1000)
    n *= np.linalg.norm(y) / 10 / np.linalg.norm(n)
    assert sdr_db(y, y + n) == pytest.approx(20.0, abs=1e-9)
    with pytest.raises(ParameterError):
        sdr_db(np.zeros(10), np.ones(10))
    with pytest.raises(ParameterError):
        sdr_db(y, y[:-1])


def test_si_sdr_examples():
    t = np.arange(1000) / 1000
    y = np.sin(2 * np.pi * 3 * t)
    assert si_sdr_db(y, 2 * y) == DB_CAP
    assert si_sdr_db(y, np.cos(2 * np.pi * 3 * t)) <= -100


def test_si_sdr_matches_loss_identity(rng):
    for _ in range(100):
        y, yh = rng.normal(size=300), rng.normal(size=300)
        cos = -sdr_loss(y, yh).value
        assert si_sdr_db(y, yh) == pytest.approx(-10 * np.log10(1 / cos ** 2 - 1), abs=1e-6)


def test_sdr_monotone_in_noise(rng):
    y, n = rng.normal(size=500), rng.normal(size=500)
    values = [sdr_db(y, y + s * n) for s in (0.01, 0.1, 0.5, 1, 2, 5)]
    assert all(a > b for a, b in zip(values, values[1:]))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 1e3))
def test_scale_behaviour(seed, c):
    rng = np.random.default_rng(seed)
    y, yh = rng.normal(size=200), rng.normal(size=200)
    assert si_sdr_db(y, c * yh) == pytest.approx(si_sdr_db(y, yh), abs=1e-9)


def test_sdr_is_not_scale_invariant(rng):
    y = rng.normal(size=200)
    assert sdr_db(y, 0.5 * y) != sdr_db(y, y * 0.9)


def test_report(rng):
    y = rng.normal(size=50)
    rep = evaluate("vocals", y, y + 0.1)
    assert rep.num_samples == 50
    assert rep.line().startswith("vocals\tSDR_dB=")
    assert set(rep.as_dict()) == {"sdr_db", "si_sdr_db"}
