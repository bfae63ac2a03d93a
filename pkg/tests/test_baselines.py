import numpy as np
import pytest

from app.schemas.analysis import AnalysisConfig
from app.services.baselines import fda_band_power, hta_extract
from app.services.reports import correlation
from app.services.synthesis import expected_band_powers
from app.services.zca import compute_zcf


def _db(power: float) -> float:
    return 10 * np.log10(power)


def _band(spec):
    return spec.carrier_hz - spec.bandwidth_hz, spec.carrier_hz + spec.bandwidth_hz


@pytest.mark.parametrize("fixture, component", [
    ("jitter_dummy", "jitter"),
    ("am_dummy", "am"),
    ("pi_dummy", "pi"),
])
def test_fda_noise_band_matches_injected_power(request, fixture, component):
    spec, _, buffer = request.getfixturevalue(fixture)
    report = fda_band_power(buffer, _band(spec))
    expected = expected_band_powers(spec)
    assert _db(report.noise_band_power) == pytest.approx(_db(expected[component]), abs=1.0)
    assert _db(report.carrier_power) == pytest.approx(_db(expected["carrier"]), abs=0.2)
    assert report.carrier_frequency == pytest.approx(spec.carrier_hz, abs=1.0)


def test_fda_powers_add_up(jitter_dummy):
    spec, _, buffer = jitter_dummy
    report = fda_band_power(buffer, _band(spec))
    parts = report.carrier_power + report.noise_band_power + report.floor_power
    assert parts == pytest.approx(report.total_power, rel=1e-9)
    assert report.to_report()["ratios_db"]["noise_to_carrier"] < -100


def test_jitter_and_am_are_indistinguishable_in_frequency(jitter_dummy, am_dummy):
    spec, _, jitter_buffer = jitter_dummy
    _, _, am_buffer = am_dummy
    jitter = fda_band_power(jitter_buffer, _band(spec)).noise_band_power
    am = fda_band_power(am_buffer, _band(spec)).noise_band_power
    assert abs(_db(jitter) - _db(am)) < 1.0


def test_hta_follows_injected_jitter(jitter_dummy):
    _, traces, buffer = jitter_dummy
    result = hta_extract(buffer, AnalysisConfig())
    assert np.std(result.jitter) == pytest.approx(40e-12, rel=0.05)
    assert correlation(result.jitter, traces.evaluate("j", result.times)) >= 0.99
    assert result.omega / (2 * np.pi) == pytest.approx(11884.877, abs=0.01)


def test_hta_ignores_amplitude_modulation(am_dummy):
    _, _, buffer = am_dummy
    result = hta_extract(buffer, AnalysisConfig())
    assert np.std(result.jitter) <= 5e-12


def test_zca_recovers_pi_noise_better_than_hta(pi_dummy):
    spec, traces, buffer = pi_dummy
    cfg = AnalysisConfig()

    zcf = compute_zcf(buffer, cfg)
    zca_pi = zcf.signs() * zcf.delta * zcf.omega * spec.amplitude_ratio
    zca_corr = correlation(zca_pi, traces.evaluate("n_pi", zcf.s_prime))

    hta = hta_extract(buffer, cfg)
    hta_corr = correlation(hta.upconverted(spec.amplitude_ratio), traces.evaluate("n_pi", hta.times))
    assert zca_corr > hta_corr
