import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from hfqubit.detection import (
    DetectionConfig, Histograms, broadened_rate, classify_and_score, collection_efficiency,
    config_from_species, leak_rates, optimize, scattering_rate, simulate,
)
from hfqubit.errors import ValidationError


def _expected_counts(cfg, window):
    """Mean counts per prepared state from the CTMC generator (no sampling)."""
    r = leak_rates(cfg)
    d = r["decay"]
    Q = np.array([[-(r["bright_to_dark"] + d), r["bright_to_dark"], d],
                  [r["dark_to_bright"], -(r["dark_to_bright"] + d), d],
                  [0.0, 0.0, 0.0]])
    # integral of exp(Q t) over [0, T] from the augmented-matrix trick
    n = len(Q)
    M = np.zeros((2 * n, 2 * n))
    M[:n, :n] = Q
    M[:n, n:] = np.eye(n)
    occ = expm(M * window)[:n, n:]  # occ[i, j]: time in j starting from i
    return occ @ np.array(r["photons"])


def test_scattering_rate_limits():
    g = 2 * math.pi * 36e3
    assert scattering_rate(1.0, 0.0, g) == pytest.approx(g / 4)
    assert scattering_rate(1e9, 0.0, g) == pytest.approx(g / 2, rel=1e-8)
    assert scattering_rate(2.0, 0.5, g) == pytest.approx(0.5 * g * 2 / 4)
    with pytest.raises(ValidationError):
        scattering_rate(-1, 0, g)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 100), st.floats(-1e5, 1e5))
def test_broadened_rate_reduces_to_two_level(s, delta):
    g = 2 * math.pi * 36e3
    assert broadened_rate(s, delta, g, 0.0) == pytest.approx(scattering_rate(s, delta, g), rel=1e-12, abs=1e-300)


def test_broadened_rate_far_wing_grows_with_linewidth():
    g = 2 * math.pi * 36e3
    assert broadened_rate(15, 3e4, g, 1e6) > broadened_rate(15, 3e4, g, 0.0)


def test_collection_efficiency():
    assert collection_efficiency(0.28, 0.8, 0.2) == pytest.approx((1 - math.sqrt(1 - 0.28**2)) / 2 * 0.16)
    with pytest.raises(ValidationError):
        collection_efficiency(1.2, 1, 1)


def test_config_from_species(species):
    cfg = config_from_species(species)
    assert cfg.gamma == pytest.approx(1 / 4.4e-6)
    assert cfg.bright_leak_strength == pytest.approx(1 / 7)
    assert cfg.bright_leak_branch == pytest.approx(5 / 6)
    assert cfg.dark_leak_branch == pytest.approx(1 / 6)
    assert cfg.bright_leak_detuning == pytest.approx(32266, rel=1e-3)
    assert cfg.D52_lifetime == 15.0
    assert config_from_species(species, s=3.0).s == 3.0


def test_config_validation():
    with pytest.raises(ValidationError):
        DetectionConfig(NA=1.5)
    with pytest.raises(ValidationError):
        DetectionConfig(window=0)
    with pytest.raises(ValidationError):
        DetectionConfig(dark_rate=-1)


def test_simulate_is_deterministic():
    cfg = DetectionConfig()
    a = simulate(cfg, 70_000, seed=11)
    b = simulate(cfg, 70_000, seed=11)
    np.testing.assert_array_equal(a.bright, b.bright)
    np.testing.assert_array_equal(a.dark, b.dark)
    c = simulate(cfg, 70_000, seed=12)
    assert not np.array_equal(a.bright, c.bright)
    assert a.n_bright == a.n_dark == 70_000


@pytest.mark.parametrize("overrides", [
    dict(),
    dict(bright_leak_detuning=300.0, dark_leak_detuning=200.0, D52_lifetime=0.05),
    dict(polarization_impurity=0.5, bright_leak_detuning=50.0, dark_rate=20.0),
])
def test_mean_counts_match_generator(overrides):
    cfg = DetectionConfig(**overrides)
    n, window = 200_000, 0.04
    h = simulate(cfg, n, seed=3, window=window)
    want = _expected_counts(cfg, window)
    for hist, start in ((h.bright, 0), (h.dark, 1)):
        k = np.arange(len(hist))
        mean = (k * hist).sum() / n
        var = (k * k * hist).sum() / n - mean**2
        assert abs(mean - want[start]) < 5 * math.sqrt(var / n) + 1e-9


def test_dark_counts_are_poisson_without_leaks():
    cfg = DetectionConfig(dark_leak_strength=0.0, D52_lifetime=None, dark_rate=50.0)
    h = simulate(cfg, 100_000, seed=1, window=0.1)
    k = np.arange(len(h.dark))
    p = h.dark / h.dark.sum()
    lam = 5.0
    pois = np.exp(-lam) * lam**k / np.array([math.factorial(int(x)) for x in k])
    np.testing.assert_allclose(p[:12], pois[:12], atol=5e-3)


def test_classify_and_score():
    h = Histograms(bright=np.array([1, 1, 8]), dark=np.array([9, 1]), window=1.0)
    sc = classify_and_score(h, 1)
    assert (sc.fidelity_bright, sc.fidelity_dark) == (0.9, 0.9)
    assert sc.avg_fidelity == pytest.approx(0.9)
    assert classify_and_score(h, 5).fidelity_bright == 0.0
    with pytest.raises(ValidationError):
        classify_and_score(Histograms(np.array([0]), np.array([1]), 1.0), 1)


def test_optimize_picks_table_maximum():
    opt = optimize(DetectionConfig(), [0.02, 0.04, 0.06], range(1, 6), n=20_000, seed=2)
    best = max(f for *_, f in opt.table)
    assert opt.fidelity == best
    assert (opt.window, opt.threshold, opt.fidelity) in opt.table
    assert len(opt.table) == 15
    with pytest.raises(ValidationError):
        optimize(DetectionConfig(), [], [1], n=10)


def test_runaway_guard():
    with pytest.raises(ValidationError):
        simulate(DetectionConfig(dark_rate=1e12), 10, window=1.0)


def test_documented_rate_values():
    g = 2 * math.pi * 36e3
    assert scattering_rate(15, 0, g) == pytest.approx(1.06e5, rel=5e-3)
    ratio = scattering_rate(15, 1e3, g) / (g / 2)
    assert ratio == pytest.approx(15 / (2e3) ** 2, rel=1e-3)
    assert collection_efficiency(1, 1, 1) == pytest.approx(0.5)
    assert collection_efficiency(0.28, 1, 1) == pytest.approx(0.0200, abs=1e-4)
    assert collection_efficiency(0.28, 0.8, 0.2) == pytest.approx(3.2e-3, rel=1e-2)


def test_silent_dark_ion():
    cfg = DetectionConfig(dark_rate=0.0, dark_leak_strength=0.0, D52_lifetime=None)
    h = simulate(cfg, 2000, seed=1)
    assert h.dark[0] == 2000 and len(h.dark) == 1


def test_bright_poisson_mean():
    cfg = DetectionConfig(dark_rate=0.0, polarization_impurity=0.0, D52_lifetime=None)
    n, window = 100_000, 0.02
    lam = float(scattering_rate(cfg.s, 0, cfg.gamma)) * collection_efficiency(0.28, 0.8, 0.2) * window
    h = simulate(cfg, n, seed=4, window=window)
    mean = (np.arange(len(h.bright)) * h.bright).sum() / n
    assert abs(mean - lam) < 3 * math.sqrt(lam / n)


def test_threshold_properties():
    from scipy.stats import poisson
    k = np.arange(80)
    bright = np.round(poisson.pmf(k, 20) * 1e7).astype(np.int64)
    dark = np.round(poisson.pmf(k, 0.1) * 1e7).astype(np.int64)
    h = Histograms(bright=bright, dark=dark, window=1.0)
    assert classify_and_score(h, 3).avg_fidelity > 0.999
    assert classify_and_score(h, 0).fidelity_dark == 0.0
    fb = [classify_and_score(h, t).fidelity_bright for t in range(30)]
    assert all(a >= b for a, b in zip(fb, fb[1:]))


def test_single_point_grid():
    opt = optimize(DetectionConfig(), [0.03], [2], n=2000, seed=1)
    assert (opt.window, opt.threshold) == (0.03, 2)


def test_optimum_in_documented_box():
    opt = optimize(DetectionConfig(), np.arange(0.005, 0.2001, 0.015), range(1, 11), n=100_000, seed=8)
    assert 1e-3 <= opt.window <= 0.2 and 1 <= opt.threshold <= 10
    assert opt.fidelity > 0.999
    replay = simulate(DetectionConfig(), 100_000, seed=8, window=opt.window)
    assert classify_and_score(replay, opt.threshold).avg_fidelity == opt.fidelity


def test_decay_adds_bright_error():
    n = 100_000
    with_decay = simulate(DetectionConfig(), n, seed=6)
    no_decay = simulate(DetectionConfig(D52_lifetime=None), n, seed=6)
    e1 = 1 - classify_and_score(with_decay, 3).fidelity_bright
    e0 = 1 - classify_and_score(no_decay, 3).fidelity_bright
    assert e1 > e0
