import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from hfqubit.angmom import HalfInt, projections
from hfqubit.errors import DataMissingError, ValidationError
from hfqubit.transitions import (
    ProtocolSpec, branching, cycling_check, default_protocol, detection_frequencies,
    ion_photon_state, line_strength, pulse_error_budget, zeeman_span,
)

I = HalfInt(7)


def _oracle_strengths(J_u, F_u, m_u, J_l):
    """|<l| d |u>|^2 for every lower state, via the uncoupled product basis."""
    out = {}
    ju, jl = float(J_u), float(J_l)
    for F_l in np.arange(abs(3.5 - jl), 3.5 + jl + 1):
        for m_l in np.arange(-F_l, F_l + 1):
            amp = 0.0
            for mI in np.arange(-3.5, 4.5):
                mJu, mJl = m_u - mI, m_l - mI
                if abs(mJu) > ju or abs(mJl) > jl:
                    continue
                cu = oracles.cg(3.5, mI, ju, mJu, float(F_u), m_u)
                cl = oracles.cg(3.5, mI, jl, mJl, F_l, m_l)
                amp += cu * cl * oracles.cg(ju, mJu, 1, mJl - mJu, jl, mJl)
            if abs(amp) > 1e-12:
                out[(F_l, m_l)] = amp * amp
    total = sum(out.values())
    return {k: v / total for k, v in out.items()}


def _weights(channels):
    return {(float(c.lower[1]), float(c.lower[2])): c.weight for c in channels}


def test_stretched_pi_excitation_decay(species):
    up, lo = species.level_data("2Fo7/2"), species.level_data("2D5/2")
    ch = branching(up, (7, -6), lo, I)
    w = _weights(ch)
    assert w == {(6.0, -6.0): Fraction(1, 7), (6.0, -5.0): Fraction(6, 7)}
    pol = {(float(c.lower[2])): c.polarization for c in ch}
    assert pol == {-6.0: "pi", -5.0: "sigma-"}


def test_conditional_sigma_minus_from_f6(species):
    up, lo = species.level_data("2Fo7/2"), species.level_data("2D5/2")
    sel = [c for c in branching(up, (6, 0), lo, I) if c.q == -1]
    tot = sum(c.weight for c in sel)
    got = {float(c.lower[1]): c.weight / tot for c in sel}
    assert got == {5.0: Fraction(25, 36), 6.0: Fraction(11, 36)}


@pytest.mark.parametrize("F_u", [1, 2, 3, 4, 5, 6, 7])
def test_branching_matches_uncoupled_oracle(species, F_u):
    up, lo = species.level_data("2Fo7/2"), species.level_data("2D5/2")
    for m_u in projections(F_u):
        ours = {k: float(v) for k, v in _weights(branching(up, (F_u, m_u), lo, I)).items()}
        ref = _oracle_strengths(up.J, F_u, float(m_u), lo.J)
        assert ours.keys() == ref.keys()
        for k in ref:
            assert ours[k] == pytest.approx(ref[k], abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(0, 100))
def test_branching_sums_to_one(F_u, k):
    from hfqubit.species import load_species
    sp = load_species()
    ms = projections(F_u)
    m = ms[k % len(ms)]
    for lower in ("2D5/2", "2D3/2"):
        if lower == "2D3/2":
            up = sp.level_data("2Fo5/2")
            if F_u > 6:
                continue
        else:
            up = sp.level_data("2Fo7/2")
        ch = branching(up, (F_u, m), sp.level_data(lower), I)
        assert sum(c.weight for c in ch) == 1


@pytest.mark.parametrize("F_u, m_u", [(7, -6), (6, 0), (4, 3), (1, 1)])
def test_line_strength_sum_rule(F_u, m_u):
    # summing over every lower state leaves 1/(2 J_u + 1), independent of the upper state
    J_l, J_u = HalfInt(5), HalfInt(7)
    tot = sum((line_strength(I, J_l, F_l, m_l, J_u, F_u, m_u)
               for F_l in range(1, 7) for m_l in projections(F_l)), Fraction(0))
    assert tot == Fraction(1, 8)


def test_dipole_rules(species):
    lo = species.level_data("2D5/2")
    with pytest.raises(ValidationError):
        branching(species.level_data("2D3/2"), (3, 0), lo, I)  # same parity
    with pytest.raises(ValidationError):
        branching(species.level_data("2Fo7/2"), (8, 0), lo, I)


def test_cycling_transition_closed(species):
    rep = cycling_check(species)
    assert rep.closed and rep.returns == {("6", "-6"): Fraction(1)}
    pi_leak = [l for l in rep.leaks if l["upper"] == ("6", "-6")][0]
    assert pi_leak["relative_strength"] == Fraction(1, 7)
    assert pi_leak["leak_fraction"] == Fraction(5, 6)
    with pytest.raises(ValidationError):
        cycling_check(species, q=0)


def test_protocol_a_state(species):
    st_ = ion_photon_state(default_protocol("a"), species)
    amps = {t.photon: t.amplitude for t in st_.terms}
    assert amps["V"] == pytest.approx(0.5, abs=1e-12)
    assert amps["H"] == pytest.approx(math.sqrt(3) / 2, abs=1e-12)
    assert {t.photon: (t.F, t.mF) for t in st_.terms} == {"V": (6, -6), "H": (6, -5)}
    assert st_.norm() == pytest.approx(1.0, abs=1e-12)


def test_protocol_a_along_axis_keeps_only_sigma(species):
    st_ = ion_photon_state(default_protocol("a", geometry="along-axis"), species)
    assert [(t.F, t.mF) for t in st_.terms] == [(6, -5)]


def test_protocol_b_state(species):
    st_ = ion_photon_state(default_protocol("b"), species)
    amps = {t.photon: t.amplitude for t in st_.terms}
    assert amps["nu_blue"] == pytest.approx(math.sqrt(25 / 36), abs=1e-12)
    assert amps["nu_red"] == pytest.approx(math.sqrt(11 / 36), abs=1e-12)
    blue = [t for t in st_.terms if t.photon == "nu_blue"][0]
    red = [t for t in st_.terms if t.photon == "nu_red"][0]
    assert (blue.F, blue.mF, red.F, red.mF) == (5, 1, 6, 1)
    assert blue.freq_GHz - red.freq_GHz == pytest.approx(0.207137, abs=1e-6)


@pytest.mark.parametrize("c5, c6", [(0.6, 0.8), (1.0, 0.0), (math.sqrt(0.3), math.sqrt(0.7))])
def test_protocol_c_pass_through(species, c5, c6):
    st_ = ion_photon_state(default_protocol("c", c5=c5, c6=c6, a5=0.7, a6=0.7), species)
    amps = {(t.F, t.mF): t.amplitude for t in st_.terms}
    assert amps.get((5, 0), 0.0) == pytest.approx(c5, abs=1e-12)
    assert amps.get((6, 0), 0.0) == pytest.approx(c6, abs=1e-12)


def test_protocol_validation():
    with pytest.raises(ValidationError):
        ProtocolSpec("d")
    with pytest.raises(ValidationError):
        ProtocolSpec("c", c5=0.5, c6=0.5)
    with pytest.raises(ValidationError):
        ProtocolSpec("a", tau_ns=0)
    with pytest.raises(ValidationError):
        ProtocolSpec("a", geometry="oblique")


def test_gate_frequencies(species):
    for set_name, split, gap in (("experimental", 0.20, 0.96), ("theoretical", 0.27, 0.89)):
        st_ = ion_photon_state(default_protocol("c"), species, set_name)
        f = {t.F: t.freq_GHz for t in st_.terms}
        assert f[6] - f[5] == pytest.approx(gap, abs=0.01)
        st_ = ion_photon_state(default_protocol("b"), species, set_name)
        f = {t.photon: t.freq_GHz for t in st_.terms}
        assert f["nu_blue"] - f["nu_red"] == pytest.approx(split, abs=0.01)


def test_zeeman_span(species):
    lines = detection_frequencies(species, 0.18)
    assert len(lines) == 13
    assert zeeman_span(species, 0.18) == pytest.approx(2.163, abs=2e-3)
    assert zeeman_span(species, 0.64, "theoretical") == pytest.approx(7.719, abs=2e-3)
    assert zeeman_span(species, 0.0) == pytest.approx(0.0, abs=1e-9)


def test_pulse_budgets(species):
    a = pulse_error_budget(default_protocol("a"), species)
    assert a.p_double == pytest.approx(10e-9 / (2 * 4.4e-6), rel=1e-12)
    assert a.p_double < 3e-3 and a.p_offres < 3e-3
    c = pulse_error_budget(default_protocol("c"), species)
    assert c.p_double + c.p_offres < 1e-3
    long = pulse_error_budget(default_protocol("a", tau_ns=100), species)
    assert long.p_offres < a.p_offres < pulse_error_budget(default_protocol("a", tau_ns=2), species).p_offres


def test_budget_needs_coefficients(tmp_path):
    from hfqubit.species import parse_species
    sp = parse_species({"name": "X", "nuclear_spin": "7/2", "levels": [
        {"name": "2D5/2", "J": "5/2", "lifetime_s": 1.0},
        {"name": "2Fo7/2", "J": "7/2", "lifetime_s": 1e-6},
    ]})
    with pytest.raises((DataMissingError, ValidationError)):
        pulse_error_budget(default_protocol("a"), sp)


def test_stretched_upper_decays_only_to_f6(species):
    ch = branching(species.level_data("2Fo7/2"), (7, -7), species.level_data("2D5/2"), I)
    assert [(int(c.lower[1]), int(c.lower[2]), c.weight) for c in ch] == [(6, -6, Fraction(1))]


def test_pi_impurity_to_f7_stays_in_f6(species):
    rep = cycling_check(species)
    to_f7 = [l for l in rep.leaks if l["upper"] == ("7", "-6")][0]
    assert to_f7["leak_fraction"] == 0


def test_p_double_vanishes_with_tau(species):
    taus = [1e-6, 1e-3, 1.0]
    p = [pulse_error_budget(default_protocol("a", tau_ns=t), species).p_double for t in taus]
    assert p[0] < 1e-9 and p[0] < p[1] < p[2]
    assert p[1] / p[0] == pytest.approx(1e3)


def test_protocol_c_equal_superposition(species):
    st_ = ion_photon_state(default_protocol("c"), species)
    np.testing.assert_allclose(st_.amplitudes(), [2 ** -0.5, 2 ** -0.5], atol=1e-12)
