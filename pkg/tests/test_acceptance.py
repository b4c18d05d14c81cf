"""Acceptance criteria, one test each; the summary prints a PASS/FAIL line per criterion."""
import json
import math
import time
from fractions import Fraction
from itertools import product
from pathlib import Path

import numpy as np

import oracles
from hfqubit import cli
from hfqubit.angmom import HalfInt, projections, wigner3j, wigner6j
from hfqubit.clockfinder import find_clock_points, propagate_uncertainty, scan_candidates
from hfqubit.detection import DetectionConfig, config_from_species, optimize
from hfqubit.link import LinkConfig, crossover_distance, doppler_limit, fiber_transmission
from hfqubit.species import LevelSpec, default_species_path
from hfqubit.transitions import (
    branching, default_protocol, ion_photon_state, pulse_error_budget, zeeman_span,
)
from hfqubit.zeeman import ZeemanSolver, build_hamiltonian, hyperfine_splitting

I = HalfInt(7)
JS = [HalfInt(t) for t in range(8)]  # 0 .. 7/2


def test_01_angular_momentum_oracles(record):
    t0 = time.perf_counter()
    worst3 = worst6 = 0.0
    n3 = n6 = 0
    for a, b, c in product(JS, repeat=3):
        for ma, mb in product(projections(a), projections(b)):
            for mc in projections(c):
                ours = wigner3j(a, b, c, ma, mb, mc)
                ref = oracles.threej(float(a), float(b), float(c), float(ma), float(mb), float(mc))
                worst3 = max(worst3, abs(ours - ref))
                n3 += 1
    for args in product(JS, repeat=6):
        ours = wigner6j(*args)
        ref = oracles.sixj(*(float(x) for x in args))
        worst6 = max(worst6, abs(ours - ref))
        n6 += 1
    dt = time.perf_counter() - t0
    ok = worst3 <= 1e-10 and worst6 <= 1e-10 and dt < 60
    record(1, ok, f"3j max|diff| {worst3:.1e} over {n3} args, 6j {worst6:.1e} over {n6} args, {dt:.1f} s")
    assert ok


def test_02_zero_field_closed_form(record):
    rng = np.random.default_rng(20240611)
    worst, n = 0.0, 0
    for _ in range(400):
        I2, J2 = rng.integers(1, 8, size=2)
        A = rng.uniform(-1000, 1000)
        B = rng.uniform(-1000, 1000) if I2 >= 2 and J2 >= 2 else 0.0
        lev = LevelSpec("X", HalfInt(int(J2)), A_hfs=A, B_hfs=B)
        for s in ZeemanSolver(lev, HalfInt(int(I2))).states(0.0):
            ref = oracles.zero_field_energy(A, B, I2 / 2, J2 / 2, float(s.F))
            worst = max(worst, abs(s.energy - ref))
            n += 1
    ok = worst <= 1e-9
    record(2, ok, f"max|E - E_closed| = {worst:.1e} MHz over {n} states (400 random levels)")
    assert ok


def test_03_branching(record, species):
    up, lo = species.level_data("2Fo7/2"), species.level_data("2D5/2")
    a = {(int(c.lower[1]), int(c.lower[2])): c.weight for c in branching(up, (7, -6), lo, I)}
    sel = [c for c in branching(up, (6, 0), lo, I) if c.q == -1]
    tot = sum(c.weight for c in sel)
    b = {int(c.lower[1]): c.weight / tot for c in sel}
    want_a = {(6, -6): Fraction(1, 7), (6, -5): Fraction(6, 7)}
    want_b = {5: Fraction(25, 36), 6: Fraction(11, 36)}
    ok = (a.keys() == want_a.keys() and b.keys() == want_b.keys()
          and all(abs(a[k] - want_a[k]) <= 1e-12 for k in want_a)
          and all(abs(b[k] - want_b[k]) <= 1e-12 for k in want_b))
    record(3, ok, f"|7,-6> -> {a[(6, -6)]}, {a[(6, -5)]}; |6,0> sigma- -> {b[5]}, {b[6]}")
    assert ok


def test_04_protocol_states(record, species):
    amp = lambda st_: {t.photon: t.amplitude for t in st_.terms}  # noqa: E731
    a = amp(ion_photon_state(default_protocol("a"), species))
    b = amp(ion_photon_state(default_protocol("b"), species))
    errs = [abs(a["V"] - 0.5), abs(a["H"] - math.sqrt(3) / 2),
            abs(b["nu_blue"] - math.sqrt(25 / 36)), abs(b["nu_red"] - math.sqrt(11 / 36))]
    for c5 in (0.0, 0.3, 1 / math.sqrt(2), 0.9):
        c6 = math.sqrt(1 - c5 * c5)
        st_ = ion_photon_state(default_protocol("c", c5=c5, c6=c6, a5=0.8, a6=0.8), species)
        got = {int(t.F): t.amplitude for t in st_.terms}
        errs += [abs(got.get(5, 0.0) - c5), abs(got.get(6, 0.0) - c6)]
    worst = max(errs)
    ok = worst <= 1e-12
    record(4, ok, f"(a) V {a['V']:.6f} H {a['H']:.6f}; (b) {b['nu_blue']:.6f}, {b['nu_red']:.6f}; "
                  f"(c) pass-through; max err {worst:.1e}")
    assert ok


TABLE = {
    "experimental": [(((5, 0), (6, 0)), 0.0, 1.7), (((5, 1), (6, 1)), 0.18, 1.5), (((5, 2), (6, 2)), 0.4, 1.2),
                     (((5, -5), (6, -5)), 2.0, 0.7), (((5, 5), (6, 4)), 2.3, 0.9)],
    "theoretical": [(((5, 0), (6, 0)), 0.0, 0.49), (((5, 1), (6, 1)), 0.64, 0.43), (((5, 2), (6, 2)), 2.0, 0.23),
                    (((5, -5), (6, -5)), 2.7, 0.53), (((5, 5), (6, 4)), 3.1, 0.64)],
}
GATE = {"experimental": (0.20, 0.96), "theoretical": (0.27, 0.89)}


def _reconstructed(species_path) -> bool:
    doc = json.loads(Path(species_path).read_text())
    lev = next(l for l in doc["levels"] if l["name"] == "2D5/2")
    return any("reconstructed" in (c.get("note") or "") for c in lev["coefficients"].values())


def test_05_clock_table(record, species):
    t0 = time.perf_counter()
    gate, misses, n = [], [], 0
    for set_name, rows in TABLE.items():
        lev = species.level("2D5/2", set_name)
        split = hyperfine_splitting(lev, I, 5, 6) / 1e3
        c = {int(t.F): t.freq_GHz for t in ion_photon_state(default_protocol("c"), species, set_name).terms}
        gap = c[6] - c[5]
        want_split, want_gap = GATE[set_name]
        if abs(split - want_split) > 0.01 or abs(gap - want_gap) > 0.01:
            misses.append(f"{set_name} gate")
        gate.append(f"{set_name} split {split:.3f} / nu6-nu5 {gap:.3f} GHz")
        cands = {c.name: c for c in scan_candidates(lev, I, B_max=4.0)}
        for pair, B0, q in rows:
            name = f"|{pair[0][0]},{pair[0][1]}>-|{pair[1][0]},{pair[1][1]}>"
            got = cands.get(name)
            if got is None:
                misses.append(f"{set_name} {name} missing")
                continue
            if abs(got.B0 - B0) > max(0.05 * B0, 0.02) or abs(abs(got.q) - q) > 0.15 * q:
                misses.append(f"{set_name} {name} B0 {got.B0:.3f} vs {B0}, |q| {abs(got.q):.3f} vs {q}")
            else:
                n += 1
    dt = time.perf_counter() - t0
    ok = not misses and dt < 60
    detail = f"{'; '.join(gate)}; {n}/10 table points in tolerance, {dt:.1f} s"
    if misses:
        detail += " [" + ", ".join(misses) + "]"
    if _reconstructed(default_species_path()):
        detail += " (bundled D5/2 coefficients are reconstructed placeholders)"
    record(5, ok, detail)
    assert ok


def test_06_zeeman_span(record, species):
    a = zeeman_span(species, 0.18, "experimental")
    b = zeeman_span(species, 0.64, "theoretical")
    ok = abs(a - 2) <= 1.0 and abs(b - 8) <= 4.0
    record(6, ok, f"span {a:.2f} MHz at 0.18 mT (exp), {b:.2f} MHz at 0.64 mT (theo)")
    assert ok


def test_07_detection_fidelity(record, species):
    cfg = DetectionConfig(NA=0.28, QE=0.8, fiber_coupling=0.2, dark_rate=2.0, s=15.0,
                          gamma=2 * math.pi * 36e3, D52_lifetime=15.0)
    # the leak channels of the fixed config agree with the species-derived ones
    derived = config_from_species(species)
    assert abs(derived.bright_leak_detuning * derived.gamma - cfg.bright_leak_detuning * cfg.gamma) \
        < 1e-3 * cfg.bright_leak_detuning * cfg.gamma
    t0 = time.perf_counter()
    opt = optimize(cfg, np.arange(0.01, 0.1001, 0.005), range(1, 11), n=1_000_000, seed=1392022)
    dt = time.perf_counter() - t0
    ok = opt.fidelity > 0.999 and opt.stderr < 2e-4
    record(7, ok, f"F = {opt.fidelity * 100:.4f}% +- {opt.stderr * 100:.4f}% at window {opt.window * 1e3:.0f} ms, "
                  f"threshold {opt.threshold} (n = 1e6 per state, {dt:.0f} s)")
    assert ok


def test_08_pulse_budgets(record, species):
    a = pulse_error_budget(default_protocol("a"), species)
    b = pulse_error_budget(default_protocol("b"), species)
    c = pulse_error_budget(default_protocol("c"), species)
    c_total = c.p_double + c.p_offres
    ok = (abs(a.p_double - 1.1e-3) <= 0.1e-3 and a.p_double < 3e-3 and a.p_offres < 3e-3
          and b.p_offres < 3e-3 and c_total < 1e-3)
    record(8, ok, f"p_double {a.p_double:.2e} (10 ns); off-res (a) {a.p_offres:.2e} (b) {b.p_offres:.2e}; "
                  f"(c) at {default_protocol('c').tau_ns:g} ns {c.p_double:.1e} + {c.p_offres:.1e} = {c_total:.1e}")
    assert ok


def test_09_link(record, species):
    tD = doppler_limit(2 * math.pi * 36e3)
    T = fiber_transmission(10.0, 0.32)
    L = crossover_distance(LinkConfig(), species.level_data("2Fo7/2").lifetime)
    ok = round(tD * 1e6, 2) == 0.86 and tD < 1e-6 and round(T, 3) == 0.479 and 2 <= L <= 10
    record(9, ok, f"T_D {tD * 1e6:.4f} uK; transmission {T:.5f} at 10 km; crossover {L:.2f} km")
    assert ok


def test_10_numerical_hygiene(record, species, capsys):
    worst_hf, worst_res = 0.0, 0.0
    for set_name in ("experimental", "theoretical"):
        lev = species.level("2D5/2", set_name)
        solver = ZeemanSolver(lev, I)
        h = 1e-4
        for B in (0.05, 0.168, 0.642, 2.0, 3.1, 8.0):
            for blk in build_hamiltonian(lev, I, B):
                res = solver.block_states(blk.mF, B + h * np.arange(-2, 3))
                norm = np.linalg.norm(blk.matrix, 2)
                for F, (e, d, v) in res.items():
                    fd = (e[0] - 8 * e[1] + 8 * e[3] - e[4]) / (12 * h)
                    worst_hf = max(worst_hf, abs(fd - d[2]))
                    r = np.linalg.norm(blk.matrix @ v[2] - e[2] * v[2]) / norm
                    worst_res = max(worst_res, r)
    lev = species.level("2D5/2")
    pair = ((5, 1), (6, 1))
    u1 = propagate_uncertainty(pair, lev, I, n_samples=300, seed=5)
    u2 = propagate_uncertainty(pair, lev, I, n_samples=300, seed=5)
    argv = ["detect", "--n", "20000", "--windows", "0.03,0.05", "--thresholds", "2:4:1", "--seed", "77"]
    outs = []
    for _ in range(2):
        cli.main(argv)
        outs.append(capsys.readouterr().out.encode())
    same = outs[0] == outs[1] and (u1.B0_unc, u1.q_unc) == (u2.B0_unc, u2.q_unc)
    pts = find_clock_points(pair, lev, I, B_max=1.0)
    ok = worst_hf <= 1e-6 and worst_res <= 1e-10 and same and len(pts) == 1
    record(10, ok, f"HF vs FD {worst_hf:.1e} MHz/mT; residual/||H|| {worst_res:.1e}; "
                   f"repeat runs byte-identical: {same}")
    assert ok
