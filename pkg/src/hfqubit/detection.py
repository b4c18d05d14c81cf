"""Fluorescence state detection by photon counting with a threshold.

The ion is modelled as a three-state jump process during the detection
window: ``bright`` (cycling), ``dark`` (off resonance) and ``out`` (the
D5/2 level has decayed, so only background counts remain). Photon counts are
Poisson within each constant-rate segment, and the segment boundaries are
drawn as exponential waiting times, so no time grid is involved.

Random numbers are drawn per fixed block of trajectories from a Philox
generator keyed by ``(seed, block index)``; any chunking of the work gives
the same histograms.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .angmom import HalfInt
from .constants import DEFAULT_SEED
from .errors import ValidationError

__all__ = [
    "DetectionConfig",
    "Histograms",
    "Score",
    "Optimum",
    "scattering_rate",
    "broadened_rate",
    "collection_efficiency",
    "leak_rates",
    "simulate",
    "classify_and_score",
    "optimize",
    "BLOCK",
    "config_from_species",
]

BLOCK = 1 << 16
MAX_EVENTS = 1e9
_BRIGHT, _DARK, _OUT = 0, 1, 2


@dataclass(frozen=True)
class DetectionConfig:
    """Detection parameters.

    Detunings are in units of the natural linewidth gamma; ``laser_linewidth``
    is the FWHM in MHz. The ``*_strength`` fields are dipole strengths of the
    off-resonant lines relative to the cycling line, and the ``*_branch``
    fields are the probabilities that one off-resonant scattering event
    changes the bright/dark character. The defaults describe 139La2+ with the
    experimental coefficient set; :func:`hfqubit.cli` derives them from the
    species file.
    """

    NA: float = 0.28
    QE: float = 0.8
    fiber_coupling: float = 0.2
    dark_rate: float = 2.0
    s: float = 15.0
    delta: float = 0.0
    laser_linewidth: float = 1.0
    gamma: float = 2 * math.pi * 36e3
    window: float = 0.04
    threshold: int = 3
    bright_leak_detuning: float = 32_420.0
    dark_leak_detuning: float = 26_666.0
    polarization_impurity: float = 1e-3
    D52_lifetime: float | None = 15.0
    bright_leak_strength: float = 1 / 7
    bright_leak_branch: float = 5 / 6
    dark_leak_strength: float = 0.2652
    dark_leak_branch: float = 1 / 6

    def __post_init__(self):
        for name in ("dark_rate", "s", "laser_linewidth", "gamma", "bright_leak_detuning",
                     "dark_leak_detuning", "bright_leak_strength", "dark_leak_strength"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be non-negative")
        for name in ("NA", "QE", "fiber_coupling", "polarization_impurity",
                     "bright_leak_branch", "dark_leak_branch"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValidationError(f"{name} must lie in [0, 1]")
        if not self.window > 0:
            raise ValidationError("window must be positive")
        if self.threshold < 0:
            raise ValidationError("threshold must be non-negative")
        if self.D52_lifetime is not None and not self.D52_lifetime > 0:
            raise ValidationError("D52_lifetime must be positive")

    def replace(self, **changes) -> "DetectionConfig":
        return dataclasses.replace(self, **changes)


def scattering_rate(s, delta, gamma):
    """Two-level scattering rate (1/s); ``delta`` in units of gamma (rad/s)."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise ValidationError("saturation parameter must be non-negative")
    return 0.5 * gamma * s / (1.0 + s + 4.0 * np.asarray(delta, dtype=float) ** 2)


def broadened_rate(s, delta, gamma, linewidth_hz=0.0):
    """Scattering rate with a Lorentzian laser line of FWHM ``linewidth_hz``.

    The power-broadened atomic Lorentzian (FWHM ``gamma*sqrt(1+s)``) is
    convolved with the laser line; for zero linewidth this is exactly
    :func:`scattering_rate`.
    """
    s = np.asarray(s, dtype=float)
    w_atom = np.sqrt(1.0 + s)  # in units of gamma
    w_tot = w_atom + 2 * math.pi * linewidth_hz / gamma
    d = np.asarray(delta, dtype=float)
    return 0.5 * gamma * s / (1.0 + s) * (w_atom * w_tot / 4) / (w_tot ** 2 / 4 + d ** 2)


def collection_efficiency(NA, QE, fiber_coupling) -> float:
    """Solid-angle fraction of an isotropic emitter times QE and fiber coupling."""
    if not 0 <= NA <= 1:
        raise ValidationError("NA must lie in [0, 1]")
    return (1.0 - math.sqrt(1.0 - NA * NA)) / 2.0 * QE * fiber_coupling


def leak_rates(cfg: DetectionConfig) -> dict:
    """Rates (1/s) of detected photons and state changes for each state."""
    eps = collection_efficiency(cfg.NA, cfg.QE, cfg.fiber_coupling)
    lw = cfg.laser_linewidth * 1e6
    # the linewidth only matters far off resonance, where it sets the wings
    r_bright = float(scattering_rate(cfg.s, cfg.delta, cfg.gamma))
    r_dark = float(broadened_rate(cfg.s * cfg.dark_leak_strength, cfg.dark_leak_detuning, cfg.gamma, lw))
    r_imp = float(broadened_rate(cfg.s * cfg.polarization_impurity * cfg.bright_leak_strength,
                                 cfg.bright_leak_detuning, cfg.gamma, lw))
    decay = 0.0 if cfg.D52_lifetime is None else 1.0 / cfg.D52_lifetime
    return {
        "efficiency": eps,
        "photons": (r_bright * eps + cfg.dark_rate, r_dark * eps + cfg.dark_rate, cfg.dark_rate),
        "bright_to_dark": r_imp * cfg.bright_leak_branch,
        "dark_to_bright": r_dark * cfg.dark_leak_branch,
        "decay": decay,
        "scatter_bright": r_bright,
        "scatter_dark": r_dark,
    }


@dataclass(frozen=True)
class Histograms:
    """Count histograms; ``bright[k]`` trajectories prepared bright gave k counts."""

    bright: np.ndarray
    dark: np.ndarray
    window: float
    leaked_bright: int = 0
    leaked_dark: int = 0
    decayed_bright: int = 0

    @property
    def n_bright(self) -> int:
        return int(self.bright.sum())

    @property
    def n_dark(self) -> int:
        return int(self.dark.sum())


def _block_rng(seed: int, block: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.Philox(ss))


def _run_block(rng, n, start_state, window, rates):
    photons = np.array(rates["photons"])
    out_rate = np.array([rates["bright_to_dark"] + rates["decay"],
                         rates["dark_to_bright"] + rates["decay"], 0.0])
    state = np.full(n, start_state, dtype=np.int8)
    t = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    leaked = np.zeros(n, dtype=bool)
    decayed = np.zeros(n, dtype=bool)
    active = np.arange(n)
    while active.size:
        st = state[active]
        k = out_rate[st]
        with np.errstate(divide="ignore"):
            wait = np.where(k > 0, rng.exponential(1.0, active.size) / np.where(k > 0, k, 1.0), np.inf)
        remaining = window - t[active]
        seg = np.minimum(wait, remaining)
        counts[active] += rng.poisson(photons[st] * seg)
        jump = wait < remaining
        # which transition happened
        u = rng.random(active.size)
        to_out = u * k < rates["decay"]
        new = np.where(to_out, _OUT, np.where(st == _BRIGHT, _DARK, _BRIGHT)).astype(np.int8)
        idx = active[jump]
        state[idx] = new[jump]
        leaked[idx[~to_out[jump]]] = True
        decayed[idx[to_out[jump]]] = True
        t[idx] += wait[jump]
        active = idx[state[idx] != _OUT]
        # ions in the out state keep only background counts
        gone = idx[state[idx] == _OUT]
        if gone.size:
            counts[gone] += rng.poisson(photons[_OUT] * (window - t[gone]))
    return counts, leaked, decayed


def simulate(config: DetectionConfig, n_trajectories: int, seed: int = DEFAULT_SEED,
             window: float | None = None) -> Histograms:
    """Simulate ``n_trajectories`` bright and as many dark detections."""
    if n_trajectories < 1:
        raise ValidationError("n_trajectories must be at least 1")
    window = config.window if window is None else window
    if not window > 0:
        raise ValidationError("window must be positive")
    rates = leak_rates(config)
    top = max(rates["photons"]) + rates["dark_to_bright"] + rates["bright_to_dark"] + rates["decay"]
    if window * top > MAX_EVENTS:
        raise ValidationError(f"window x rate = {window * top:.3g} expected events exceeds {MAX_EVENTS:.0e}")
    hists, leaks, dec = [], [], 0
    for stream, start in ((0, _BRIGHT), (1, _DARK)):
        allc, nleak = [], 0
        for b, lo in enumerate(range(0, n_trajectories, BLOCK)):
            n = min(BLOCK, n_trajectories - lo)
            c, lk, dc = _run_block(_block_rng(int(seed), b, stream), n, start, window, rates)
            allc.append(np.bincount(c))
            nleak += int(lk.sum())
            if start == _BRIGHT:
                dec += int(dc.sum())
        size = max(len(h) for h in allc)
        hists.append(sum(np.pad(h, (0, size - len(h))) for h in allc))
        leaks.append(nleak)
    return Histograms(bright=hists[0], dark=hists[1], window=float(window),
                      leaked_bright=leaks[0], leaked_dark=leaks[1], decayed_bright=dec)


@dataclass(frozen=True)
class Score:
    fidelity_bright: float
    fidelity_dark: float
    avg_fidelity: float
    stderr: float

    def __iter__(self):
        yield self.fidelity_bright
        yield self.fidelity_dark
        yield self.avg_fidelity


def classify_and_score(histograms: Histograms, threshold: int) -> Score:
    """Counts >= threshold are called bright."""
    nb, nd = histograms.n_bright, histograms.n_dark
    if nb == 0 or nd == 0:
        raise ValidationError("histograms must be non-empty")
    k = int(threshold)
    fb = histograms.bright[k:].sum() / nb if k < len(histograms.bright) else 0.0
    fd = histograms.dark[:k].sum() / nd
    se = 0.5 * math.sqrt(fb * (1 - fb) / nb + fd * (1 - fd) / nd)
    return Score(float(fb), float(fd), float(0.5 * (fb + fd)), se)


@dataclass(frozen=True)
class Optimum:
    window: float
    threshold: int
    fidelity: float
    stderr: float
    score: Score
    table: tuple  # (window, threshold, avg fidelity) for every grid point


def optimize(config: DetectionConfig, window_grid, threshold_range, n: int,
             seed: int = DEFAULT_SEED) -> Optimum:
    """Grid search over windows and thresholds.

    Every window reuses the same seed (common random numbers). Ties go to the
    shorter window, then the lower threshold.
    """
    windows = sorted(float(w) for w in window_grid)
    thresholds = sorted(int(k) for k in threshold_range)
    if not windows or not thresholds:
        raise ValidationError("window and threshold grids must be non-empty")
    best, table = None, []
    for w in windows:
        h = simulate(config, n, seed, window=w)
        for k in thresholds:
            sc = classify_and_score(h, k)
            table.append((w, k, sc.avg_fidelity))
            if best is None or sc.avg_fidelity > best[2].avg_fidelity:
                best = (w, k, sc)
    w, k, sc = best
    return Optimum(window=w, threshold=k, fidelity=sc.avg_fidelity, stderr=sc.stderr,
                   score=sc, table=tuple(table))


def config_from_species(species, coefficient_set: str = "experimental", **overrides) -> DetectionConfig:
    """Detection config whose leak channels come from the species data.

    Bright leak: pi impurity on the stretched |6,-6> state reaching the
    nearest off-resonant F'=6 state. Dark leak: the sigma-minus laser acting on
    the |5,1> qubit state through the nearest excited manifold.
    """
    from . import transitions as tr
    from .zeeman import zero_field_energy

    lo = species.level(tr.LOWER, coefficient_set)
    up = species.level(tr.UPPER, coefficient_set)
    I = species.I
    h = HalfInt.parse
    gamma = 1.0 / up.lifetime
    E = lambda lev, F: zero_field_energy(lev, I, F)  # noqa: E731
    s_cyc = tr.line_strength(I, lo.J, h(6), h(-6), up.J, h(7), h(-7))
    nu_laser = E(up, 7) - E(lo, 6)

    det_b = abs(E(up, 6) - E(lo, 6) - nu_laser) * 1e6 * 2 * math.pi / gamma
    s_b = tr.line_strength(I, lo.J, h(6), h(-6), up.J, h(6), h(-6))
    br_b = sum((c.weight for c in tr.branching(up, (6, -6), lo, I) if c.lower[1] != 6), 0)

    det_d = abs(E(up, 6) - E(lo, 5) - nu_laser) * 1e6 * 2 * math.pi / gamma
    s_d = tr.line_strength(I, lo.J, h(5), h(1), up.J, h(6), h(0))
    br_d = sum((c.weight for c in tr.branching(up, (6, 0), lo, I) if c.lower[1] == 6), 0)

    params = dict(gamma=gamma, D52_lifetime=lo.lifetime,
                  bright_leak_detuning=det_b, bright_leak_strength=float(s_b / s_cyc),
                  bright_leak_branch=float(br_b),
                  dark_leak_detuning=det_d, dark_leak_strength=float(s_d / s_cyc),
                  dark_leak_branch=float(br_d))
    params.update(overrides)
    return DetectionConfig(**params)
