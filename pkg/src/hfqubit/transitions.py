"""Dipole branching, cycling closure, detection-line spans and ion-photon states.

Polarization convention: a photon carries ``q = m_upper - m_lower`` for both
absorption and emission. A sigma-minus (q = -1) laser therefore lowers m_F on
excitation, and a sigma-minus decay raises m_F by one on the way down
(|F'=6, m=0> -> |F, m=1>).

Relative line strengths are

    S = (2F_l + 1)(2F_u + 1) {J_l F_l I; F_u J_u 1}^2 (F_u 1 F_l; -m_u q m_l)^2

and are kept as exact rationals; decay weights are S normalized over all
channels into the chosen lower level.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .angmom import HalfInt, twice, triangle, wigner3j_squared, wigner6j_squared
from .errors import DataMissingError, ValidationError
from .species import LevelSpec, SpeciesSpec
from .zeeman import _F_values, solver_for, zero_field_energy

__all__ = [
    "DecayChannel",
    "PhotonTerm",
    "IonPhotonState",
    "ProtocolSpec",
    "CyclingReport",
    "PulseBudget",
    "COLLECTION_FACTORS",
    "line_strength",
    "branching",
    "cycling_check",
    "ion_photon_state",
    "detection_frequencies",
    "zeeman_span",
    "pulse_error_budget",
    "default_protocol",
]

log = logging.getLogger(__name__)

LOWER, UPPER = "2D5/2", "2Fo7/2"

#: Collected intensity per unit branching weight, by geometry and |q|.
#: Perpendicular to the field a pi dipole radiates twice the power of a
#: sigma dipole; along the field pi does not radiate at all.
COLLECTION_FACTORS = {
    "perpendicular": {0: Fraction(1), 1: Fraction(1, 2)},
    "along-axis": {0: Fraction(0), 1: Fraction(1)},
}

_POL_NAMES = {-1: "sigma-", 0: "pi", 1: "sigma+"}
_POL_CODES = {"sigma-": -1, "s-": -1, "pi": 0, "sigma+": 1, "s+": 1, "-1": -1, "0": 0, "1": 1, "+1": 1}


def _pol(value) -> int:
    if isinstance(value, (int, np.integer)) and int(value) in (-1, 0, 1):
        return int(value)
    try:
        return _POL_CODES[str(value).strip().lower()]
    except KeyError:
        raise ValidationError(f"unknown polarization {value!r}; use sigma-, pi or sigma+") from None


@dataclass(frozen=True)
class DecayChannel:
    """One spontaneous-emission channel.

    ``upper`` and ``lower`` are ``(level name, F, m_F)``; ``weight`` is the
    exact branching probability.
    """

    upper: tuple
    lower: tuple
    q: int
    weight: Fraction

    @property
    def polarization(self) -> str:
        return _POL_NAMES[self.q]


@dataclass(frozen=True)
class PhotonTerm:
    F: HalfInt
    mF: HalfInt
    photon: str
    amplitude: float
    freq_GHz: float | None = None

    def as_dict(self) -> dict:
        return {"F": str(self.F), "mF": str(self.mF), "photon": self.photon,
                "amplitude": self.amplitude, "freq_GHz": self.freq_GHz}


@dataclass(frozen=True)
class IonPhotonState:
    """Entangled state as real non-negative amplitudes (phases are not tracked)."""

    terms: tuple
    protocol_id: str = ""
    weights: tuple = ()  # exact squared amplitudes where available

    def amplitudes(self) -> np.ndarray:
        return np.array([t.amplitude for t in self.terms])

    def norm(self) -> float:
        return float(np.sum(self.amplitudes() ** 2))

    def as_dict(self) -> dict:
        return {"terms": [t.as_dict() for t in self.terms]}


@dataclass(frozen=True)
class ProtocolSpec:
    """Excitation and collection settings of one protocol.

    Args:
        protocol_id: ``"a"``, ``"b"`` or ``"c"``.
        tau_ns: square-pulse duration.
        c5, c6: initial amplitudes of |5,0> and |6,0> (protocol c).
        a5, a6: effective excitation/emission amplitudes (protocol c).
        geometry: ``"perpendicular"`` or ``"along-axis"``.
        filter: collected photon polarizations; None keeps every radiated one.
        B: field in mT at which frequencies are evaluated.
    """

    protocol_id: str
    tau_ns: float = 10.0
    c5: float = 1 / math.sqrt(2)
    c6: float = 1 / math.sqrt(2)
    a5: float = 1.0
    a6: float = 1.0
    geometry: str = "perpendicular"
    filter: tuple | None = None
    B: float = 0.0

    def __post_init__(self):
        if self.protocol_id not in ("a", "b", "c"):
            raise ValidationError(f"protocol must be a, b or c, got {self.protocol_id!r}")
        if not self.tau_ns > 0:
            raise ValidationError("pulse duration must be positive")
        if self.geometry not in COLLECTION_FACTORS:
            raise ValidationError(f"geometry must be one of {sorted(COLLECTION_FACTORS)}")
        if self.protocol_id == "c":
            if abs(self.c5 ** 2 + self.c6 ** 2 - 1) > 1e-9:
                raise ValidationError("c5^2 + c6^2 must equal 1")
            if min(self.a5, self.a6, self.c5, self.c6) < 0:
                raise ValidationError("amplitudes must be non-negative")
        if self.filter is not None:
            object.__setattr__(self, "filter", tuple(sorted({_pol(p) for p in self.filter})))
        if self.B < 0:
            raise ValidationError("magnetic field must be non-negative")

    @property
    def tau(self) -> float:
        return self.tau_ns * 1e-9

    def excitations(self):
        """(initial (F, m), initial amplitude, effective factor, target (F', m'), laser q)."""
        h = HalfInt.parse
        if self.protocol_id == "a":
            return [((h(6), h(-6)), 1.0, 1.0, (h(7), h(-6)), 0)]
        if self.protocol_id == "b":
            return [((h(5), h(1)), 1.0, 1.0, (h(6), h(0)), -1)]
        return [((h(5), h(0)), self.c5, self.a5, (h(6), h(0)), 0),
                ((h(6), h(0)), self.c6, self.a6, (h(7), h(0)), 0)]


def default_protocol(protocol_id: str, **overrides) -> ProtocolSpec:
    """Protocol settings used in the text: 10 ns pulses for a and b, 4 ns for c."""
    base = {
        "a": dict(geometry="perpendicular"),
        "b": dict(geometry="along-axis", filter=("sigma-",)),
        "c": dict(geometry="perpendicular", filter=("pi",), tau_ns=4.0),
    }
    if protocol_id not in base:
        raise ValidationError(f"protocol must be a, b or c, got {protocol_id!r}")
    return ProtocolSpec(protocol_id, **{**base[protocol_id], **overrides})


def _check_dipole(lower, upper):
    tl, tu = twice(lower.J), twice(upper.J)
    if abs(tl - tu) > 2 or (tl == 0 and tu == 0):
        raise ValidationError(f"{lower.name} <-> {upper.name} is not an electric-dipole pair (Delta J > 1)")
    if lower.parity == upper.parity:
        raise ValidationError(f"{lower.name} <-> {upper.name} is not an electric-dipole pair (no parity change)")


def line_strength(I, J_l, F_l, m_l, J_u, F_u, m_u) -> Fraction:
    """Relative dipole strength of |J_l F_l m_l> <-> |J_u F_u m_u> (exact)."""
    q = HalfInt.parse(m_u) - HalfInt.parse(m_l)
    if abs(q.twice_value) > 2:
        return Fraction(0)
    tu, tl = twice(F_u), twice(F_l)
    if not triangle(F_l, 1, F_u):
        return Fraction(0)
    six = wigner6j_squared(J_l, F_l, I, F_u, J_u, 1)
    three = wigner3j_squared(F_u, 1, F_l, -HalfInt.parse(m_u), q, m_l)
    return (tl + 1) * (tu + 1) * six * three


def branching(upper_level, upper, lower_level, I) -> list[DecayChannel]:
    """Decay channels of ``upper = (F, m_F)`` into ``lower_level``.

    Weights are normalized over the channels into this lower level.
    Zero-weight channels are omitted.
    """
    _check_dipole(lower_level, upper_level)
    I = HalfInt.parse(I)
    F_u, m_u = (HalfInt.parse(x) for x in upper)
    if F_u not in _F_values(I, upper_level.J) or abs(m_u.twice_value) > F_u.twice_value:
        raise ValidationError(f"state |{F_u}, {m_u}> does not exist in {upper_level.name}")
    raw = []
    for F_l in _F_values(I, lower_level.J):
        for q in (-1, 0, 1):
            m_l = m_u - q
            if abs(m_l.twice_value) > F_l.twice_value:
                continue
            s = line_strength(I, lower_level.J, F_l, m_l, upper_level.J, F_u, m_u)
            if s:
                raw.append((F_l, m_l, q, s))
    total = sum(s for *_, s in raw)
    return [DecayChannel(upper=(upper_level.name, F_u, m_u), lower=(lower_level.name, F_l, m_l),
                         q=q, weight=s / total) for F_l, m_l, q, s in raw]


@dataclass(frozen=True)
class CyclingReport:
    """Closure of the detection cycle driven with polarization ``q``.

    ``closed`` is True when the stretched excited state returns only to the
    stretched lower state. ``leaks`` lists, per off-target excited state reached
    by an impurity polarization, the probability of decaying out of F_lower.
    """

    q: int
    lower_state: tuple
    upper_state: tuple
    closed: bool
    returns: dict
    leaks: list = field(default_factory=list)


def cycling_check(species: SpeciesSpec, q=-1, F_lower=6, lower=LOWER, upper=UPPER) -> CyclingReport:
    """Check the stretched |F_lower, q*F_lower> <-> |F_lower+1, q*(F_lower+1)> cycle.

    Only angular factors are needed; no hyperfine coefficients are read.
    """
    q = _pol(q)
    if q == 0:
        raise ValidationError("the stretched cycle needs sigma polarization")
    lo, up = species.level_data(lower), species.level_data(upper)
    I = species.I
    F_l = HalfInt.parse(F_lower)
    F_u = F_l + 1
    m_l = HalfInt(q * F_l.twice_value)
    m_u = m_l + q
    if F_u not in _F_values(I, up.J):
        raise ValidationError(f"{upper} has no F={F_u} manifold")
    channels = branching(up, (F_u, m_u), lo, I)
    returns = {(str(c.lower[1]), str(c.lower[2])): c.weight for c in channels}
    closed = all(c.lower[1] == F_l and c.lower[2] == m_l for c in channels)
    leaks = []
    for q_imp in (-1, 0, 1):
        if q_imp == q:
            continue
        m_x = m_l + q_imp
        for F_x in _F_values(I, up.J):
            if abs(m_x.twice_value) > F_x.twice_value:
                continue
            strength = line_strength(I, lo.J, F_l, m_l, up.J, F_x, m_x)
            if not strength:
                continue
            out = sum((c.weight for c in branching(up, (F_x, m_x), lo, I) if c.lower[1] != F_l), Fraction(0))
            leaks.append({"polarization": _POL_NAMES[q_imp], "upper": (str(F_x), str(m_x)),
                          "relative_strength": strength / line_strength(I, lo.J, F_l, m_l, up.J, F_u, m_u),
                          "leak_fraction": out})
    return CyclingReport(q=q, lower_state=(F_l, m_l), upper_state=(F_u, m_u), closed=closed,
                         returns=returns, leaks=leaks)


def _energy(level: LevelSpec, I, F, m, B: float) -> float:
    if B == 0:
        return zero_field_energy(level, I, F)
    return float(solver_for(level, I).state(F, m, B).energy)


def _levels(species: SpeciesSpec, coefficient_set: str):
    return species.level(LOWER, coefficient_set), species.level(UPPER, coefficient_set)


def ion_photon_state(protocol: ProtocolSpec, species: SpeciesSpec,
                     coefficient_set: str = "experimental") -> IonPhotonState:
    """Ideal ion-photon state after excitation, decay and collection.

    Each excited state contributes its collected decay channels weighted by
    branching weight times the geometry factor, normalized within that
    excited state and scaled by (initial amplitude x effective factor). The
    total is then renormalized, so filter losses are not reported. Frequencies
    (GHz, hyperfine offsets from the fine-structure line) are filled in when
    both levels have coefficients.
    """
    lo, up = species.level_data(LOWER), species.level_data(UPPER)
    I = species.I
    geom = COLLECTION_FACTORS[protocol.geometry]
    try:
        lo_spec, up_spec = _levels(species, coefficient_set)
    except DataMissingError:
        lo_spec = up_spec = None

    raw = []
    for (F_i, m_i), c, a, (F_u, m_u), _ in protocol.excitations():
        chans = [ch for ch in branching(up, (F_u, m_u), lo, I)
                 if protocol.filter is None or ch.q in protocol.filter]
        collected = [(ch, ch.weight * geom[abs(ch.q)]) for ch in chans]
        collected = [(ch, w) for ch, w in collected if w]
        norm = sum(w for _, w in collected)
        for ch, w in collected:
            raw.append((ch, w / norm, (c * a) ** 2))
    if not raw:
        raise ValidationError(f"protocol {protocol.protocol_id}: collection and filtering remove every photon")
    prob = np.array([float(w) * amp2 for _, w, amp2 in raw])
    if prob.sum() == 0:
        raise ValidationError(f"protocol {protocol.protocol_id}: all amplitudes vanish")
    exact = None
    if len({amp2 for *_, amp2 in raw}) == 1:
        tot = sum(w for _, w, _ in raw)
        exact = tuple(w / tot for _, w, _ in raw)
    prob = prob / prob.sum()

    freqs = []
    for ch, _, _ in raw:
        if lo_spec is None:
            freqs.append(None)
            continue
        e_u = _energy(up_spec, I, ch.upper[1], ch.upper[2], protocol.B)
        e_l = _energy(lo_spec, I, ch.lower[1], ch.lower[2], protocol.B)
        freqs.append((e_u - e_l) / 1e3)

    labels = _photon_labels(protocol, raw, freqs)
    terms = tuple(PhotonTerm(F=ch.lower[1], mF=ch.lower[2], photon=lab, amplitude=float(math.sqrt(p)), freq_GHz=f)
                  for (ch, _, _), p, f, lab in zip(raw, prob, freqs, labels))
    return IonPhotonState(terms=terms, protocol_id=protocol.protocol_id, weights=exact or ())


def _photon_labels(protocol: ProtocolSpec, raw, freqs):
    """Polarization tags for protocol a, frequency tags for b and c."""
    if protocol.protocol_id == "a":
        if protocol.geometry == "perpendicular":
            return ["V" if ch.q == 0 else "H" for ch, *_ in raw]
        return [_POL_NAMES[ch.q] for ch, *_ in raw]
    if protocol.protocol_id == "b" and len(raw) == 2 and None not in freqs:
        hi = int(np.argmax(freqs))
        return ["nu_blue" if k == hi else "nu_red" for k in range(2)]
    return [f"nu_{ch.lower[1]}" for ch, *_ in raw]


def detection_frequencies(species: SpeciesSpec, B0: float, coefficient_set: str = "experimental",
                          q=-1, F_lower=6, F_upper=7) -> list[tuple]:
    """(m_lower, transition frequency in MHz) of every allowed F_lower -> F_upper line."""
    if B0 < 0:
        raise ValidationError("magnetic field must be non-negative")
    q = _pol(q)
    lo, up = _levels(species, coefficient_set)
    I = species.I
    F_l, F_u = HalfInt.parse(F_lower), HalfInt.parse(F_upper)
    out = []
    for tm in range(F_l.twice_value, -F_l.twice_value - 1, -2):
        m_l = HalfInt(tm)
        m_u = m_l + q
        if abs(m_u.twice_value) > F_u.twice_value:
            continue
        if not line_strength(I, lo.J, F_l, m_l, up.J, F_u, m_u):
            continue
        out.append((m_l, _energy(up, I, F_u, m_u, B0) - _energy(lo, I, F_l, m_l, B0)))
    return out


def zeeman_span(species: SpeciesSpec, B0: float, coefficient_set: str = "experimental",
                q=-1, F_lower=6, F_upper=7) -> float:
    """Spread (max - min, MHz) of the detection-line frequencies at B0."""
    freqs = [f for _, f in detection_frequencies(species, B0, coefficient_set, q, F_lower, F_upper)]
    return float(max(freqs) - min(freqs)) if freqs else 0.0


@dataclass(frozen=True)
class PulseBudget:
    p_double: float
    p_offres: float
    worst: dict | None
    bandwidth_warning: bool


def pulse_error_budget(protocol: ProtocolSpec, species: SpeciesSpec,
                       coefficient_set: str = "experimental") -> PulseBudget:
    """First-order error estimates for a square excitation pulse.

    ``p_double = gamma*tau/2``. For off-resonant excitation, every laser
    (one per intended transition) is checked against every initial state and
    every excited state it can reach; a coupling counts as an error unless it
    lands in that initial state's intended target. Each contributes
    ``Omega^2/(Omega^2 + Delta^2) * S/S_laser`` with ``Omega = pi/tau``;
    ``p_offres`` is the largest.
    """
    lo, up = _levels(species, coefficient_set)
    I = species.I
    if up.lifetime is None:
        raise DataMissingError(f"{UPPER}: lifetime required for the pulse budget")
    gamma = up.decay_rate
    tau = protocol.tau
    p_double = gamma * tau / 2
    omega = math.pi / tau
    B = protocol.B

    exc = protocol.excitations()
    lasers = []
    for (F_i, m_i), _, _, (F_u, m_u), q in exc:
        nu = _energy(up, I, F_u, m_u, B) - _energy(lo, I, F_i, m_i, B)
        s = line_strength(I, lo.J, F_i, m_i, up.J, F_u, m_u)
        if not s:
            raise ValidationError(f"intended transition |{F_i},{m_i}> -> |{F_u}',{m_u}> is dipole forbidden")
        lasers.append((nu, q, s))

    worst, p_off, min_gap = None, 0.0, math.inf
    for k, (nu_L, q, s_L) in enumerate(lasers):
        for (F_i, m_i), _, _, target, _ in exc:
            m_x = m_i + q
            for F_x in _F_values(I, up.J):
                if abs(m_x.twice_value) > F_x.twice_value or (F_x, m_x) == target:
                    continue
                s = line_strength(I, lo.J, F_i, m_i, up.J, F_x, m_x)
                if not s:
                    continue
                nu = _energy(up, I, F_x, m_x, B) - _energy(lo, I, F_i, m_i, B)
                delta = 2 * math.pi * abs(nu - nu_L) * 1e6
                min_gap = min(min_gap, abs(nu - nu_L))
                p = omega ** 2 / (omega ** 2 + delta ** 2) * float(s / s_L)
                if p > p_off:
                    p_off = p
                    worst = {"laser": k, "initial": (str(F_i), str(m_i)), "upper": (str(F_x), str(m_x)),
                             "detuning_MHz": abs(nu - nu_L), "relative_strength": float(s / s_L)}
    bandwidth_MHz = 1 / (2 * math.pi * tau) / 1e6
    warn = bandwidth_MHz > 0.1 * min_gap
    if warn:
        log.warning("pulse bandwidth %.3g MHz exceeds 10%% of the nearest off-resonant gap %.3g MHz",
                    bandwidth_MHz, min_gap)
    return PulseBudget(p_double=p_double, p_offres=p_off, worst=worst, bandwidth_warning=warn)
