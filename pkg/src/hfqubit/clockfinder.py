"""Magnetic-field-insensitive state pairs.

For a pair of states in one level the transition frequency
``df(B) = E_upper(B) - E_lower(B)`` is oriented so that ``df(0) > 0``. A
clock point is a field ``B0`` where ``d(df)/dB`` vanishes; the residual
sensitivity ``q`` is the coefficient of ``(B - B0)^2`` in ``df``, i.e. half
the second derivative, reported in Hz/uT^2 (numerically equal to MHz/mT^2).

Slopes always come from the Hellmann-Feynman theorem, so the second
derivative only needs one finite difference.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .angmom import HalfInt
from .constants import DEFAULT_SEED, MHZ_PER_MT2_TO_HZ_PER_UT2
from .errors import NonConvergenceError, ValidationError
from .species import LevelSpec
from .zeeman import _LevelModel, solver_for, zero_field_energy

__all__ = [
    "QubitCandidate",
    "UncertaintyResult",
    "parse_pair",
    "default_pairs",
    "transition_frequency",
    "transition_slope",
    "find_clock_points",
    "second_order_sensitivity",
    "propagate_uncertainty",
    "scan_candidates",
]

SLOPE_TOL = 1e-6  # MHz/mT
FD_STEP = 1e-3  # mT


@dataclass(frozen=True)
class QubitCandidate:
    pair: tuple
    B0: float
    q: float
    coefficient_set: str
    B0_unc: float | None = None
    q_unc: float | None = None

    @property
    def mF_low(self) -> HalfInt:
        return self.pair[0][1]

    @property
    def mF_high(self) -> HalfInt:
        return self.pair[1][1]

    @property
    def name(self) -> str:
        (Fa, ma), (Fb, mb) = self.pair
        return f"|{Fa},{ma}>-|{Fb},{mb}>"


@dataclass(frozen=True)
class UncertaintyResult:
    """Monte Carlo spread of one clock point.

    ``lost_fraction`` counts draws whose clock point vanished or ran out of
    the search range; those draws are excluded from the spreads.
    ``dB0_dgI`` and ``dq_dgI`` are the local sensitivities to the nuclear
    g-factor at the nominal coefficients.
    """

    B0: float
    q: float
    B0_unc: float
    q_unc: float
    lost_fraction: float
    n_samples: int
    dB0_dgI: float
    dq_dgI: float

    def __iter__(self):
        yield self.B0_unc
        yield self.q_unc


def _label(x) -> tuple[HalfInt, HalfInt]:
    F, m = x
    return HalfInt.parse(F), HalfInt.parse(m)


def parse_pair(pair) -> tuple:
    """Normalize ``((F, m), (F', m'))`` to HalfInt labels."""
    try:
        a, b = pair
        return _label(a), _label(b)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad state pair {pair!r}: {exc}") from None


def default_pairs(F_low=5, F_high=6, max_delta_m=1) -> list[tuple]:
    """All (F_low, m) x (F_high, m') with |m - m'| <= max_delta_m."""
    F_low, F_high = HalfInt.parse(F_low), HalfInt.parse(F_high)
    pairs = []
    for tm in range(F_low.twice_value, -F_low.twice_value - 1, -2):
        for tn in range(F_high.twice_value, -F_high.twice_value - 1, -2):
            if abs(tm - tn) <= 2 * max_delta_m:
                pairs.append(((F_low, HalfInt(tm)), (F_high, HalfInt(tn))))
    pairs.sort(key=lambda p: (p[0][1].twice_value, p[1][1].twice_value))
    return pairs


class _Pair:
    def __init__(self, pair, level: LevelSpec, I):
        self.pair = parse_pair(pair)
        self.level = level
        self.I = HalfInt.parse(I)
        self.solver = solver_for(level, self.I)
        (Fa, ma), (Fb, mb) = self.pair
        for F, m in self.pair:
            if m not in self.solver.model.blocks or F not in self.solver.model.blocks[m]["Fs"]:
                raise ValidationError(f"state |{F}, {m}> does not exist in level {level.name}")
        ea, eb = zero_field_energy(level, self.I, Fa), zero_field_energy(level, self.I, Fb)
        self.orient = 1.0 if eb >= ea else -1.0

    def _eval(self, Bs):
        Bs = np.atleast_1d(np.asarray(Bs, dtype=float))
        (Fa, ma), (Fb, mb) = self.pair
        ra = self.solver.block_states(ma, Bs)
        rb = ra if mb == ma else self.solver.block_states(mb, Bs)
        return ra[Fa], rb[Fb]

    def freq(self, Bs):
        a, b = self._eval(Bs)
        return self.orient * (b[0] - a[0])

    def slope(self, Bs):
        a, b = self._eval(Bs)
        return self.orient * (b[1] - a[1])


def transition_frequency(pair, level: LevelSpec, I, B):
    """Oriented transition frequency in MHz (scalar or array in B)."""
    if np.any(np.asarray(B) < 0):
        raise ValidationError("magnetic field must be non-negative")
    out = _Pair(pair, level, I).freq(B)
    return float(out[0]) if np.ndim(B) == 0 else out


def transition_slope(pair, level: LevelSpec, I, B):
    """Hellmann-Feynman d(df)/dB in MHz/mT."""
    if np.any(np.asarray(B) < 0):
        raise ValidationError("magnetic field must be non-negative")
    out = _Pair(pair, level, I).slope(B)
    return float(out[0]) if np.ndim(B) == 0 else out


def _bisect(fn, lo, hi, flo, xtol=1e-11, max_iter=200):
    """Vectorized bisection on brackets [lo, hi] with sign(f(lo)) = sign(flo)."""
    lo, hi, flo = (np.array(x, dtype=float) for x in (lo, hi, flo))
    for _ in range(max_iter):
        if (hi - lo).max(initial=0.0) < xtol:
            break
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        left = np.sign(fm) == np.sign(flo)
        lo = np.where(left, mid, lo)
        flo = np.where(left, fm, flo)
        hi = np.where(left, hi, mid)
    return 0.5 * (lo + hi)


def _q_from_slopes(slope_fn, B0, h):
    s = slope_fn(np.array([B0 - h, B0 + h]))
    return 0.5 * (s[1] - s[0]) / (2 * h)


def second_order_sensitivity(pair, level: LevelSpec, I, B0: float, step: float = FD_STEP) -> float:
    """Half the second derivative of df at B0, in Hz/uT^2.

    Uses a centred difference of the Hellmann-Feynman slope. Raises
    :class:`NonConvergenceError` if the Richardson extrapolation from steps
    ``step`` and ``2*step`` moves the value by more than 1%.
    """
    p = _Pair(pair, level, I)
    return _second_order(p.slope, B0, step)


def _second_order(slope_fn, B0, step):
    q1 = _q_from_slopes(slope_fn, B0, step)
    q2 = _q_from_slopes(slope_fn, B0, 2 * step)
    rich = (4 * q1 - q2) / 3
    if abs(rich - q1) > 0.01 * max(abs(q1), 1e-12):
        raise NonConvergenceError(
            f"second derivative not converged at B0={B0:.6g} mT: {q1:.6g} vs extrapolated {rich:.6g}"
        )
    return float(q1 * MHZ_PER_MT2_TO_HZ_PER_UT2)


def find_clock_points(pair, level: LevelSpec, I, B_max: float = 10.0, step: float = 0.01,
                      tol: float = SLOPE_TOL) -> list[QubitCandidate]:
    """All fields in [0, B_max] where the pair's transition is first-order insensitive.

    Sign changes of the slope are bracketed on a grid of spacing ``step`` and
    polished by bisection. A zero at B = 0 itself is included when the slope
    there is below ``tol``.
    """
    if not B_max > 0:
        raise ValidationError("B_max must be positive")
    p = _Pair(pair, level, I)
    n = max(1, int(np.ceil(B_max / step - 1e-9)))
    grid = np.linspace(0.0, B_max, n + 1)
    s = p.slope(grid)
    roots = []
    sign = np.sign(s)
    if abs(s[0]) < tol:
        roots.append(0.0)
        sign[0] = 0.0
    exact = [float(grid[k]) for k in range(1, len(s)) if sign[k] == 0]
    idx = np.nonzero(sign[:-1] * sign[1:] < 0)[0]
    if len(idx):
        lo, hi = grid[idx], grid[idx + 1]
        polished = _bisect(p.slope, lo, hi, s[idx])
        check = p.slope(polished)
        for b, d in zip(polished, check):
            if abs(d) >= tol:
                raise NonConvergenceError(f"root polish failed near B={b:.6g} mT (slope {d:.3g})")
            roots.append(float(b))
    roots = sorted(set(roots) | set(exact))
    out = []
    for b in roots:
        q = _second_order(p.slope, b, FD_STEP)
        out.append(QubitCandidate(pair=p.pair, B0=b, q=q, coefficient_set=level.reference_tag))
    return out


def _batched_pair_slope(model: _LevelModel, pair, orient, ranks, A, Bq):
    """Slope function over per-draw coefficients.

    The returned ``slope(x, idx)`` evaluates draws ``idx`` at fields ``x``.
    """
    (Fa, ma), (Fb, mb) = pair

    def block_slope(m, rank_pos, rank_neg, x, idx):
        out = np.empty(len(x))
        for sign, sel in ((1.0, x >= 0), (-1.0, x < 0)):
            if not sel.any():
                continue
            mm = m if sign > 0 else -m
            r = (rank_pos if sign > 0 else rank_neg)[idx[sel]]
            blk = model.blocks[mm]
            _, v = model.block_eigen_coeffs(mm, A[idx[sel]], Bq[idx[sel]], np.abs(x[sel]))
            vec = np.take_along_axis(v, r[:, None, None], axis=2)[:, :, 0]
            out[sel] = sign * np.einsum("ki,i,ki->k", vec, blk["z"], vec)
        return out

    def slope(x, idx):
        x = np.asarray(x, dtype=float)
        sa = block_slope(ma, ranks[(Fa, ma)], ranks[(Fa, -ma)], x, idx)
        sb = block_slope(mb, ranks[(Fb, mb)], ranks[(Fb, -mb)], x, idx)
        return orient * (sb - sa)

    return slope


def _draw_ranks(model: _LevelModel, F, m, A, Bq, b_small=1e-4):
    """Energy rank of state (F, m) just above zero field, per draw."""
    blk = model.blocks[m]
    col = blk["Fs"].index(F)
    if len(blk["Fs"]) == 1:
        return np.zeros(len(A), dtype=int)
    _, v = model.block_eigen_coeffs(m, A, Bq, np.full(len(A), b_small))
    ov = np.abs(np.einsum("i,kir->kr", blk["ref"][:, col], v))
    return ov.argmax(axis=1)


def propagate_uncertainty(pair, level: LevelSpec, I, n_samples: int = 10_000,
                          seed: int = DEFAULT_SEED, B0: float | None = None,
                          B_max: float = 10.0, chunk: int = 5000) -> UncertaintyResult:
    """Monte Carlo spread of a clock point over Gaussian hyperfine coefficients.

    A and B_hfs are drawn independently from normals with the level's 1-sigma
    uncertainties. Each draw's clock point is followed from the nominal
    ``B0`` (the lowest clock point if not given) by Newton iteration on the
    Hellmann-Feynman slope.
    """
    if n_samples < 100:
        raise ValidationError("n_samples must be at least 100")
    p = _Pair(pair, level, I)
    if B0 is None:
        found = find_clock_points(pair, level, I, B_max=B_max)
        if not found:
            raise ValidationError(f"pair {p.pair} has no clock point below {B_max} mT")
        B0 = found[0].B0
    q0 = _second_order(p.slope, B0, FD_STEP)
    dB0_dgI, dq_dgI = _gI_sensitivity(p, B0)

    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n_samples, 2))
    A_all = level.A_hfs + level.A_unc * z[:, 0]
    B_all = level.B_hfs + level.B_unc * z[:, 1]
    if level.A_unc == 0 and level.B_unc == 0:
        return UncertaintyResult(B0, q0, 0.0, 0.0, 0.0, n_samples, dB0_dgI, dq_dgI)

    roots = np.empty(n_samples)
    qs = np.empty(n_samples)
    ok = np.empty(n_samples, dtype=bool)
    for start in range(0, n_samples, chunk):
        sl = slice(start, min(start + chunk, n_samples))
        r, qq, good = _follow_root(p, A_all[sl], B_all[sl], B0, B_max)
        roots[sl], qs[sl], ok[sl] = r, qq, good
    lost = 1.0 - ok.mean()
    if ok.sum() < 2:
        raise NonConvergenceError("clock point vanished for nearly all draws")
    return UncertaintyResult(
        B0=B0, q=q0,
        B0_unc=float(np.std(roots[ok], ddof=1)),
        q_unc=float(np.std(qs[ok], ddof=1)),
        lost_fraction=float(lost), n_samples=n_samples,
        dB0_dgI=dB0_dgI, dq_dgI=dq_dgI,
    )


def _follow_root(p: _Pair, A, Bq, B0, B_max, h=FD_STEP, iters=30):
    model = p.solver.model
    ranks = {}
    for F, m in p.pair:
        for mm in (m, -m):
            if (F, mm) not in ranks:
                ranks[(F, mm)] = _draw_ranks(model, F, mm, A, Bq)
    slope = _batched_pair_slope(model, p.pair, p.orient, ranks, A, Bq)
    n = len(A)
    every = np.arange(n)
    x = np.full(n, float(B0))
    if B0 == 0.0:
        # symmetric pairs keep their zero-field root exactly
        good = np.abs(slope(x, every)) < SLOPE_TOL
        sp, sm = slope(x + h, every), slope(x - h, every)
        return x, 0.25 * (sp - sm) / h * MHZ_PER_MT2_TO_HZ_PER_UT2, good
    def pm(xs, idx):
        both = slope(np.concatenate([xs + h, xs - h]), np.concatenate([idx, idx]))
        return both[:len(idx)], both[len(idx):]

    active = every
    for _ in range(iters):
        xa = x[active]
        sp, sm = pm(xa, active)
        d = 0.5 * (sp + sm)
        dd = (sp - sm) / (2 * h)
        with np.errstate(divide="ignore", invalid="ignore"):
            dx = np.where(dd != 0, d / dd, np.inf)
        dx = np.clip(dx, -0.5, 0.5)
        x[active] = xa - dx
        active = active[np.abs(dx) > 1e-9]
        if not active.size:
            break
    sp, sm = pm(x, every)
    s0 = slope(x, every)
    dd = (sp - sm) / (2 * h)
    good = (np.abs(s0) < SLOPE_TOL) & (x > 0) & (x <= B_max) & np.isfinite(x)
    return x, 0.5 * dd * MHZ_PER_MT2_TO_HZ_PER_UT2, good


def _gI_sensitivity(p: _Pair, B0, delta=1e-5):
    """Central differences of B0 and q with respect to gI."""
    vals = []
    for sgn in (1, -1):
        lev = dataclasses.replace(p.level, gI=p.level.gI + sgn * delta)
        pp = _Pair(p.pair, lev, p.I)
        if B0 == 0.0:
            b = 0.0
        else:
            lo, hi = max(B0 - 0.05, 1e-9), B0 + 0.05
            slo, shi = pp.slope(np.array([lo, hi]))
            if np.sign(slo) == np.sign(shi):
                return float("nan"), float("nan")
            b = float(_bisect(pp.slope, [lo], [hi], [slo], xtol=1e-10)[0])
        vals.append((b, _q_from_slopes(pp.slope, b, FD_STEP) * MHZ_PER_MT2_TO_HZ_PER_UT2))
    (b1, q1), (b2, q2) = vals
    return float((b1 - b2) / (2 * delta)), float((q1 - q2) / (2 * delta))


def scan_candidates(level: LevelSpec, I, F_low=5, F_high=6, B_max: float = 10.0,
                    max_delta_m: int = 1, step: float = 0.01, uncertainty: bool = False,
                    n_samples: int = 10_000, seed: int = DEFAULT_SEED) -> list[QubitCandidate]:
    """Clock points of every default pair, sorted by pair then B0."""
    out = []
    for pair in default_pairs(F_low, F_high, max_delta_m):
        for cand in find_clock_points(pair, level, I, B_max=B_max, step=step):
            if uncertainty and (level.A_unc or level.B_unc):
                res = propagate_uncertainty(pair, level, I, n_samples=n_samples, seed=seed,
                                            B0=cand.B0, B_max=B_max)
                cand = dataclasses.replace(cand, B0_unc=res.B0_unc, q_unc=res.q_unc)
            out.append(cand)
    out.sort(key=lambda c: (c.pair[0][1].twice_value, c.pair[1][1].twice_value, c.B0))
    return out
