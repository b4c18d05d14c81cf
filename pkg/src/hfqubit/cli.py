"""Command-line front end: ``hfqubit <command> [options]``.

Every command writes a table (CSV or JSON) headed by run metadata: the
species file hash, coefficient set, seed and tool version. Nothing
time-dependent is recorded, so repeated runs are byte-identical.

Exit codes: 0 success, 1 other tool error, 2 invalid input, 3 missing
data, 4 numerical failure. Errors are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import clockfinder, detection, link, transitions
from .angmom import HalfInt
from .constants import DEFAULT_SEED
from .errors import DataMissingError, HfqubitError, ValidationError
from .species import default_species_path, load_species
from .tableio import Table, write_table
from .zeeman import _F_values, zeeman_map, zero_field_energies

__all__ = ["main", "build_parser"]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(f"{self.prog}: {message}")


def _common(p):
    p.add_argument("--species", type=Path, default=None,
                   help="species JSON file (default: bundled 139La2+ data)")
    p.add_argument("--set", dest="coefficient_set", default="experimental",
                   help="coefficient set name (default: experimental)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"random seed (default {DEFAULT_SEED})")
    p.add_argument("--out", type=Path, default=None, help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _range(text: str) -> np.ndarray:
    """``start:stop:step`` (inclusive stop) or a comma list."""
    try:
        if ":" in text:
            a, b, s = (float(x) for x in text.split(":"))
            if s <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / s + 1e-9))
            return a + s * np.arange(n + 1)
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop:step or a,b,c") from None


def _pair(text: str):
    try:
        a, b = text.split(":")
        return tuple(tuple(HalfInt.parse(x) for x in side.split(",")) for side in (a, b))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad pair {text!r}; use F,m:F',m' e.g. 5,1:6,1") from None


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="hfqubit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hfqubit {__version__}")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("levels", help="zero-field hyperfine energies of every level")
    _common(p)

    p = sub.add_parser("zeeman", help="energies and slopes versus field")
    _common(p)
    p.add_argument("--level", default="2D5/2")
    p.add_argument("--B", dest="B", type=_range, default=_range("0:3:0.01"), help="field grid in mT")

    p = sub.add_parser("clock", help="first-order field-insensitive pairs")
    _common(p)
    p.add_argument("--level", default="2D5/2")
    p.add_argument("--F-low", type=HalfInt.parse, default=HalfInt.parse(5))
    p.add_argument("--F-high", type=HalfInt.parse, default=HalfInt.parse(6))
    p.add_argument("--max-delta-m", type=int, default=1)
    p.add_argument("--B-max", type=float, default=10.0)
    p.add_argument("--pairs", type=_pair, nargs="*", default=None, help="explicit pairs instead of the scan")
    p.add_argument("--samples", type=int, default=1000,
                   help="Monte Carlo draws per clock point; 0 skips uncertainties")

    p = sub.add_parser("branching", help="decay channels of an excited state")
    _common(p)
    p.add_argument("--upper-level", default="2Fo7/2")
    p.add_argument("--lower-level", default="2D5/2")
    p.add_argument("--F", type=HalfInt.parse, default=None, help="upper F (default: every state)")
    p.add_argument("--mF", type=HalfInt.parse, default=None)

    p = sub.add_parser("protocol", help="ion-photon state and pulse error budget")
    _common(p)
    p.add_argument("--id", dest="protocol_id", choices=("a", "b", "c"), required=True)
    p.add_argument("--tau-ns", type=float, default=None)
    p.add_argument("--c5", type=float, default=None)
    p.add_argument("--c6", type=float, default=None)
    p.add_argument("--a5", type=float, default=None)
    p.add_argument("--a6", type=float, default=None)
    p.add_argument("--geometry", choices=sorted(transitions.COLLECTION_FACTORS), default=None)
    p.add_argument("--filter", nargs="*", default=None, help="kept polarizations: sigma- pi sigma+")
    p.add_argument("--B", type=float, default=0.0, help="field in mT for the frequencies")

    p = sub.add_parser("detect", help="fluorescence detection Monte Carlo")
    _common(p)
    p.add_argument("--n", type=int, default=100_000, help="trajectories per prepared state")
    p.add_argument("--windows", type=_range, default=_range("0.005:0.2:0.005"), help="windows in s")
    p.add_argument("--thresholds", type=_range, default=_range("1:10:1"))
    for name, default in (("NA", 0.28), ("QE", 0.8), ("fiber-coupling", 0.2), ("dark-rate", 2.0),
                          ("s", 15.0), ("delta", 0.0), ("laser-linewidth", 1.0),
                          ("polarization-impurity", 1e-3)):
        p.add_argument(f"--{name}", type=float, default=default)

    p = sub.add_parser("link", help="fiber transmission and attempt rates")
    _common(p)
    p.add_argument("--distances", type=_range, default=_range("0:50:1"), help="km")
    p.add_argument("--attenuation", type=float, default=0.32)
    p.add_argument("--fiber-index", type=float, default=link.FIBER_INDEX)
    p.add_argument("--lifetimes", type=float, default=link.LIFETIMES_PER_ATTEMPT)
    p.add_argument("--overhead", type=float, default=0.0, help="local overhead per attempt, s")
    p.add_argument("--p-success", type=float, default=1.0)
    p.add_argument("--level", default="2Fo7/2", help="excited level supplying the lifetime")
    return ap


def _metadata(args, species_path: Path) -> dict:
    digest = hashlib.sha256(species_path.read_bytes()).hexdigest()
    skip = {"species", "out", "format", "command", "seed", "coefficient_set"}
    opts = {k: (v.tolist() if isinstance(v, np.ndarray) else v)
            for k, v in sorted(vars(args).items()) if k not in skip}
    return {"tool": "hfqubit", "version": __version__, "command": args.command,
            "species_file": species_path.name, "species_sha256": digest,
            "coefficient_set": args.coefficient_set, "seed": args.seed, "options": opts}


def cmd_levels(args, sp) -> Table:
    sets = sp.coefficient_sets
    cols = ["level", "J", "F"]
    for s in sets:
        cols += [f"energy_{s}_MHz", f"gap_below_{s}_MHz", f"extent_{s}_MHz"]
    cols.append("status")
    rows = []
    for lev in sp.levels:
        energies, missing = {}, []
        for s in sets:
            if lev.has_coefficients(s):
                energies[s] = zero_field_energies(lev.spec(s), sp.I)
            else:
                missing.append(s)
        Fs = _F_values(sp.I, lev.J)
        for k, F in enumerate(Fs):
            row = [lev.name, lev.J, F]
            for s in sets:
                e = energies.get(s)
                if e is None:
                    row += [None, None, None]
                    continue
                row += [e[F], e[F] - e[Fs[k - 1]] if k else None, max(e.values()) - min(e.values())]
            status = "ok" if not missing else "data required from cited references: " + ", ".join(missing)
            rows.append(row + [status])
    return Table(cols, rows)


def cmd_zeeman(args, sp) -> Table:
    lev = sp.level(args.level, args.coefficient_set)
    rows = [[r.B, r.level, r.F, r.mF, r.energy, r.dEdB] for r in zeeman_map(lev, sp.I, args.B)]
    return Table(["B_mT", "level", "F", "mF", "energy_MHz", "dEdB_MHz_per_mT"], rows)


def cmd_clock(args, sp) -> Table:
    lev = sp.level(args.level, args.coefficient_set)
    if args.samples and args.samples < 100:
        raise ValidationError("--samples must be 0 or at least 100")
    if args.pairs:
        cands = [c for p in args.pairs for c in clockfinder.find_clock_points(p, lev, sp.I, B_max=args.B_max)]
    else:
        cands = clockfinder.scan_candidates(lev, sp.I, args.F_low, args.F_high, B_max=args.B_max,
                                            max_delta_m=args.max_delta_m)
    rows = []
    for c in cands:
        b_unc = q_unc = None
        if args.samples and (lev.A_unc or lev.B_unc):
            res = clockfinder.propagate_uncertainty(c.pair, lev, sp.I, n_samples=args.samples,
                                                    seed=args.seed, B0=c.B0, B_max=args.B_max)
            b_unc, q_unc = res.B0_unc, res.q_unc
        rows.append([c.name, c.mF_low, c.mF_high, args.coefficient_set, c.B0, b_unc, c.q, q_unc])
    return Table(["pair", "mF_low", "mF_high", "coeff_set", "B0_mT", "B0_unc_mT", "q_Hz_per_uT2", "q_unc"], rows)


def cmd_branching(args, sp) -> Table:
    up, lo = sp.level_data(args.upper_level), sp.level_data(args.lower_level)
    if (args.F is None) != (args.mF is None):
        raise ValidationError("give both --F and --mF, or neither")
    if args.F is None:
        states = [(F, HalfInt(t)) for F in _F_values(sp.I, up.J)
                  for t in range(F.twice_value, -F.twice_value - 1, -2)]
    else:
        states = [(HalfInt.parse(args.F), HalfInt.parse(args.mF))]
    rows = []
    for st in states:
        for ch in transitions.branching(up, st, lo, sp.I):
            rows.append([ch.upper[0], ch.upper[1], ch.upper[2], ch.lower[0], ch.lower[1], ch.lower[2],
                         ch.q, ch.polarization, float(ch.weight), str(ch.weight)])
    return Table(["upper_level", "F_upper", "mF_upper", "lower_level", "F_lower", "mF_lower",
                  "q", "polarization", "weight", "weight_exact"], rows)


def cmd_protocol(args, sp) -> Table:
    overrides = {k: getattr(args, k) for k in ("tau_ns", "c5", "c6", "a5", "a6", "geometry", "filter")
                 if getattr(args, k) is not None}
    if args.protocol_id == "c" and ("c5" in overrides) != ("c6" in overrides):
        raise ValidationError("give both --c5 and --c6")
    proto = transitions.default_protocol(args.protocol_id, B=args.B, **overrides)
    sp.check_set(args.coefficient_set)
    state = transitions.ion_photon_state(proto, sp, args.coefficient_set)
    budget = transitions.pulse_error_budget(proto, sp, args.coefficient_set)
    rows = [[t.F, t.mF, t.photon, t.amplitude, t.freq_GHz] for t in state.terms]
    extra = {"terms": state.as_dict()["terms"],
             "budget": {"tau_ns": proto.tau_ns, "p_double": budget.p_double, "p_offres": budget.p_offres,
                        "worst_channel": budget.worst, "bandwidth_warning": budget.bandwidth_warning}}
    return Table(["F", "mF", "photon", "amplitude", "freq_GHz"], rows, extra=extra)


def cmd_detect(args, sp) -> Table:
    if args.n < 1:
        raise ValidationError("--n must be at least 1")
    cfg = detection.config_from_species(
        sp, args.coefficient_set, NA=args.NA, QE=args.QE, fiber_coupling=args.fiber_coupling,
        dark_rate=args.dark_rate, s=args.s, delta=args.delta, laser_linewidth=args.laser_linewidth,
        polarization_impurity=args.polarization_impurity)
    thresholds = [int(round(t)) for t in args.thresholds]
    opt = detection.optimize(cfg, args.windows, thresholds, args.n, args.seed)
    h = detection.simulate(cfg, args.n, args.seed, window=opt.window)
    size = max(len(h.bright), len(h.dark))
    b = np.pad(h.bright, (0, size - len(h.bright))) / h.n_bright
    d = np.pad(h.dark, (0, size - len(h.dark))) / h.n_dark
    rows = [[k, float(b[k]), float(d[k])] for k in range(size)]
    extra = {"summary": {
        "window_s": opt.window, "threshold": opt.threshold,
        "fidelity_bright": opt.score.fidelity_bright, "fidelity_dark": opt.score.fidelity_dark,
        "avg_fidelity": opt.fidelity, "stderr": opt.stderr, "n_per_state": args.n,
        "collection_efficiency": detection.collection_efficiency(cfg.NA, cfg.QE, cfg.fiber_coupling),
        "leaked_bright": h.leaked_bright, "leaked_dark": h.leaked_dark, "decayed_bright": h.decayed_bright,
    }}
    return Table(["counts", "bright_freq", "dark_freq"], rows, extra=extra)


def cmd_link(args, sp) -> Table:
    lev = sp.level_data(args.level)
    if lev.lifetime is None:
        raise DataMissingError(f"level {args.level} has no lifetime")
    cfg = link.LinkConfig(attenuation=args.attenuation, fiber_index=args.fiber_index,
                          p_success_per_attempt=args.p_success, local_overhead=args.overhead,
                          lifetimes_per_attempt=args.lifetimes)
    res = link.sweep(cfg, lev.lifetime, args.distances)
    rows = [[r.distance, r.transmission, r.attempt_rate, r.success_rate] for r in res]
    extra = {"summary": {"crossover_km": link.crossover_distance(cfg, lev.lifetime),
                         "doppler_limit_K": link.doppler_limit(1.0 / lev.lifetime)}}
    return Table(["distance_km", "transmission", "attempt_rate_hz", "success_rate_hz"], rows, extra=extra)


COMMANDS = {"levels": cmd_levels, "zeeman": cmd_zeeman, "clock": cmd_clock, "branching": cmd_branching,
            "protocol": cmd_protocol, "detect": cmd_detect, "link": cmd_link}


def run(argv=None) -> Table:
    args = build_parser().parse_args(argv)
    path = args.species or default_species_path()
    sp = load_species(path)
    if sp.levels:
        sp.check_set(args.coefficient_set)
    table = COMMANDS[args.command](args, sp)
    table.metadata = _metadata(args, Path(path))
    return table, args


def main(argv=None) -> int:
    try:
        table, args = run(argv)
        text = write_table(table, None, args.format)
        if args.out is None:
            sys.stdout.write(text)
        else:
            args.out.write_text(text, encoding="utf-8")
    except HfqubitError as exc:
        sys.stderr.write(json.dumps({"error": type(exc).__name__, "message": str(exc),
                                     "exit_code": exc.exit_code}) + "\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "OSError", "message": str(exc), "exit_code": 2}) + "\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
