"""Species and level descriptions, and the JSON species file reader.

A species file looks like::

    {
      "name": "139La2+",
      "nuclear_spin": "7/2",
      "levels": [
        {"name": "2D5/2", "J": "5/2", "lifetime_s": 15.0, "gI": 0.0,
         "coefficients": {
            "experimental": {"A_MHz": ..., "B_MHz": ..., "A_unc_MHz": ..., "B_unc_MHz": ...},
            "theoretical":  {...}}}
      ],
      "transitions": [{"lower": "2D5/2", "upper": "2Fo7/2", "wavelength_nm_air": 1409.6}]
    }

A level may instead carry flat ``A_MHz``/``B_MHz``/``A_unc_MHz``/``B_unc_MHz``
keys, which form a single coefficient set named by its ``reference_tag``
(default ``"experimental"``). Coefficients given as ``null`` are treated as
not yet entered; asking for such a level raises :class:`DataMissingError`.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path

from .angmom import HalfInt, twice
from .errors import DataMissingError, SpeciesFormatError, ValidationError

__all__ = [
    "LevelSpec",
    "LevelData",
    "SpeciesSpec",
    "lande_gj",
    "load_species",
    "parse_species",
    "default_species_path",
]

_TERM = re.compile(r"^(?P<mult>\d+)(?P<L>[SPDFGHIK])(?P<odd>o|°)?(?P<J>\d+(?:/2)?)$")
_L_LETTERS = "SPDFGHIK"
_COEFF_KEYS = ("A_MHz", "B_MHz", "A_unc_MHz", "B_unc_MHz")


def lande_gj(J, L, S) -> float:
    """LS-coupling Lande factor with g_s = 2."""
    j, l, s = (Fraction(twice(x), 2) for x in (J, L, S))
    jj = j * (j + 1)
    return float(1 + (jj + s * (s + 1) - l * (l + 1)) / (2 * jj))


@dataclass(frozen=True)
class LevelSpec:
    """One fine-structure level with one set of hyperfine coefficients."""

    name: str
    J: HalfInt
    A_hfs: float
    B_hfs: float = 0.0
    A_unc: float = 0.0
    B_unc: float = 0.0
    gJ: float = 1.0
    gI: float = 0.0
    lifetime: float | None = None
    reference_tag: str = "experimental"
    parity: str = "even"

    def __post_init__(self):
        object.__setattr__(self, "J", HalfInt.parse(self.J))
        if self.J.twice_value < 1:
            raise ValidationError(f"level {self.name}: J must be >= 1/2")
        if self.lifetime is not None and not self.lifetime > 0:
            raise ValidationError(f"level {self.name}: lifetime must be positive")
        if self.A_unc < 0 or self.B_unc < 0:
            raise ValidationError(f"level {self.name}: uncertainties must be non-negative")
        if self.parity not in ("even", "odd"):
            raise ValidationError(f"level {self.name}: parity must be 'even' or 'odd'")

    @property
    def decay_rate(self) -> float:
        """Total decay rate 1/lifetime in s^-1."""
        if self.lifetime is None:
            raise DataMissingError(f"level {self.name} has no lifetime")
        return 1.0 / self.lifetime

    def with_coefficients(self, A_hfs: float, B_hfs: float) -> "LevelSpec":
        d = dict(self.__dict__)
        d.update(A_hfs=float(A_hfs), B_hfs=float(B_hfs))
        return LevelSpec(**d)


@dataclass(frozen=True)
class LevelData:
    """All information about a level as read from a species file."""

    name: str
    J: HalfInt
    gJ: float
    gI: float
    lifetime: float | None
    parity: str
    coefficients: dict = field(default_factory=dict, hash=False, compare=False)

    def spec(self, coefficient_set: str) -> LevelSpec:
        if coefficient_set not in self.coefficients:
            raise ValidationError(
                f"level {self.name}: unknown coefficient set {coefficient_set!r}; "
                f"available: {sorted(self.coefficients)}"
            )
        c = self.coefficients[coefficient_set]
        if c.get("A_MHz") is None:
            raise DataMissingError(
                f"level {self.name}, set {coefficient_set!r}: hyperfine coefficients not entered "
                "(data required from cited references)"
            )
        return LevelSpec(
            name=self.name,
            J=self.J,
            A_hfs=float(c["A_MHz"]),
            B_hfs=float(c.get("B_MHz") or 0.0),
            A_unc=float(c.get("A_unc_MHz") or 0.0),
            B_unc=float(c.get("B_unc_MHz") or 0.0),
            gJ=self.gJ,
            gI=self.gI,
            lifetime=self.lifetime,
            reference_tag=coefficient_set,
            parity=self.parity,
        )

    def has_coefficients(self, coefficient_set: str) -> bool:
        c = self.coefficients.get(coefficient_set)
        return c is not None and c.get("A_MHz") is not None


@dataclass(frozen=True)
class SpeciesSpec:
    name: str
    nuclear_spin: HalfInt
    levels: tuple[LevelData, ...]
    wavelengths_nm: dict = field(default_factory=dict, hash=False, compare=False)
    source_path: str | None = field(default=None, compare=False)

    @property
    def I(self) -> HalfInt:
        return self.nuclear_spin

    @property
    def coefficient_sets(self) -> list[str]:
        names: list[str] = []
        for lev in self.levels:
            for k in lev.coefficients:
                if k not in names:
                    names.append(k)
        return names

    def level_data(self, name: str) -> LevelData:
        for lev in self.levels:
            if lev.name == name:
                return lev
        raise ValidationError(f"unknown level {name!r}; available: {[l.name for l in self.levels]}")

    def level(self, name: str, coefficient_set: str = "experimental") -> LevelSpec:
        self.check_set(coefficient_set)
        return self.level_data(name).spec(coefficient_set)

    def check_set(self, coefficient_set: str) -> None:
        if coefficient_set not in self.coefficient_sets:
            raise ValidationError(
                f"unknown coefficient set {coefficient_set!r}; available: {self.coefficient_sets}"
            )

    def wavelength(self, lower: str, upper: str) -> float | None:
        return self.wavelengths_nm.get((lower, upper))


def _number(value, where: str, *, allow_none=False, positive=False, nonneg=False):
    if value is None:
        if allow_none:
            return None
        raise SpeciesFormatError(f"{where}: value required")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SpeciesFormatError(f"{where}: expected a number, got {value!r}")
    value = float(value)
    if positive and not value > 0:
        raise SpeciesFormatError(f"{where}: must be positive, got {value}")
    if nonneg and value < 0:
        raise SpeciesFormatError(f"{where}: must be non-negative, got {value}")
    return value


def _halfint(value, where: str) -> HalfInt:
    try:
        return HalfInt.parse(value)
    except (TypeError, ValueError) as exc:
        raise SpeciesFormatError(f"{where}: {exc}") from None


def _term(name: str):
    m = _TERM.match(name.replace(" ", ""))
    if not m:
        return None
    S = Fraction(int(m["mult"]) - 1, 2)
    L = _L_LETTERS.index(m["L"])
    return L, S, ("odd" if m["odd"] else "even")


def _parse_coefficients(raw, where: str) -> dict:
    if not isinstance(raw, dict):
        raise SpeciesFormatError(f"{where}: expected an object")
    out = {}
    for key in _COEFF_KEYS:
        out[key] = _number(raw.get(key), f"{where}.{key}", allow_none=True,
                           nonneg=key.endswith("unc_MHz"))
    for key in raw:
        if key not in _COEFF_KEYS and key not in ("source", "note"):
            raise SpeciesFormatError(f"{where}: unknown key {key!r}")
    if out["A_MHz"] is None and out["B_MHz"] is not None:
        raise SpeciesFormatError(f"{where}: B_MHz given without A_MHz")
    out["source"] = raw.get("source")
    return out


def _parse_level(raw, where: str, I: HalfInt) -> LevelData:
    if not isinstance(raw, dict):
        raise SpeciesFormatError(f"{where}: expected an object")
    name = raw.get("name")
    if not isinstance(name, str) or not name:
        raise SpeciesFormatError(f"{where}.name: non-empty string required")
    J = _halfint(raw.get("J"), f"{where}.J")
    if J.twice_value < 1:
        raise SpeciesFormatError(f"{where}.J: must be >= 1/2")
    term = _term(name)
    L = raw.get("L", term[0] if term else None)
    S = raw.get("S", term[1] if term else None)
    parity = raw.get("parity", term[2] if term else "even")
    if parity not in ("even", "odd"):
        raise SpeciesFormatError(f"{where}.parity: must be 'even' or 'odd'")
    gJ = _number(raw.get("gJ"), f"{where}.gJ", allow_none=True)
    if gJ is None:
        if L is None or S is None:
            raise SpeciesFormatError(f"{where}.gJ: not given and term symbol not parseable from name")
        gJ = lande_gj(J, _halfint(L, f"{where}.L"), _halfint(S, f"{where}.S"))
    gI = _number(raw.get("gI", 0.0), f"{where}.gI", allow_none=True) or 0.0
    lifetime = _number(raw.get("lifetime_s"), f"{where}.lifetime_s", allow_none=True, positive=True)

    coefficients = {}
    if "coefficients" in raw:
        sets = raw["coefficients"]
        if not isinstance(sets, dict):
            raise SpeciesFormatError(f"{where}.coefficients: expected an object keyed by set name")
        for set_name, c in sets.items():
            coefficients[set_name] = _parse_coefficients(c, f"{where}.coefficients.{set_name}")
    elif any(k in raw for k in _COEFF_KEYS):
        tag = raw.get("reference_tag", "experimental")
        flat = {k: raw.get(k) for k in _COEFF_KEYS}
        coefficients[tag] = _parse_coefficients(flat, where)

    small = I.twice_value < 2 or J.twice_value < 2
    for set_name, c in coefficients.items():
        if small and c["B_MHz"]:
            raise SpeciesFormatError(
                f"{where}.coefficients.{set_name}.B_MHz: quadrupole coefficient must be 0 when I < 1 or J < 1"
            )
    return LevelData(name=name, J=J, gJ=gJ, gI=gI, lifetime=lifetime,
                     parity=parity, coefficients=coefficients)


def parse_species(doc: dict, source_path: str | None = None) -> SpeciesSpec:
    """Validate a decoded species document."""
    if not isinstance(doc, dict):
        raise SpeciesFormatError("top level: expected a JSON object")
    name = doc.get("name")
    if not isinstance(name, str):
        raise SpeciesFormatError("name: string required")
    I = _halfint(doc.get("nuclear_spin"), "nuclear_spin")
    raw_levels = doc.get("levels", [])
    if not isinstance(raw_levels, list):
        raise SpeciesFormatError("levels: expected a list")
    levels = tuple(_parse_level(r, f"levels[{i}]", I) for i, r in enumerate(raw_levels))
    names = [lev.name for lev in levels]
    dupes = {n for n in names if names.count(n) > 1}
    if dupes:
        raise SpeciesFormatError(f"levels: duplicate level names {sorted(dupes)}")
    wavelengths = {}
    for i, t in enumerate(doc.get("transitions", [])):
        where = f"transitions[{i}]"
        if not isinstance(t, dict):
            raise SpeciesFormatError(f"{where}: expected an object")
        lo, up = t.get("lower"), t.get("upper")
        for key, val in (("lower", lo), ("upper", up)):
            if val not in names:
                raise SpeciesFormatError(f"{where}.{key}: unknown level {val!r}")
        wavelengths[(lo, up)] = _number(t.get("wavelength_nm_air"), f"{where}.wavelength_nm_air", positive=True)
    return SpeciesSpec(name=name, nuclear_spin=I, levels=levels,
                       wavelengths_nm=wavelengths, source_path=source_path)


def load_species(path=None) -> SpeciesSpec:
    """Read a species JSON file; ``None`` loads the bundled 139La2+ file."""
    if path is None:
        path = default_species_path()
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpeciesFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    try:
        return parse_species(doc, source_path=str(path))
    except SpeciesFormatError as exc:
        raise SpeciesFormatError(f"{path}: {exc}") from None


def default_species_path() -> Path:
    return Path(str(resources.files("hfqubit") / "data" / "la139_2plus.json"))
