"""Hyperfine + Zeeman Hamiltonian of a single fine-structure level.

In frequency units (MHz) with B in mT::

    H = A I.J + B_hfs [6 (I.J)^2 + 3 I.J - 2 I(I+1) J(J+1)] / [2I(2I-1) 2J(2J-1)]
        + mu_B B (gJ Jz + gI Iz)

The Hamiltonian conserves m_F = m_I + m_J, so it is assembled and
diagonalized block by block in the product basis |m_I, m_J>.

Eigenstates carry adiabatic (F, m_F) labels. At B = 0 each block is
diagonal in the coupled basis, so the labels start from the
Clebsch-Gordan states; they are then carried along an ordered field scan by
maximum overlap between neighbouring points, halving the step wherever the
overlap assignment is not clean. Within one m_F block the eigenvalues of a
one-parameter family do not cross, so once a scan has been verified the
label of every eigenvector is fixed by its energy rank for all fields it
covers.
"""
from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .angmom import HalfInt, clebsch_gordan, ladder_matrix_elements, projections, twice
from .constants import MU_B_MHZ_PER_MT
from .eigen import jacobi_eigh
from .errors import LabelingError, ValidationError
from .species import LevelSpec

__all__ = [
    "Block",
    "ZeemanState",
    "ZeemanSolver",
    "MapRow",
    "build_hamiltonian",
    "eigenstates",
    "zeeman_map",
    "zero_field_energy",
    "zero_field_energies",
    "hyperfine_splitting",
    "solver_for",
]

DEGENERACY_TOL = 1e-9  # MHz


@dataclass(frozen=True)
class Block:
    """One m_F block of the Hamiltonian."""

    mF: HalfInt
    basis: tuple  # ((m_I, m_J), ...) as HalfInt pairs
    matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class ZeemanState:
    F: HalfInt
    mF: HalfInt
    B: float
    energy: float
    composition: np.ndarray
    basis: tuple
    dEdB: float

    @property
    def label(self) -> tuple[HalfInt, HalfInt]:
        return self.F, self.mF


@dataclass(frozen=True)
class MapRow:
    B: float
    level: str
    F: HalfInt
    mF: HalfInt
    energy: float
    dEdB: float


def _F_values(I, J) -> list[HalfInt]:
    tI, tJ = twice(I), twice(J)
    return [HalfInt(t) for t in range(abs(tI - tJ), tI + tJ + 1, 2)]


def zero_field_energy(level: LevelSpec, I, F) -> float:
    """Closed-form zero-field hyperfine energy of manifold F (MHz)."""
    i, j, f = (twice(x) / 2 for x in (I, level.J, F))
    K = f * (f + 1) - i * (i + 1) - j * (j + 1)
    energy = 0.5 * level.A_hfs * K
    if level.B_hfs:
        if i < 1 or j < 1:
            raise ValidationError(
                f"level {level.name}: quadrupole term is singular for I={i}, J={j} with B_hfs != 0"
            )
        energy += level.B_hfs * (1.5 * K * (K + 1) - 2 * i * (i + 1) * j * (j + 1)) / (
            2 * i * (2 * i - 1) * 2 * j * (2 * j - 1)
        )
    return energy


def zero_field_energies(level: LevelSpec, I) -> dict[HalfInt, float]:
    return {F: zero_field_energy(level, I, F) for F in _F_values(I, level.J)}


def hyperfine_splitting(level: LevelSpec, I, F_low, F_high) -> float:
    """E(F_high) - E(F_low) at zero field, MHz."""
    return zero_field_energy(level, I, F_high) - zero_field_energy(level, I, F_low)


class _LevelModel:
    """Field-independent pieces of the block Hamiltonian."""

    def __init__(self, level: LevelSpec, I):
        self.level = level
        self.I = HalfInt.parse(I)
        i2, j2 = self.I.twice_value, level.J.twice_value
        if level.B_hfs and (i2 < 2 or j2 < 2):
            raise ValidationError(
                f"level {level.name}: quadrupole term is singular for I={self.I}, J={level.J} with B_hfs != 0"
            )
        iz, ip, im = ladder_matrix_elements(self.I)
        jz, jp, jm = ladder_matrix_elements(level.J)
        idotj = np.kron(iz, jz) + 0.5 * (np.kron(ip, jm) + np.kron(im, jp))
        if i2 >= 2 and j2 >= 2:
            i, j = i2 / 2, j2 / 2
            cas = i * (i + 1) * j * (j + 1)
            quad = 6 * idotj @ idotj + 3 * idotj - 2 * cas * np.eye(len(idotj))
            quad /= 2 * i * (2 * i - 1) * 2 * j * (2 * j - 1)
        else:
            quad = np.zeros_like(idotj)
        h0 = level.A_hfs * idotj + level.B_hfs * quad
        mI = [m for m in projections(self.I)]
        mJ = [m for m in projections(level.J)]
        product = [(a, b) for a in mI for b in mJ]
        zdiag = MU_B_MHZ_PER_MT * np.array(
            [level.gJ * float(b) + level.gI * float(a) for a, b in product]
        )
        self.F_values = _F_values(self.I, level.J)
        self.blocks = {}
        for tm in range(i2 + j2, -(i2 + j2) - 1, -2):
            mF = HalfInt(tm)
            idx = [k for k, (a, b) in enumerate(product) if a.twice_value + b.twice_value == tm]
            basis = tuple(product[k] for k in idx)
            Fs = [F for F in self.F_values if F.twice_value >= abs(tm)]
            ref = np.array(
                [[clebsch_gordan(self.I, a, level.J, b, F, mF) for F in Fs] for a, b in basis]
            )
            self.blocks[mF] = dict(
                basis=basis,
                h0=h0[np.ix_(idx, idx)].copy(),
                ij=idotj[np.ix_(idx, idx)].copy(),
                quad=quad[np.ix_(idx, idx)].copy(),
                z=zdiag[idx].copy(),
                Fs=Fs,
                ref=ref,
            )

    def block_matrix(self, mF: HalfInt, B: float) -> np.ndarray:
        blk = self.blocks[mF]
        return blk["h0"] + B * np.diag(blk["z"])

    def block_eigen(self, mF: HalfInt, Bs):
        """Ascending eigenpairs of block mF for an array of fields."""
        blk = self.blocks[mF]
        Bs = np.asarray(Bs, dtype=float)
        mats = blk["h0"][None, :, :] + Bs[:, None, None] * np.diag(blk["z"])[None, :, :]
        return jacobi_eigh(mats)

    def block_eigen_coeffs(self, mF: HalfInt, A, Bq, Bs):
        """Like :meth:`block_eigen` with per-sample A and B_hfs arrays."""
        blk = self.blocks[mF]
        A, Bq, Bs = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (A, Bq, Bs)))
        mats = (
            A[:, None, None] * blk["ij"][None]
            + Bq[:, None, None] * blk["quad"][None]
            + Bs[:, None, None] * np.diag(blk["z"])[None]
        )
        return jacobi_eigh(mats)


class ZeemanSolver:
    """Labelled eigenstates of one level, with a lazily extended label scan.

    Args:
        level: the level and its coefficient set.
        I: nuclear spin.
        step: tracking step in mT.
        min_step: smallest step tried near avoided crossings before a
            labelling failure is reported.
    """

    def __init__(self, level: LevelSpec, I, step: float = 0.01, min_step: float = 1e-8):
        self.model = _LevelModel(level, I)
        self.level = level
        self.I = self.model.I
        self.step = float(step)
        self.min_step = float(min_step)
        self._tracked = 0.0
        self._rank_labels: dict[HalfInt, list[HalfInt]] | None = None
        self._lock = threading.Lock()

    @property
    def mF_values(self) -> list[HalfInt]:
        return list(self.model.blocks)

    def labels(self, mF) -> list[HalfInt]:
        """F label of each eigenvalue rank (ascending energy) in block mF."""
        self._ensure_initial()
        return self._rank_labels[HalfInt.parse(mF)]

    # label tracking -----------------------------------------------------

    def _ensure_initial(self):
        if self._rank_labels is not None:
            return
        with self._lock:
            if self._rank_labels is not None:
                return
            labels = {}
            for mF, blk in self.model.blocks.items():
                labels[mF] = self._initial_labels(mF, blk)
            self._rank_labels = labels

    def _initial_labels(self, mF, blk) -> list[HalfInt]:
        ref = blk["ref"]
        if len(blk["Fs"]) == 1:
            return list(blk["Fs"])
        b = self.step
        while True:
            _, v = self.model.block_eigen(mF, [b])
            ov = np.abs(ref.T @ v[0])  # rows: F, cols: rank
            assign = ov.argmax(axis=0)
            if len(set(assign)) == len(assign) and ov[assign, range(len(assign))].min() > 0.5:
                return [blk["Fs"][k] for k in assign]
            b /= 2
            if b < self.min_step:
                # accidental zero-field degeneracy: fall back to optimal assignment
                from scipy.optimize import linear_sum_assignment

                rows, cols = linear_sum_assignment(-ov)
                out = [None] * len(cols)
                for r, c in zip(rows, cols):
                    out[c] = blk["Fs"][r]
                return out

    def ensure_tracked(self, B_max: float) -> None:
        """Verify the rank labels by an ordered scan from the current end to B_max."""
        self._ensure_initial()
        B_max = float(B_max)
        if B_max <= self._tracked:
            return
        with self._lock:
            if B_max <= self._tracked:
                return
            start = self._tracked
            n = max(1, int(math.ceil((B_max - start) / self.step - 1e-9)))
            grid = np.linspace(start, B_max, n + 1)
            for mF, blk in self.model.blocks.items():
                if len(blk["Fs"]) > 1:
                    self._verify_block(mF, grid)
            self._tracked = B_max

    def _verify_block(self, mF, grid):
        w, v = self.model.block_eigen(mF, grid)
        self._check_gaps(mF, grid, w)
        ov = np.abs(np.einsum("kir,kis->krs", v[:-1], v[1:]))
        bad = np.nonzero((ov.argmax(axis=1) != np.arange(ov.shape[1])).any(axis=1))[0]
        for k in bad:
            self._refine(mF, grid[k], grid[k + 1], v[k], v[k + 1])

    def _refine(self, mF, b0, b1, v0, v1):
        if b1 - b0 < self.min_step:
            raise LabelingError(
                f"level {self.level.name}, m_F={mF}: cannot resolve adiabatic labels near B={b0:.9g} mT"
            )
        mid = 0.5 * (b0 + b1)
        w, v = self.model.block_eigen(mF, [mid])
        self._check_gaps(mF, [mid], w)
        for (a, va), (b, vb) in (((b0, v0), (mid, v[0])), ((mid, v[0]), (b1, v1))):
            ov = np.abs(va.T @ vb)
            if (ov.argmax(axis=0) != np.arange(ov.shape[0])).any():
                self._refine(mF, a, b, va, vb)

    def _check_gaps(self, mF, grid, w):
        if w.shape[1] < 2:
            return
        gaps = np.diff(w, axis=1).min(axis=1)
        grid = np.asarray(grid)
        hit = (gaps < DEGENERACY_TOL) & (grid > 0)
        if hit.any():
            b = grid[np.argmax(hit)]
            raise LabelingError(
                f"level {self.level.name}, m_F={mF}: tracked states degenerate within "
                f"{DEGENERACY_TOL} MHz at B={b:.9g} mT"
            )

    # evaluation ---------------------------------------------------------

    def block_states(self, mF, Bs):
        """Energies, Hellmann-Feynman slopes and vectors for one block.

        Args:
            mF: block.
            Bs: array of fields; negative fields are evaluated via the
                (B, m_F) -> (-B, -m_F) symmetry.

        Returns:
            dict mapping F to (energy, dEdB, vectors) arrays over Bs.
        """
        mF = HalfInt.parse(mF)
        Bs = np.atleast_1d(np.asarray(Bs, dtype=float))
        if mF not in self.model.blocks:
            raise ValidationError(f"m_F={mF} does not exist in level {self.level.name}")
        out_e = {F: np.empty(len(Bs)) for F in self.model.blocks[mF]["Fs"]}
        out_d = {F: np.empty(len(Bs)) for F in out_e}
        out_v = {F: np.empty((len(Bs), len(self.model.blocks[mF]["basis"]))) for F in out_e}
        for sign, sel in ((1, Bs >= 0), (-1, Bs < 0)):
            if not sel.any():
                continue
            block = mF if sign > 0 else -mF
            fields = np.abs(Bs[sel])
            self.ensure_tracked(fields.max())
            blk = self.model.blocks[block]
            w, v = self.model.block_eigen(block, fields)
            slope = np.einsum("kir,i,kir->kr", v, blk["z"], v)
            for r, F in enumerate(self.labels(block)):
                out_e[F][sel] = w[:, r]
                out_d[F][sel] = sign * slope[:, r]
                vec = v[:, :, r]
                if sign < 0:
                    # basis of -mF reversed maps (mI, mJ) -> (-mI, -mJ)
                    vec = vec[:, ::-1]
                out_v[F][sel] = vec
        return {F: (out_e[F], out_d[F], out_v[F]) for F in out_e}

    def state(self, F, mF, B: float) -> ZeemanState:
        F, mF = HalfInt.parse(F), HalfInt.parse(mF)
        res = self.block_states(mF, [B])
        if F not in res:
            raise ValidationError(f"state |{F}, {mF}> does not exist in level {self.level.name}")
        e, d, v = res[F]
        return self._make_state(F, mF, float(B), e[0], d[0], v[0])

    def _make_state(self, F, mF, B, e, d, vec):
        blk = self.model.blocks[mF]
        ref = blk["ref"][:, blk["Fs"].index(F)]
        ov = float(ref @ vec)
        if abs(ov) < 1e-8:
            ov = float(vec[np.argmax(np.abs(vec))])
        vec = vec if ov >= 0 else -vec
        return ZeemanState(F=F, mF=mF, B=B, energy=float(e), composition=vec.copy(),
                           basis=blk["basis"], dEdB=float(d))

    def states(self, B: float) -> list[ZeemanState]:
        if B < 0:
            raise ValidationError("magnetic field must be non-negative")
        out = []
        for mF in self.model.blocks:
            for F, (e, d, v) in self.block_states(mF, [B]).items():
                out.append(self._make_state(F, mF, float(B), e[0], d[0], v[0]))
        out.sort(key=lambda s: (-s.F.twice_value, -s.mF.twice_value))
        return out


@lru_cache(maxsize=128)
def solver_for(level: LevelSpec, I) -> ZeemanSolver:
    """Shared solver per (level, I); lru_cache is safe for threaded use."""
    return ZeemanSolver(level, HalfInt.parse(I))


def build_hamiltonian(level: LevelSpec, I, B: float) -> list[Block]:
    """m_F blocks of the Hamiltonian at field B (mT), highest m_F first."""
    if B < 0:
        raise ValidationError("magnetic field must be non-negative")
    model = _LevelModel(level, I)
    return [Block(mF, blk["basis"], model.block_matrix(mF, B)) for mF, blk in model.blocks.items()]


def eigenstates(level: LevelSpec, I, B: float) -> list[ZeemanState]:
    """All (2I+1)(2J+1) labelled eigenstates at field B."""
    return solver_for(level, HalfInt.parse(I)).states(B)


def zeeman_map(level: LevelSpec, I, B_grid) -> list[MapRow]:
    """One row per state per field point, in grid order."""
    B_grid = np.asarray(B_grid, dtype=float)
    if B_grid.ndim != 1 or len(B_grid) == 0:
        raise ValidationError("B grid must be a non-empty 1-d sequence")
    if (B_grid < 0).any():
        raise ValidationError("magnetic field must be non-negative")
    if (np.diff(B_grid) < 0).any():
        raise ValidationError("B grid must be monotone non-decreasing")
    solver = solver_for(level, HalfInt.parse(I))
    solver.ensure_tracked(B_grid.max())
    columns = {}
    for mF in solver.mF_values:
        for F, (e, d, _) in solver.block_states(mF, B_grid).items():
            columns[(F, mF)] = (e, d)
    order = sorted(columns, key=lambda k: (-k[0].twice_value, -k[1].twice_value))
    rows = []
    for k, b in enumerate(B_grid):
        for F, mF in order:
            e, d = columns[(F, mF)]
            rows.append(MapRow(float(b), level.name, F, mF, float(e[k]), float(d[k])))
    return rows
