"""Cyclic Jacobi eigensolver for small dense real symmetric matrices.

Works on a single ``(n, n)`` matrix or on a stack ``(..., n, n)``; every
rotation is applied to the whole stack at once, which is what makes field
scans over thousands of points cheap.
"""
from __future__ import annotations

import numpy as np

from .errors import NonConvergenceError

__all__ = ["jacobi_eigh"]


def jacobi_eigh(a, rtol: float = 1e-13, max_sweeps: int = 60):
    """Eigen-decompose symmetric matrices by cyclic Jacobi rotations.

    Sweeps stop once every off-diagonal magnitude is below
    ``rtol * max|A|`` for every matrix in the stack.

    Returns:
        (w, v): eigenvalues in ascending order, shape ``(..., n)``, and
        eigenvectors as columns, shape ``(..., n, n)``.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise ValueError(f"expected square matrices, got shape {a.shape}")
    if not np.allclose(a, np.swapaxes(a, -1, -2), rtol=0, atol=1e-12 * max(1.0, np.abs(a).max(initial=0))):
        raise ValueError("matrix is not symmetric")
    n = a.shape[-1]
    batch = a.shape[:-2]
    a = a.reshape((-1, n, n))
    v = np.broadcast_to(np.eye(n), a.shape).copy()

    scale = np.abs(a).max(axis=(1, 2))
    limit = rtol * np.where(scale > 0, scale, 1.0)
    iu = np.triu_indices(n, 1)

    for _ in range(max_sweeps):
        off = np.abs(a[:, iu[0], iu[1]]).max(axis=1, initial=0.0)
        if np.all(off < limit):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[:, p, q]
                active = np.abs(apq) >= limit * 1e-3
                if not active.any():
                    continue
                safe = np.where(active, apq, 1.0)
                theta = (a[:, q, q] - a[:, p, p]) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                c = np.where(active, c, 1.0)
                s = np.where(active, s, 0.0)
                cc, ss = c[:, None], s[:, None]

                col_p, col_q = a[:, :, p].copy(), a[:, :, q]
                a[:, :, p] = cc * col_p - ss * col_q
                a[:, :, q] = ss * col_p + cc * col_q
                row_p, row_q = a[:, p, :].copy(), a[:, q, :]
                a[:, p, :] = cc * row_p - ss * row_q
                a[:, q, :] = ss * row_p + cc * row_q
                a[:, p, q] = np.where(active, 0.0, a[:, p, q])
                a[:, q, p] = a[:, p, q]

                vp, vq = v[:, :, p].copy(), v[:, :, q]
                v[:, :, p] = cc * vp - ss * vq
                v[:, :, q] = ss * vp + cc * vq
    else:
        off = np.abs(a[:, iu[0], iu[1]]).max(axis=1, initial=0.0)
        if not np.all(off < limit):
            raise NonConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")

    w = np.diagonal(a, axis1=1, axis2=2).copy()
    order = np.argsort(w, axis=1, kind="stable")
    w = np.take_along_axis(w, order, axis=1)
    v = np.take_along_axis(v, order[:, None, :], axis=2)
    return w.reshape(batch + (n,)), v.reshape(batch + (n, n))
