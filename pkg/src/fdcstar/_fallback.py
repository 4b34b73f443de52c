"""Pure numpy implementation of the operator-norm kernel.

Same algorithm as the compiled kernel (one-sided Jacobi with complex phase
alignment), vectorised over the stack axis instead of looping per matrix.
"""

import numpy as np

JACOBI_TOL = 1e-15
MAX_SWEEPS = 60


def opnorms(mats):
    """Largest singular value of each square matrix in a ``(n, k, k)`` stack."""
    a = np.array(mats, dtype=np.complex128, copy=True)
    if a.ndim != 3 or a.shape[1] != a.shape[2]:
        raise ValueError("matrices must be square")
    n, k, _ = a.shape
    if n == 0 or k == 0:
        return np.zeros(n)
    if k == 1:
        return np.abs(a[:, 0, 0])

    for _ in range(MAX_SWEEPS):
        rotated = False
        for p in range(k - 1):
            for q in range(p + 1, k):
                ap = a[:, :, p]
                aq = a[:, :, q]
                alpha = np.einsum("ni,ni->n", ap.conj(), ap).real
                beta = np.einsum("ni,ni->n", aq.conj(), aq).real
                gamma = np.einsum("ni,ni->n", ap.conj(), aq)
                g = np.abs(gamma)
                active = (g > 0.0) & (g > JACOBI_TOL * np.sqrt(alpha * beta))
                if not active.any():
                    continue
                rotated = True
                idx = np.nonzero(active)[0]
                g_a = g[idx]
                phase = np.conj(gamma[idx]) / g_a
                zeta = (beta[idx] - alpha[idx]) / (2.0 * g_a)
                t = np.copysign(1.0, zeta) / (np.abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                colp = a[idx, :, p]
                colq = a[idx, :, q] * phase[:, None]
                a[idx, :, p] = c[:, None] * colp - s[:, None] * colq
                a[idx, :, q] = s[:, None] * colp + c[:, None] * colq
        if not rotated:
            break

    cols = np.einsum("nij,nij->nj", a.conj(), a).real
    return np.sqrt(cols.max(axis=1))
