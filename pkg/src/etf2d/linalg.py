"""Small matrix helpers shared by the simulator and the bound recursions."""

import numpy as np

# Eigenvalues above -PSD_RTOL * ||M||_F count as zero.
PSD_RTOL = 1e-9


def symmetrize(M):
    return 0.5 * (M + np.swapaxes(M, -1, -2))


def min_eig(M):
    return float(np.linalg.eigvalsh(symmetrize(np.asarray(M, dtype=float)))[0])


def is_psd(M, rtol=PSD_RTOL):
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return True
    scale = np.linalg.norm(M)
    return min_eig(M) >= -rtol * max(scale, np.finfo(float).tiny)


def psd_sqrt(M):
    """Return S with S @ S.T == M for a symmetric PSD matrix (zero allowed)."""
    w, V = np.linalg.eigh(symmetrize(np.asarray(M, dtype=float)))
    w = np.clip(w, 0.0, None)
    return V * np.sqrt(w)


def matvec(M, x):
    """Apply ``M`` to the trailing axis of ``x`` with a fixed summation order.

    The explicit column loop makes the result bit-identical regardless of how
    many leading axes ``x`` carries, which the zero-noise residual checks rely on.
    """
    M = np.asarray(M, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (M.shape[0],))
    for col in range(M.shape[1]):
        out = out + M[:, col] * x[..., col, None]
    return out



def matvec_field(Ms, x):
    """Cell-wise :func:`matvec`: ``Ms`` is (..., r, c) per cell, ``x`` is (T, ..., c).

    Same summation order as :func:`matvec`, hence bit-identical per cell.
    """
    out = np.zeros(x.shape[:-1] + (Ms.shape[-2],))
    for col in range(Ms.shape[-1]):
        out = out + Ms[..., :, col] * x[..., col, None]
    return out
