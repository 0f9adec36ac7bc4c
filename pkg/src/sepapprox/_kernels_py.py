"""NumPy implementations of the hot kernels (fallback for the compiled ones)."""
import numpy as np


def _locate(nodes, x):
    k = np.clip(np.searchsorted(nodes, x, side="right") - 1, 0, len(nodes) - 2)
    t = (x - nodes[k]) / (nodes[k + 1] - nodes[k])
    return k, t


def interp_gamma(flat, nodes, queries):
    """Multilinear interpolation on an (N, N, N, N, 4) grid.

    ``queries`` is (M, 4) and must already lie inside the node range.
    Returns (M, 4).
    """
    queries = np.asarray(queries, dtype=float)
    ks, ts = zip(*(_locate(nodes, queries[:, d]) for d in range(4)))
    out = np.zeros((len(queries), flat.shape[-1]))
    for corner in range(16):
        bits = [(corner >> (3 - d)) & 1 for d in range(4)]
        w = np.ones(len(queries))
        idx = []
        for d, b in enumerate(bits):
            w = w * (ts[d] if b else 1.0 - ts[d])
            idx.append(ks[d] + b)
        out += w[:, None] * flat[idx[0], idx[1], idx[2], idx[3]]
    return out


def rational_correction(G, g, area, delta):
    """``-area * delta * g^T (I - delta G)^{-1} g`` for 2x2 ``G`` stored as
    (M, 4) row-major."""
    G = np.asarray(G, dtype=float).reshape(-1, 4)
    a, b, c, d = G.T
    m00, m01, m10, m11 = 1.0 - delta * a, -delta * b, -delta * c, 1.0 - delta * d
    det = m00 * m11 - m01 * m10
    g0, g1 = g[:, 0], g[:, 1]
    q = (g0 * (m11 * g0 - m01 * g1) + g1 * (-m10 * g0 + m00 * g1)) / det
    return -area * delta * q


def holder_means(indptr, indices, weights, values, alpha, fallback):
    """Row-wise weighted Hoelder means of ``values`` over a CSR pattern.

    Rows without positive weight get ``fallback``; the second result flags
    them.
    """
    n = len(indptr) - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    wsum = np.bincount(rows, weights=weights, minlength=n)
    acc = np.bincount(rows, weights=weights * values[indices] ** alpha, minlength=n)
    empty = wsum <= 0.0
    out = np.asarray(fallback, dtype=float).copy()
    ok = ~empty
    out[ok] = (acc[ok] / wsum[ok]) ** (1.0 / alpha)
    return out, empty
