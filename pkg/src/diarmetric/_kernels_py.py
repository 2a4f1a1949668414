"""Numpy implementations of the hot kernels (fallback when the extension is absent)."""

import numpy as np


def pairwise_sq_dists(Z):
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    diff = Z[:, None, :] - Z[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def lloyd_assign(Z, C):
    """Nearest-centroid labels and the squared distance to that centroid."""
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    C = np.ascontiguousarray(C, dtype=np.float64)
    diff = Z[:, None, :] - C[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    labels = np.argmin(d, axis=1)
    return labels.astype(np.int64), d[np.arange(len(Z)), labels]


def tuple_hinge(Z, tuples, alpha1, alpha2):
    """Per-tuple hinge values and summed embedding gradients.

    ``tuples`` has 3 columns (a, p, n) or 4 columns (a, p, n, q).  The second
    quadruplet hinge uses the q-n distance.
    """
    Z = np.ascontiguousarray(Z, dtype=np.float64)
    tuples = np.asarray(tuples, dtype=np.int64)
    G = np.zeros_like(Z)
    m = len(tuples)
    if m == 0:
        return np.zeros(0), G
    a, p, n = tuples[:, 0], tuples[:, 1], tuples[:, 2]
    za, zp, zn = Z[a], Z[p], Z[n]
    dap = np.sum((za - zp) ** 2, axis=1)
    dan = np.sum((za - zn) ** 2, axis=1)
    h1 = dap - dan + alpha1
    on1 = h1 > 0
    values = np.where(on1, h1, 0.0)
    w = on1[:, None] * 2.0
    np.add.at(G, a, w * (zn - zp))
    np.add.at(G, p, w * (zp - za))
    np.add.at(G, n, w * (za - zn))
    if tuples.shape[1] == 4:
        q = tuples[:, 3]
        zq = Z[q]
        dqn = np.sum((zq - zn) ** 2, axis=1)
        h2 = dap - dqn + alpha2
        on2 = h2 > 0
        values = values + np.where(on2, h2, 0.0)
        w2 = on2[:, None] * 2.0
        np.add.at(G, a, w2 * (za - zp))
        np.add.at(G, p, w2 * (zp - za))
        np.add.at(G, n, w2 * (zq - zn))
        np.add.at(G, q, w2 * (zn - zq))
    return values, G
