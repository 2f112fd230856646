"""Quaternion matrix fields in the complex-pair representation.

A quaternion matrix M = X + Y j is stored as the pair (X, Y) of complex
tables with trailing matrix axes.  Products follow from j z = conj(z) j:

    (X1 + Y1 j)(X2 + Y2 j) = (X1 X2 - Y1 conj(Y2)) + (X1 Y2 + Y1 conj(X2)) j

M is anti-self-dual (conj-transpose plus itself vanishes) exactly when X is
skew-Hermitian and Y is complex symmetric; these form the Lie algebra of
the group of quaternion matrices with conj(P)^t P = I.  The complex
embedding [[X, Y], [-conj(Y), conj(X)]] is multiplication-compatible and
sends anti-self-dual matrices to skew-Hermitian ones, which gives a
vectorized exponential via eigh.
"""

import numpy as np

__all__ = [
    "qp_matmul",
    "qp_matvec",
    "qp_conj_t",
    "qp_dagger_defect",
    "qp_left_i",
    "qp_right_i",
    "qp_exp_asd",
    "qp_identity_like",
    "qp_frobenius",
    "qp_commutator",
    "project_asd",
    "random_asd",
]


def qp_matmul(m1, m2):
    x1, y1 = m1
    x2, y2 = m2
    x = np.einsum("...ij,...jk->...ik", x1, x2) - np.einsum(
        "...ij,...jk->...ik", y1, np.conj(y2)
    )
    y = np.einsum("...ij,...jk->...ik", x1, y2) + np.einsum(
        "...ij,...jk->...ik", y1, np.conj(x2)
    )
    return x, y


def qp_matvec(m, v):
    x, y = m
    v1, v2 = v
    out1 = np.einsum("...ij,...j->...i", x, v1) - np.einsum(
        "...ij,...j->...i", y, np.conj(v2)
    )
    out2 = np.einsum("...ij,...j->...i", x, v2) + np.einsum(
        "...ij,...j->...i", y, np.conj(v1)
    )
    return out1, out2


def qp_conj_t(m):
    x, y = m
    return np.conj(np.swapaxes(x, -1, -2)), -np.swapaxes(y, -1, -2)


def qp_dagger_defect(m):
    """max |conj(M)^t + M|: zero exactly on the anti-self-dual algebra."""
    ct = qp_conj_t(m)
    return max(
        float(np.max(np.abs(ct[0] + m[0]))), float(np.max(np.abs(ct[1] + m[1])))
    )


def qp_left_i(m):
    x, y = m
    return 1j * x, 1j * y


def qp_right_i(m):
    x, y = m
    return 1j * x, -1j * y


def qp_identity_like(m):
    x, _ = m
    eye = np.eye(x.shape[-1], dtype=complex)
    return np.broadcast_to(eye, x.shape).copy(), np.zeros_like(x)


def qp_frobenius(m):
    """Pointwise Frobenius magnitude table."""
    x, y = m
    return np.sqrt((np.abs(x) ** 2 + np.abs(y) ** 2).sum(axis=(-1, -2)))


def qp_commutator(m1, m2):
    a = qp_matmul(m1, m2)
    b = qp_matmul(m2, m1)
    return a[0] - b[0], a[1] - b[1]


def project_asd(m):
    """Nearest anti-self-dual matrix: skew-Hermitian X, symmetric Y."""
    x, y = m
    xs = 0.5 * (x - np.conj(np.swapaxes(x, -1, -2)))
    ys = 0.5 * (y + np.swapaxes(y, -1, -2))
    return xs, ys


def random_asd(rng, shape, dim):
    """Random anti-self-dual matrix field of the given grid shape."""
    x = rng.standard_normal(shape + (dim, dim)) + 1j * rng.standard_normal(
        shape + (dim, dim)
    )
    y = rng.standard_normal(shape + (dim, dim)) + 1j * rng.standard_normal(
        shape + (dim, dim)
    )
    return project_asd((x, y))


def _embed(m):
    x, y = m
    dim = x.shape[-1]
    out = np.zeros(x.shape[:-2] + (2 * dim, 2 * dim), dtype=complex)
    out[..., :dim, :dim] = x
    out[..., :dim, dim:] = y
    out[..., dim:, :dim] = -np.conj(y)
    out[..., dim:, dim:] = np.conj(x)
    return out


def qp_exp_asd(u):
    """exp of an anti-self-dual matrix field; the result satisfies
    conj(P)^t P = I.  Uses eigh of the skew-Hermitian complex embedding."""
    x, _ = u
    dim = x.shape[-1]
    e = _embed(u)
    herm = 1j * e  # Hermitian
    w, v = np.linalg.eigh(herm)
    phase = np.exp(-1j * w)
    expd = np.einsum("...ij,...j,...kj->...ik", v, phase, np.conj(v))
    return expd[..., :dim, :dim], expd[..., :dim, dim:]
