"""Pointwise symmetric orthogonal involutions S (S^2 = I) and their frames.

S fields are (n, n, m, m) tables of m x m real matrices.  make_chirality
conjugates the reference involution diag(+1 x m_plus, -1 x ...) by a given
rotation field; extract_frame inverts that numerically: per-point
eigendecomposition followed by a breadth-first gauge alignment sweep that
minimizes nearest-neighbor frame jumps.
"""

import json
from dataclasses import dataclass

import numpy as np

from chirality_lab.norms import l2_norm

__all__ = [
    "s0_matrix",
    "make_chirality",
    "validate_chirality",
    "projections",
    "extract_frame",
    "ChiralityField",
    "AlignmentError",
    "rotation2",
    "save_chirality",
    "load_chirality",
    "dirichlet_energy",
]


class AlignmentError(RuntimeError):
    """Frame alignment hit a jump above the threshold (topological
    obstruction or under-resolved grid)."""


def s0_matrix(n, m):
    """diag(+1 repeated m, -1 repeated n - m)."""
    if not 0 <= m <= n:
        raise ValueError(f"need 0 <= m <= n, got m={m}, n={n}")
    return np.diag(np.concatenate([np.ones(m), -np.ones(n - m)]))


def rotation2(alpha):
    """SO(2) rotation field from an angle table."""
    alpha = np.asarray(alpha)
    c, s = np.cos(alpha), np.sin(alpha)
    q = np.empty(alpha.shape + (2, 2))
    q[..., 0, 0] = c
    q[..., 0, 1] = -s
    q[..., 1, 0] = s
    q[..., 1, 1] = c
    return q


@dataclass
class ChiralityField:
    grid: object
    s: np.ndarray          # (n, n, m, m)
    m_plus: int            # count of +1 eigenvalues
    q: np.ndarray | None = None
    alpha: np.ndarray | None = None

    @property
    def dim(self):
        return self.s.shape[-1]


def _pointwise_max(a):
    return float(np.max(np.abs(a)))


def make_chirality(grid, q, m_plus, tol=1e-10):
    """S = Q S0 Q^T for a pointwise-orthogonal Q field with det 1."""
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]
    eye = np.eye(n)
    orth = _pointwise_max(np.einsum("...ji,...jk->...ik", q, q) - eye)
    if orth > tol:
        raise ValueError(f"Q is not orthogonal to {tol:.0e} (defect {orth:.3e})")
    det = np.linalg.det(q)
    if _pointwise_max(det - 1.0) > tol:
        raise ValueError("Q must have determinant 1 pointwise")
    s0 = s0_matrix(n, m_plus)
    s = np.einsum("...ij,jk,...lk->...il", q, s0, q)
    return ChiralityField(grid, s, m_plus, q=q)


def validate_chirality(field, tol=1e-12):
    """Check symmetry, orthogonality, involution, and the constancy of
    trace and determinant.  Returns the worst defect found."""
    s = field.s
    n = field.dim
    eye = np.eye(n)
    defects = {
        "symmetry": _pointwise_max(s - np.swapaxes(s, -1, -2)),
        "involution": _pointwise_max(np.einsum("...ij,...jk->...ik", s, s) - eye),
    }
    tr = np.einsum("...ii", s)
    det = np.linalg.det(s)
    defects["trace_const"] = _pointwise_max(tr - (2 * field.m_plus - n))
    defects["det_const"] = _pointwise_max(det - (-1.0) ** (n - field.m_plus))
    worst = max(defects.values())
    if worst > tol:
        raise ValueError(f"chirality invariants violated: {defects}")
    return defects


def projections(field_or_s):
    """P_L = (I + S)/2 onto the +1 eigenspace, P_R = (I - S)/2 onto -1."""
    s = field_or_s.s if isinstance(field_or_s, ChiralityField) else np.asarray(field_or_s)
    eye = np.eye(s.shape[-1])
    return 0.5 * (eye + s), 0.5 * (eye - s)


def dirichlet_energy(plan, s):
    """|| grad S ||_2 with spectral derivatives, all entries aggregated."""
    gx = plan.dx(s)
    gy = plan.dy(s)
    return np.sqrt(l2_norm(plan.grid, gx) ** 2 + l2_norm(plan.grid, gy) ** 2)


def _align_blocks(q_cur, q_ref, m_plus):
    """Best right multiplication by block O(m) x O(n-m) with total det +1.

    Each block is a Procrustes fit (polar factor of the overlap); if the
    determinants multiply to -1, the cheapest singular direction among the
    two blocks is flipped to restore SO(n).
    """
    n = q_cur.shape[0]
    slices = [slice(0, m_plus), slice(m_plus, n)]
    factor = []  # (u, vt) per block, None for empty blocks
    rots = []
    for sl in slices:
        a, b = q_cur[:, sl], q_ref[:, sl]
        if a.shape[1] == 0:
            factor.append(None)
            rots.append(np.zeros((0, 0)))
            continue
        u, _, vt = np.linalg.svd(a.T @ b)
        factor.append((u, vt))
        rots.append(u @ vt)
    total_det = np.prod([np.linalg.det(r) for r in rots if r.size])
    if total_det < 0:
        best = None
        for bi, fac in enumerate(factor):
            if fac is None:
                continue
            u, vt = fac
            flip = np.eye(u.shape[1])
            flip[-1, -1] = -1.0
            cand = u @ flip @ vt
            cost = np.linalg.norm(q_cur[:, slices[bi]] @ cand - q_ref[:, slices[bi]])
            if best is None or cost < best[0]:
                best = (cost, bi, cand)
        rots[best[1]] = best[2]
    out = np.zeros((n, n))
    if rots[0].size:
        out[:m_plus, :m_plus] = rots[0]
    if rots[1].size:
        out[m_plus:, m_plus:] = rots[1]
    return out


def extract_frame(plan, s, m_plus, energy_limit=0.5, jump_threshold=np.pi / 2):
    """Recover a rotation field Q with Q S0 Q^T = S.

    Per-point eigenvectors are gauge-aligned by a breadth-first sweep from
    the grid origin (4-neighbor torus graph).  Q is only determined up to
    the block stabilizer of S0; anchoring at the origin makes the output
    deterministic.  Raises AlignmentError when some neighbor jump exceeds
    ``jump_threshold`` after alignment.  Pass ``energy_limit=None`` to skip
    the smallness precondition.

    Returns (q, info) with info carrying the conjugation residual and the
    measured energy ratio ||grad Q|| / ||grad S||.
    """
    s = np.asarray(s, dtype=float)
    nx, ny, n, _ = s.shape
    grid = plan.grid
    energy_s = dirichlet_energy(plan, s)
    if energy_limit is not None and energy_s > energy_limit:
        raise ValueError(
            f"||grad S||_2 = {energy_s:.3f} exceeds the threshold {energy_limit}; "
            "pass energy_limit=None to force extraction"
        )

    w, v = np.linalg.eigh(s)  # ascending: -1 block first
    q = np.concatenate([v[..., :, n - m_plus:], v[..., :, : n - m_plus]], axis=-1)
    neg = np.linalg.det(q) < 0
    q[neg, :, -1] *= -1.0

    visited = np.zeros((nx, ny), dtype=bool)
    visited[0, 0] = True
    from collections import deque

    queue = deque([(0, 0)])
    order = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    while queue:
        i, j = queue.popleft()
        for di, dj in order:
            ii, jj = (i + di) % nx, (j + dj) % ny
            if visited[ii, jj]:
                continue
            rot = _align_blocks(q[ii, jj], q[i, j], m_plus)
            q[ii, jj] = q[ii, jj] @ rot
            visited[ii, jj] = True
            queue.append((ii, jj))

    # after the sweep every edge (tree and seam) must be a small rotation
    max_jump = 0.0
    for axis in (0, 1):
        qs = np.roll(q, -1, axis=axis)
        rel = np.einsum("...ji,...jk->...ik", q, qs)
        tr = np.einsum("...ii", rel)
        ang = np.arccos(np.clip((tr - (n - 2)) / 2.0, -1.0, 1.0))
        max_jump = max(max_jump, float(ang.max()))
    if max_jump > jump_threshold:
        raise AlignmentError(
            f"frame jump {max_jump:.3f} rad exceeds {jump_threshold:.3f}; "
            "no continuous frame on this grid"
        )

    s0 = s0_matrix(n, m_plus)
    recon = np.einsum("...ij,jk,...lk->...il", q, s0, q)
    residual = _pointwise_max(recon - s)
    energy_q = dirichlet_energy(plan, q)
    info = {
        "residual": residual,
        "max_jump": max_jump,
        "energy_s": energy_s,
        "energy_q": energy_q,
        "energy_ratio": energy_q / energy_s if energy_s > 0 else 0.0,
    }
    return q, info


def save_chirality(field, path):
    """JSON header line + raw row-major float64 matrices."""
    header = {
        "n": field.dim,
        "m": field.m_plus,
        "grid_n": field.grid.n,
        "length": field.grid.length,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(np.ascontiguousarray(field.s, dtype=np.float64).tobytes())


def load_chirality(path, grid_factory=None):
    from chirality_lab.field_core import Grid2

    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        raw = fh.read()
    gn, n = header["grid_n"], header["n"]
    s = np.frombuffer(raw, dtype=np.float64).reshape(gn, gn, n, n).copy()
    grid = (grid_factory or Grid2)(gn, length=header["length"])
    return ChiralityField(grid, s, header["m"])
