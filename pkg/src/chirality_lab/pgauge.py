"""Gauge construction over quaternion-unitary matrix fields.

Mirror of the scalar gauge layer for fields P with conj(P)^t P = I,
acting on the doubled 2n-component systems.  Matrices are carried in the
complex-pair representation (X, Y) of hyperunitary.py: the 1i-plane of a
quaternion matrix is its X part, the jk-plane its Y part.

The operator is

    N(P) = ( 1i-part of div(P^-1 grad P),
             jk-part of P^-1 d1 P - (P^-1 d2 P) i )

with the same torus mean bookkeeping as the scalar case: intermediate
continuation levels converge the mean-projected residual, the jk mean is
closed at the endpoint.
"""

from dataclasses import dataclass

import numpy as np

from chirality_lab.gauge import GaugeConfig, GaugeDivergence, GaugeStall
from chirality_lab.hyperunitary import (
    qp_conj_t,
    qp_dagger_defect,
    qp_exp_asd,
    qp_frobenius,
    qp_matmul,
    qp_matvec,
)
from chirality_lab.norms import l2_norm, lorentz_l21, lorentz_weak_l2, sobolev_neg_1_2

__all__ = [
    "PGaugeResult",
    "pn_apply",
    "p_gauge_solve",
    "chi_potential",
    "p_contraction_chain",
    "p_gauge_structures",
]


@dataclass
class PGaugeResult:
    p: tuple
    residual: float
    residual_1i: float
    residual_jk: float
    residual_jk_mean: float
    theta: float
    continuation_steps: int
    t_reached: float

    @property
    def unitarity_defect(self):
        prod = qp_matmul(qp_conj_t(self.p), self.p)
        dim = prod[0].shape[-1]
        eye = np.eye(dim)
        return max(
            float(np.max(np.abs(prod[0] - eye))), float(np.max(np.abs(prod[1])))
        )


def _dpair(plan, m, deriv):
    return deriv(m[0]), deriv(m[1])


def p_connection(plan, p):
    pct = qp_conj_t(p)
    x1 = qp_matmul(pct, _dpair(plan, p, plan.dx))
    x2 = qp_matmul(pct, _dpair(plan, p, plan.dy))
    return x1, x2


def _jk_of(x1, x2):
    # Y part of X1 - X2 * i; right-i sends (X, Y) to (iX, -iY)
    return x1[1] + 1j * x2[1]


def pn_apply(plan, p, check=True):
    """N(P) as (complex skew-Hermitian table V, complex symmetric table T)."""
    if check:
        prod = qp_matmul(qp_conj_t(p), p)
        eye = np.eye(prod[0].shape[-1])
        defect = max(
            float(np.max(np.abs(prod[0] - eye))), float(np.max(np.abs(prod[1])))
        )
        if defect > 1e-9:
            raise ValueError(f"field is not hyper-unitary (defect {defect:.3e})")
    x1, x2 = p_connection(plan, p)
    v = plan.dx(x1[0]) + plan.dy(x2[0])
    return v, _jk_of(x1, x2)


def pl1_solve(plan, v_rhs, t_rhs):
    """Invert the base linearization: Lap X_u = V, 2 d_zbar Y_u = T."""
    xu = plan.inv_laplacian(v_rhs)
    yu = plan.cauchy_solve(0.5 * t_rhs)
    return xu, yu


def _perturbation(plan, x1, x2, u):
    c1x = _comm(x1, u)
    c2x = _comm(x2, u)
    v = plan.dx(c1x[0]) + plan.dy(c2x[0])
    return v, _jk_of(c1x, c2x)


def _comm(x, u):
    a = qp_matmul(x, u)
    b = qp_matmul(u, x)
    return a[0] - b[0], a[1] - b[1]


def _entrywise_sobolev(plan, v):
    total = 0.0
    dim = v.shape[-1]
    for i in range(dim):
        for j in range(dim):
            entry = v[..., i, j]
            entry = entry - entry.mean()
            total += (
                sobolev_neg_1_2(plan, entry.real) ** 2
                + sobolev_neg_1_2(plan, entry.imag) ** 2
            )
    return np.sqrt(total)


def _residual_norms(plan, v, t):
    v0 = v - v.mean(axis=(0, 1))
    t_mean = t.mean(axis=(0, 1))
    t0 = t - t_mean
    r1 = _entrywise_sobolev(plan, v0)
    rjk = l2_norm(plan.grid, t0)
    rmean = float(np.sqrt(np.sum(np.abs(t_mean) ** 2)) * plan.grid.length)
    return r1, rjk, rmean


def _projected_solve(plan, x1, x2, v_rhs, t_rhs, tol, max_iter):
    shape = v_rhs.shape
    u = (np.zeros(shape, dtype=complex), np.zeros(shape, dtype=complex))
    scale = max(np.abs(v_rhs).max(), np.abs(t_rhs).max(), 1e-300)
    prev = np.inf
    bad = 0
    for it in range(max_iter):
        pv, pt = _perturbation(plan, x1, x2, u)
        rv = v_rhs - pv
        rv = rv - rv.mean(axis=(0, 1))
        u_new = pl1_solve(plan, rv, t_rhs - pt)
        change = max(
            float(np.max(np.abs(u_new[0] - u[0]))),
            float(np.max(np.abs(u_new[1] - u[1]))),
        )
        u = u_new
        size = max(float(np.max(np.abs(u[0]))), float(np.max(np.abs(u[1]))))
        if change < tol * max(scale, size):
            return u, it + 1
        if change > prev * 1.0001:
            bad += 1
            if bad >= 4:
                raise GaugeDivergence(
                    "matrix preconditioned iteration diverges",
                    change / max(prev, 1e-300),
                )
        else:
            bad = 0
        prev = change
    raise GaugeDivergence(
        "matrix iteration budget exhausted", change / max(prev, 1e-300)
    )


def p_grad_l2(plan, p):
    gx = _dpair(plan, p, plan.dx)
    gy = _dpair(plan, p, plan.dy)
    mag = qp_frobenius(gx) ** 2 + qp_frobenius(gy) ** 2
    return float(np.sqrt(np.sum(mag) * plan.grid.cell_measure))


def p_gauge_solve(plan, v_target, t_target, config=None):
    """Continuation solve of N(P) = (V, T) over hyper-unitary fields."""
    cfg = config or GaugeConfig()
    grid = plan.grid
    v_target = np.asarray(v_target, dtype=complex)
    t_target = np.asarray(t_target, dtype=complex)
    dim = v_target.shape[-1]
    v_scale = max(float(np.max(np.abs(v_target))), 1e-300)
    if np.max(np.abs(v_target.mean(axis=(0, 1)))) > 1e-10 * v_scale:
        raise ValueError("the 1i-line target must be mean-zero on the torus")
    target_size = _entrywise_sobolev(plan, v_target) + l2_norm(grid, t_target)
    if cfg.enforce_smallness and target_size > cfg.eps0:
        raise ValueError(
            f"target norm {target_size:.3e} exceeds eps0 = {cfg.eps0}"
        )

    eye = np.broadcast_to(np.eye(dim, dtype=complex), (grid.n, grid.n, dim, dim))
    p = (eye.copy(), np.zeros_like(eye))
    t = 0.0
    dt = cfg.dt
    steps = 0

    def residual_at(p_now, t_now):
        nv, nt = pn_apply(plan, p_now, check=False)
        rv = t_now * v_target - nv
        rt = t_now * t_target - nt
        r1, rjk, rmean = _residual_norms(plan, rv, rt)
        return rv, rt, r1 + rjk, rmean

    def finish(t_now):
        rv, rt, _, _ = residual_at(p, t_now)
        r1, rjk, rm = _residual_norms(plan, rv, rt)
        theta = p_grad_l2(plan, p) / target_size if target_size > 0 else 0.0
        return PGaugeResult(p, r1 + rjk + rm, r1, rjk, rm, theta, steps, t_now)

    tol_floor = max(cfg.tol, 1e-13 * max(target_size, 1.0))

    def converged(res_osc, rmean, t_now, dt_now):
        if t_now >= 1.0 - 1e-12:
            return res_osc + rmean <= tol_floor
        return res_osc <= max(tol_floor, 0.02 * dt_now * target_size)

    while t < 1.0 - 1e-12:
        t_next = min(t + dt, 1.0)
        p_save = (p[0].copy(), p[1].copy())
        ok = False
        rv, rt, res, rmean = residual_at(p, t_next)
        for _ in range(cfg.max_newton):
            if converged(res, rmean, t_next, dt):
                ok = True
                break
            x1, x2 = p_connection(plan, p)
            try:
                u, _ = _projected_solve(
                    plan, x1, x2, rv, rt,
                    1e-3 * res / max(target_size, 1e-300), cfg.max_inner,
                )
            except GaugeDivergence:
                break
            u = (plan.dealias(u[0]), plan.dealias(u[1]))
            s = 1.0
            improved = False
            while s >= 1.0 / 32.0:
                step = qp_exp_asd((s * u[0], s * u[1]))
                p_try = qp_matmul(p, step)
                rv2, rt2, res2, rmean2 = residual_at(p_try, t_next)
                if res2 < res * (1.0 - 0.25 * s) or converged(
                    res2, rmean2, t_next, dt
                ):
                    p, rv, rt, res, rmean = p_try, rv2, rt2, res2, rmean2
                    improved = True
                    break
                s *= 0.5
            if not improved:
                break
        if ok or converged(res, rmean, t_next, dt):
            t = t_next
            steps += 1
            dt = cfg.dt
        else:
            p = p_save
            dt *= 0.5
            if dt < cfg.dt_min:
                raise GaugeStall(t, finish(t))
    return finish(1.0)


def chi_potential(plan, p, precondition_tol=1e-6):
    """Stream potential of the 1i-line of the matrix connection."""
    grid = plan.grid
    x1, x2 = p_connection(plan, p)
    a1 = x1[0]
    a2 = x2[0]
    div = plan.dx(a1) + plan.dy(a2)
    gp = p_grad_l2(plan, p)
    scale = max(gp**2, 1e-300)
    dres = l2_norm(grid, div)
    if dres > precondition_tol * scale:
        raise ValueError(
            f"1i-line of the connection is not divergence free ({dres:.3e})"
        )
    chi = plan.inv_laplacian(plan.dx(a2) - plan.dy(a1))
    cx, cy = plan.dx(chi), plan.dy(chi)
    rel_res = np.sqrt(
        l2_norm(grid, (a1 - a1.mean(axis=(0, 1))) + cy) ** 2
        + l2_norm(grid, (a2 - a2.mean(axis=(0, 1))) - cx) ** 2
    )
    mag = np.sqrt(
        np.sum(np.abs(cx) ** 2 + np.abs(cy) ** 2, axis=(-1, -2))
    )
    l21 = lorentz_l21(grid, mag)
    return chi, {
        "divergence_residual": dres,
        "stream_residual": float(rel_res),
        "grad_chi_l21": l21,
        "grad_p_l2": gp,
        "wente_ratio": l21 / scale,
    }


def _vec_mag(v):
    return np.sqrt(np.sum(np.abs(v[0]) ** 2 + np.abs(v[1]) ** 2, axis=-1))


def absorbed_residual(plan, p, chi, gamma1, g_pair):
    """Residual of d1(PG) - d2(P i G) = 2 P (-i d_L chi + Gamma1) G."""
    grid = plan.grid
    pg = qp_matvec(p, g_pair)
    ig = (1j * g_pair[0], 1j * g_pair[1])
    pig = qp_matvec(p, ig)
    lhs = tuple(
        plan.dx(c1) - plan.dy(c2) for c1, c2 in zip(pg, pig)
    )
    dchi = 0.5 * (plan.dx(chi) - 1j * plan.dy(chi))
    m_tot = (-1j * dchi + gamma1[0], gamma1[1])
    rhs_inner = qp_matvec(m_tot, g_pair)
    rhs = qp_matvec(p, rhs_inner)
    rhs = (2.0 * rhs[0], 2.0 * rhs[1])
    res = np.sqrt(
        l2_norm(grid, lhs[0] - rhs[0]) ** 2 + l2_norm(grid, lhs[1] - rhs[1]) ** 2
    )
    return float(res), (lhs, rhs, pg, pig)


def p_contraction_chain(plan, p, chi, gamma1, g_pair, b_tol=1e-11, b_max_iter=400):
    """Mirror of the scalar contraction measurement for the doubled system."""
    grid = plan.grid
    res, (lhs, rhs, pg, pig) = absorbed_residual(plan, p, chi, gamma1, g_pair)

    a1 = plan.inv_laplacian(rhs[0])
    a2 = plan.inv_laplacian(rhs[1])
    a_pair = (a1, a2)

    i_eye = (
        1j * np.broadcast_to(
            np.eye(p[0].shape[-1], dtype=complex), p[0].shape
        ).copy(),
        np.zeros_like(p[0]),
    )
    w = qp_matmul(qp_matmul(p, i_eye), qp_conj_t(p))

    ax = tuple(plan.dx(c) for c in a_pair)
    ay = tuple(plan.dy(c) for c in a_pair)
    b = (np.zeros_like(a1), np.zeros_like(a2))
    converged = False
    for it in range(b_max_iter):
        bx = tuple(plan.dx(c) for c in b)
        by = tuple(plan.dy(c) for c in b)
        t1 = qp_matvec(w, (ax[0] - by[0], ax[1] - by[1]))
        t2 = qp_matvec(w, (ay[0] + bx[0], ay[1] + bx[1]))
        b_new = tuple(
            plan.inv_laplacian(-(plan.dx(u1) + plan.dy(u2)))
            for u1, u2 in zip(t1, t2)
        )
        change = max(
            float(np.max(np.abs(b_new[0] - b[0]))),
            float(np.max(np.abs(b_new[1] - b[1]))),
        )
        b = b_new
        size = max(float(np.max(np.abs(b[0]))), float(np.max(np.abs(b[1]))), 1e-300)
        if change < b_tol * size:
            converged = True
            break

    def weak_grad(pair):
        gx = tuple(plan.dx(c) for c in pair)
        gy = tuple(plan.dy(c) for c in pair)
        return lorentz_weak_l2(
            grid, np.sqrt(_vec_mag(gx) ** 2 + _vec_mag(gy) ** 2)
        )

    weak_pg = lorentz_weak_l2(grid, _vec_mag(pg))
    factor = (weak_grad(a_pair) + weak_grad(b)) / max(weak_pg, 1e-300)
    return {
        "factor": float(factor),
        "absorbed_residual": res,
        "b_converged": converged,
        "b_iterations": it + 1,
        "weak_pg": weak_pg,
    }


def p_gauge_structures(plan, gamma, gamma1, g_pair, config=None, partial_ok=False):
    """Full matrix-gauge pipeline: solve N(P) = (0, -2 Gamma), build the
    stream potential chi, and report the absorbed-equation residual and
    contraction factor for the supplied doubled field.

    Chain-derived Gamma (from a rotation frame) admits an exact gauge;
    generic antisymmetric data can be obstructed in the torus harmonic
    sector near t = 1, in which case the continuation stalls.  With
    partial_ok the largest-t partial gauge is used and reported.
    """
    asd = qp_dagger_defect(gamma)
    if asd > 1e-10:
        raise ValueError(f"Gamma is not anti-self-dual (defect {asd:.3e})")
    if np.max(np.abs(gamma[0])) > 0:
        raise ValueError("Gamma must lie in the jk-plane")
    dim = gamma[1].shape[-1]
    v_target = np.zeros((plan.grid.n, plan.grid.n, dim, dim), dtype=complex)
    t_reached = 1.0
    try:
        result = p_gauge_solve(plan, v_target, -2.0 * gamma[1], config)
    except GaugeStall as stall:
        if not partial_ok:
            raise
        result = stall.result
        t_reached = stall.t_reached
    chi, chi_diag = chi_potential(plan, result.p, precondition_tol=1e-2)
    res, _ = absorbed_residual(plan, result.p, chi, gamma1, g_pair)
    contraction = p_contraction_chain(plan, result.p, chi, gamma1, g_pair)
    return {
        "gauge": result,
        "t_reached": t_reached,
        "chi": chi,
        "chi_diagnostics": chi_diag,
        "absorbed_residual": res,
        "contraction": contraction,
    }
