"""Coulomb-type gauge construction over the unit quaternions.

The nonlinear operator sends a unit-quaternion field q to

    N(q) = ( i-part of div(q^-1 grad q),
             jk-part of q^-1 d1 q - (q^-1 d2 q) i )

Targets and residuals use the natural encodings: the i-line component is a
real table, the jk-plane component a complex table g_j + i g_k.  N(q) = y
is solved by numerical continuation along t*y with a damped Newton step
q <- q exp(u) at each level; the linearization at q0 = 1 inverts in closed
form (a Laplace solve for the i-line, a d_zbar solve for the jk-plane).

Torus bookkeeping: the i-line component of N is a divergence and has zero
mean structurally, so targets must be mean-zero there.  The jk-plane mean
of the image is quadratic near q = 1, so linear solves project it out;
intermediate continuation levels track the path to basin accuracy and the
endpoint Newton closes the mean where a solution exists.
"""

from dataclasses import dataclass

import numpy as np

from chirality_lab.compensation import PreconditionError
from chirality_lab.field_core import (
    complex_left,
    left_j,
    qconj,
    qexp_pure,
    qmul,
    qnorm,
    qnormalize,
    right_i,
)
from chirality_lab.norms import l2_norm, lorentz_l21, lorentz_weak_l2, sobolev_neg_1_2

__all__ = [
    "GaugeConfig",
    "GaugeResult",
    "GaugeDivergence",
    "GaugeStall",
    "n_apply",
    "l1_solve",
    "l1_apply",
    "lq_solve",
    "gauge_solve",
    "zeta_potential",
    "contraction_chain",
    "linearization_order",
    "grad_l2",
]

I_UNIT = np.array([0.0, 1.0, 0.0, 0.0])


class GaugeDivergence(RuntimeError):
    def __init__(self, message, contraction_estimate):
        super().__init__(f"{message} (estimated contraction {contraction_estimate:.3f})")
        self.contraction_estimate = contraction_estimate


class GaugeStall(RuntimeError):
    def __init__(self, t_reached, result):
        super().__init__(f"continuation stalled at t = {t_reached:.4f}")
        self.t_reached = t_reached
        self.result = result


@dataclass
class GaugeConfig:
    eps0: float = 0.1
    tol: float = 1e-8
    dt: float = 1.0 / 16.0
    dt_min: float = 1e-4
    max_newton: int = 20
    max_inner: int = 120
    enforce_smallness: bool = True


@dataclass
class GaugeResult:
    q: np.ndarray
    residual: float
    residual_i: float
    residual_jk: float
    residual_jk_mean: float
    theta: float
    continuation_steps: int
    t_reached: float

    @property
    def unit_defect(self):
        return float(np.max(np.abs(qnorm(self.q) - 1.0)))


def _check_unit(q, tol=1e-10):
    defect = float(np.max(np.abs(qnorm(q) - 1.0)))
    if defect > tol:
        raise ValueError(f"field is not unit-quaternion valued (defect {defect:.3e})")


def connection(plan, q):
    """The pure-quaternion pair X_l = q^-1 d_l q."""
    qc = qconj(q)
    return qmul(qc, plan.dx(q)), qmul(qc, plan.dy(q))


def n_apply(plan, q, check=True):
    """N(q) as (real i-line table, complex jk-plane table)."""
    if check:
        _check_unit(q)
    x1, x2 = connection(plan, q)
    div = plan.dx(x1) + plan.dy(x2)
    y = x1 - right_i(x2)
    return div[..., 1], y[..., 2] + 1j * y[..., 3]


def _jk_of(x1, x2):
    y = x1 - right_i(x2)
    return y[..., 2] + 1j * y[..., 3]


def l1_apply(plan, u):
    """Linearization at q = 1: (Lap u_i, 2 d_zbar(u_j + i u_k))."""
    w = plan.laplacian(u[..., 1])
    g = 2.0 * plan.d_zbar(u[..., 2] + 1j * u[..., 3])
    return w, g


def l1_solve(plan, w_rhs, g_rhs):
    """Invert the base linearization; right sides are mean-projected."""
    n = plan.grid.n
    u = np.zeros((n, n, 4))
    u[..., 1] = plan.inv_laplacian(w_rhs)
    jk = plan.cauchy_solve(0.5 * g_rhs)
    u[..., 2] = jk.real
    u[..., 3] = jk.imag
    return u


def _perturbation(plan, x1, x2, u):
    """L_q0(u) - L_1(u): commutator terms of the frozen connection."""
    c1 = qmul(x1, u) - qmul(u, x1)
    c2 = qmul(x2, u) - qmul(u, x2)
    w = (plan.dx(c1) + plan.dy(c2))[..., 1]
    return w, _jk_of(c1, c2)




def _residual_norms(plan, w, g):
    """(negative-Sobolev norm of the i-part, L2 of the oscillatory jk-part,
    L2 carried by the jk mean)."""
    w0 = w - w.mean()
    g_mean = g.mean()
    g0 = g - g_mean
    mean_l2 = abs(g_mean) * plan.grid.length
    return sobolev_neg_1_2(plan, w0), l2_norm(plan.grid, g0), mean_l2


def _projected_solve(plan, x1, x2, w_rhs, g_rhs, tol, max_iter):
    """Mean-projected stationary iteration u <- L1^-1(rhs - pert(u));
    converges geometrically while the frozen connection is small."""
    n = plan.grid.n
    u = np.zeros((n, n, 4))
    scale = max(np.abs(w_rhs).max(), np.abs(g_rhs).max(), 1e-300)
    prev = np.inf
    bad = 0
    change = np.inf
    for it in range(max_iter):
        pw, pg = _perturbation(plan, x1, x2, u)
        rw = w_rhs - pw
        u_new = l1_solve(plan, rw - rw.mean(), g_rhs - pg)
        change = float(np.max(qnorm(u_new - u)))
        u = u_new
        if change < tol * max(scale, float(np.max(qnorm(u)))):
            return u, it + 1
        if change > prev * 1.0001:
            bad += 1
            if bad >= 4:
                raise GaugeDivergence(
                    "preconditioned iteration diverges", change / max(prev, 1e-300)
                )
        else:
            bad = 0
        prev = change
    raise GaugeDivergence("iteration budget exhausted", change / max(prev, 1e-300))


def lq_solve(plan, q0, w_rhs, g_rhs, tol=1e-11, max_iter=120):
    """Solve the mean-projected L_q0(u) = (w, g).

    The jk-plane mean is a 2-dimensional harmonic sector reachable only at
    second order in the connection (the image mean of N is quadratic near
    q = 1), so the linear solve projects it out; the outer Newton flow
    carries the mean along and closes it at the end of the continuation.

    Returns (u, iterations).  Raises GaugeDivergence when the inner
    iteration stops contracting.
    """
    x1, x2 = connection(plan, q0)
    return _projected_solve(plan, x1, x2, w_rhs, g_rhs, tol, max_iter)


def _product_residual(plan, q, w_target, g_target, t):
    """Returns (rw, rg, oscillatory residual, i-part, jk-part, jk-mean)."""
    nw, ng = n_apply(plan, q, check=False)
    rw = t * w_target - nw
    rg = t * g_target - ng
    ri, rjk, rmean = _residual_norms(plan, rw, rg)
    return rw, rg, ri + rjk, ri, rjk, rmean


def gauge_solve(plan, w_target, g_target, config=None):
    """Numerical continuation for N(q) = (w, g).

    Targets must have a mean-zero i-line part (structural on the torus).
    Raises GaugeStall (carrying the partial result) when step halving
    drops below config.dt_min.
    """
    cfg = config or GaugeConfig()
    grid = plan.grid
    w_target = np.asarray(w_target, dtype=float)
    g_target = np.asarray(g_target, dtype=complex)
    w_scale = max(float(np.max(np.abs(w_target))), 1e-300)
    if abs(w_target.mean()) > 1e-10 * w_scale:
        raise ValueError("the i-line target must be mean-zero on the torus")
    target_size = sobolev_neg_1_2(plan, w_target - w_target.mean()) + l2_norm(
        grid, g_target
    )
    if cfg.enforce_smallness and target_size > cfg.eps0:
        raise ValueError(
            f"target norm {target_size:.3e} exceeds eps0 = {cfg.eps0}; "
            "raise eps0 or disable enforce_smallness"
        )

    q = np.zeros((grid.n, grid.n, 4))
    q[..., 0] = 1.0
    t = 0.0
    dt = cfg.dt
    steps = 0

    def finish(t_now):
        _, _, _, ri, rjk, rmean = _product_residual(plan, q, w_target, g_target, t_now)
        theta = grad_l2(plan, q) / target_size if target_size > 0 else 0.0
        return GaugeResult(q, ri + rjk + rmean, ri, rjk, rmean, theta, steps, t_now)

    tol_floor = max(cfg.tol, 1e-13 * max(target_size, 1.0))

    def level_converged(res_osc, rmean, t_now, dt_now):
        # intermediate levels only need basin-tracking accuracy; the jk mean
        # follows quadratically and is enforced at the endpoint, where the
        # final Newton polish closes it
        if t_now >= 1.0 - 1e-12:
            return res_osc + rmean <= tol_floor
        return res_osc <= max(tol_floor, 0.02 * dt_now * target_size)

    while t < 1.0 - 1e-12:
        t_next = min(t + dt, 1.0)
        q_save = q.copy()
        ok = False
        rw, rg, res, _, _, rmean = _product_residual(plan, q, w_target, g_target, t_next)
        for _ in range(cfg.max_newton):
            if level_converged(res, rmean, t_next, dt):
                ok = True
                break
            try:
                u, _ = lq_solve(
                    plan, q, rw, rg, tol=1e-3 * res / max(target_size, 1e-300),
                    max_iter=cfg.max_inner,
                )
            except GaugeDivergence:
                break
            u = plan.dealias(u)
            s = 1.0
            improved = False
            while s >= 1.0 / 32.0:
                q_try = qnormalize(qmul(q, qexp_pure(s * u)))
                rw2, rg2, res2, _, _, rmean2 = _product_residual(
                    plan, q_try, w_target, g_target, t_next
                )
                if res2 < res * (1.0 - 0.25 * s) or level_converged(
                    res2, rmean2, t_next, dt
                ):
                    q, rw, rg, res, rmean = q_try, rw2, rg2, res2, rmean2
                    improved = True
                    break
                s *= 0.5
            if not improved:
                break
        if ok or level_converged(res, rmean, t_next, dt):
            t = t_next
            steps += 1
            dt = cfg.dt
        else:
            q = q_save
            dt *= 0.5
            if dt < cfg.dt_min:
                raise GaugeStall(t, finish(t))
    return finish(1.0)


def linearization_order(plan, u, ts=(0.1, 0.05, 0.025)):
    """Measured order of || N(exp(t u)) - t L1(u) || in t (expected 2)."""
    lw, lg = l1_apply(plan, u)
    vals = []
    for t in ts:
        q = qexp_pure(t * u)
        nw, ng = n_apply(plan, q, check=False)
        rw = nw - t * lw
        rg = ng - t * lg
        ri, rjk, rmean = _residual_norms(plan, rw, rg)
        vals.append(ri + rjk + rmean)
    fit = np.polyfit(np.log(ts), np.log(vals), 1)
    return float(fit[0]), vals


def grad_l2(plan, q):
    gx, gy = plan.dx(q), plan.dy(q)
    mag = qnorm(gx) ** 2 + qnorm(gy) ** 2
    return float(np.sqrt(np.sum(mag) * plan.grid.cell_measure))


def zeta_potential(plan, q, precondition_tol=1e-6):
    """Stream potential of the i-line of the connection.

    Requires the first gauge equation (i-line divergence zero); returns
    (zeta, diagnostics) with the compensation ratio
    ||grad zeta||_{2,1} / ||grad q||_2^2.
    """
    grid = plan.grid
    x1, x2 = connection(plan, q)
    a1 = x1[..., 1]
    a2 = x2[..., 1]
    div = plan.dx(a1) + plan.dy(a2)
    gq = grad_l2(plan, q)
    scale = max(gq**2, 1e-300)
    dres = l2_norm(grid, div)
    if dres > precondition_tol * scale:
        raise PreconditionError("i-line of the connection is not divergence free", dres)
    zeta = plan.inv_laplacian(plan.dx(a2) - plan.dy(a1))
    zx, zy = plan.grad(zeta)
    # a = mean(a) + grad_perp(zeta) when the divergence vanishes
    rel_res = np.sqrt(
        l2_norm(grid, (a1 - a1.mean()) + zy) ** 2
        + l2_norm(grid, (a2 - a2.mean()) - zx) ** 2
    )
    l21 = lorentz_l21(grid, np.sqrt(zx**2 + zy**2))
    diag = {
        "divergence_residual": dres,
        "stream_residual": float(rel_res),
        "grad_zeta_l21": l21,
        "grad_q_l2": gq,
        "wente_ratio": l21 / scale,
    }
    return zeta, diag


def contraction_chain(plan, frak_f, omega, q, zeta, pre_tol=1e-6,
                      b_tol=1e-11, b_max_iter=400):
    """Measured factor of the closure estimate chain.

    For frak_f near-solving d_L f = omega j f (omega complex; d_z(alpha)
    in the chirality chain) and a gauge q with N(q) = (0, -2 omega), the
    transported field satisfies d1[q f] - d2[q i f] = q (2 d_z zeta) f.
    A is the mean-zero potential of that right side; B closes the
    divergence-free remainder via its own elliptic equation solved by
    fixed point.  The returned factor is

        (||grad A||_{2,inf} + ||grad B||_{2,inf}) / ||q f||_{2,inf}

    which is below one exactly when the chain contracts at this scale.
    """
    grid = plan.grid
    f_scale = float(np.max(qnorm(frak_f)))
    if f_scale == 0.0:
        return {"degenerate": True, "factor": np.nan}
    eq_res = l2_qfield(plan, plan.d_left(frak_f) - complex_left(omega, left_j(frak_f)))
    f_l2 = l2_qfield(plan, frak_f)
    if eq_res > pre_tol * max(f_l2, 1e-300):
        raise PreconditionError("frak_f does not near-solve the equation", eq_res)

    qf = qmul(q, frak_f)
    qif = qmul(q, qmul(np.broadcast_to(I_UNIT, q.shape), frak_f))
    zx, zy = plan.grad(zeta)
    dz_zeta = 0.5 * (zx - 1j * zy)
    rhs = 2.0 * qmul(q, complex_left(dz_zeta, frak_f))
    a_field = plan.inv_laplacian(rhs)

    # identity check: d1[qf] - d2[q i f] = rhs up to the gauge residual
    transport_res = l2_qfield(plan, plan.dx(qf) - plan.dy(qif) - rhs)

    w = qmul(qmul(q, np.broadcast_to(I_UNIT, q.shape)), qconj(q))
    ax, ay = plan.dx(a_field), plan.dy(a_field)
    b = np.zeros_like(a_field)
    converged = False
    for it in range(b_max_iter):
        bx, by = plan.dx(b), plan.dy(b)
        term1 = qmul(w, ax - by)
        term2 = qmul(w, ay + bx)
        b_new = plan.inv_laplacian(-(plan.dx(term1) + plan.dy(term2)))
        change = float(np.max(qnorm(b_new - b)))
        b = b_new
        if change < b_tol * max(float(np.max(qnorm(b))), 1e-300):
            converged = True
            break

    def weak_grad(field):
        gx, gy = plan.dx(field), plan.dy(field)
        return lorentz_weak_l2(grid, np.sqrt(qnorm(gx) ** 2 + qnorm(gy) ** 2))

    weak_qf = lorentz_weak_l2(grid, qnorm(qf))
    factor = (weak_grad(a_field) + weak_grad(b)) / max(weak_qf, 1e-300)
    by = plan.dy(b)
    recon = qf - (ax - by)
    harmonic_defect = float(qnorm(np.mean(recon, axis=(0, 1))))
    return {
        "degenerate": False,
        "factor": float(factor),
        "transport_residual": transport_res,
        "equation_residual": eq_res,
        "b_converged": converged,
        "b_iterations": it + 1,
        "weak_qf": weak_qf,
        "harmonic_defect": harmonic_defect,
    }


def l2_qfield(plan, f):
    return float(np.sqrt(np.sum(qnorm(f) ** 2) * plan.grid.cell_measure))
