"""ADMM orchestration: proposed splitting (PCG + per-ray decomposition) and
the joint Levenberg-Marquardt baseline.

Both methods minimize the same MAP objective (weighted measurement misfit
plus anisotropic TV and a nonnegativity constraint). The proposed scheme
splits the measurement fit into its own consensus block so the per-basis
image update is a plain linear least-squares solve; the baseline attacks the
nonlinear image-domain problem directly with damped Gauss-Newton steps.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import decompose as dc
from . import linsolve, projector
from .linsolve import StackedSystem, diff_adjoint, diff_forward
from .metrics import error_metric
from .projector import OpCounters, ScanGeometry

TELEMETRY_HEADER = ("iter,e_c_db,e_p_db,r_c,s_c,r_p,s_p,"
                    "rho_c,rho_p,nR,nRt,nf,wall_ms")


@dataclass
class AdmmConfig:
    # lam_p is larger than lam_c by roughly the photoelectric/Compton
    # magnitude ratio so the TV threshold lam/rho bites at comparable
    # relative edge heights in both bases.
    lam_c: float = 1e-5
    lam_p: float = 0.3
    rho0: float = 1e-3
    # wide mu deadband: with fixed lam a drop in rho inflates the TV
    # threshold lam/rho, so the penalty adaptation is a safety valve for
    # grossly mis-scaled rho0, not a per-iteration controller
    tau: float = 2.0
    mu: float = 1000.0
    cg_iters: int = 5
    lm_iters: int = 10
    max_iters: int = 100
    tol: float = 1e-4
    precondition: bool = True
    method: str = "proposed"  # proposed | baseline-lm

    def __post_init__(self):
        if self.tau <= 1.0 or self.mu <= 1.0:
            raise ValueError("penalty adaptation needs tau > 1 and mu > 1")
        if self.rho0 <= 0.0 or self.lam_c < 0.0 or self.lam_p < 0.0:
            raise ValueError("invalid regularization constants")


@dataclass
class BasisState:
    x: np.ndarray
    a: np.ndarray | None
    y: np.ndarray
    z: np.ndarray
    u_a: np.ndarray | None
    u_y: np.ndarray
    u_z: np.ndarray
    rho: float
    nx: np.ndarray | None = None  # cached (R^T R + D^T D + I) x
    rx: np.ndarray | None = None  # cached R x
    dx: np.ndarray | None = None  # cached D x
    lm_lambda: float = 1e-3       # baseline damping state


@dataclass
class IterationRecord:
    iteration: int
    e_c_db: float
    e_p_db: float
    r_c: float
    s_c: float
    r_p: float
    s_p: float
    rho_c: float
    rho_p: float
    n_forward: int
    n_backward: int
    n_fwd_model: float
    wall_ms: float
    ray_failures: int = 0

    def csv_row(self):
        return (f"{self.iteration},{self.e_c_db:.6f},{self.e_p_db:.6f},"
                f"{self.r_c:.8e},{self.s_c:.8e},{self.r_p:.8e},{self.s_p:.8e},"
                f"{self.rho_c:.8e},{self.rho_p:.8e},"
                f"{self.n_forward},{self.n_backward},{self.n_fwd_model:.2f},"
                f"{self.wall_ms:.3f}")


def write_telemetry(records, path):
    lines = [TELEMETRY_HEADER] + [r.csv_row() for r in records]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def shrinkage(v, kappa):
    """Soft threshold sign(v) * max(|v| - kappa, 0); elementwise on arrays."""
    if np.any(np.asarray(kappa) < 0.0):
        raise ValueError("threshold must be nonnegative")
    return np.sign(v) * np.maximum(np.abs(v) - kappa, 0.0)


def update_y(dx, u_y, lam, rho):
    """TV auxiliary update: soft-threshold D x - u_y at lambda/rho."""
    return shrinkage(dx - u_y, lam / rho)


def update_z(x, u_z):
    """Nonnegativity auxiliary update: max(0, x - u_z)."""
    return np.maximum(0.0, x - u_z)


def update_rho(rho, r_norm, s_norm, tau, mu):
    """Adaptive penalty: grow when primal residual dominates, shrink when dual does."""
    if r_norm > mu * s_norm:
        return rho * tau
    if s_norm > mu * r_norm:
        return rho / tau
    return rho


def _stack_norm(*blocks):
    return float(np.sqrt(sum(float(np.vdot(b, b)) for b in blocks)))


def _relative_residuals(s, r_norm, s_norm):
    """Scale-free residual pair for the penalty adaptation.

    The raw norms carry the (very different) physical units of the two bases,
    so comparing them directly makes the adaptation chase the larger-scaled
    block. Dividing the primal residual by the consensus magnitude and the
    dual residual by the dual-variable magnitude makes both dimensionless.
    """
    ax = [s.dx, s.x]
    aux = [s.y, s.z]
    us = [s.u_y, s.u_z]
    if s.a is not None:
        ax.insert(0, s.rx)
        aux.insert(0, s.a)
        us.insert(0, s.u_a)
    r_den = max(_stack_norm(*ax), _stack_norm(*aux), 1e-30)
    s_den = max(s.rho * _stack_norm(*us), 1e-30)
    return r_norm / r_den, s_norm / s_den


def residuals(state):
    """Primal and dual residual norms for one basis.

    Primal: consensus violation of [a; y; z] against [R; D; I] x.
    Dual: rho times the norm of the stacked auxiliary change since the
    previous iteration (per-block stacking keeps the quantity well defined).
    Requires the previous auxiliaries in ``state['prev']``.
    """
    s = state
    blocks = [s["y"] - s["dx"], s["z"] - s["x"]]
    if s.get("a") is not None:
        blocks.insert(0, s["a"] - s["rx"])
    r_norm = _stack_norm(*blocks)
    prev = s["prev"]
    dblocks = [s["y"] - prev["y"], s["z"] - prev["z"]]
    if s.get("a") is not None:
        dblocks.insert(0, s["a"] - prev["a"])
    s_norm = s["rho"] * _stack_norm(*dblocks)
    return r_norm, s_norm


def reconstruct_x(sys, a, y, z, u_a, u_y, u_z, x0, n_iters,
                  prec=None, nx0=None, rx0=None):
    """Warm-started (P)CG on the stacked least-squares image update.

    Runs exactly ``n_iters`` iterations; returns the linsolve result with
    the incrementally maintained normal image and R x.
    """
    rhs = sys.apply_rt(a + u_a) + diff_adjoint(y + u_y) + (z + u_z)
    if n_iters == 0:
        if nx0 is None or rx0 is None:
            nx0, rx0 = sys.normal_parts(x0)
        return linsolve.SolveResult(np.array(x0, copy=True), 0, [], nx=nx0, rx=rx0)
    return linsolve.pcg_solve(sys, rhs, x0=x0, max_iters=n_iters, tol=0.0,
                              prec=prec, nx0=nx0, rx0=rx0)


def decompose_a(m_h, m_l, w_h, w_l, spec_h, spec_l, state_c, state_p,
                max_iters, counters=None):
    """Joint a-update: penalized per-ray decomposition anchored at R x - u_a."""
    anchors_c = state_c.rx - state_c.u_a
    anchors_p = state_p.rx - state_p.u_a
    return dc.decompose_all(
        m_h, m_l, w_h, w_l, spec_h, spec_l, mode="udm",
        anchors_c=anchors_c, anchors_p=anchors_p,
        rho_c=state_c.rho, rho_p=state_p.rho,
        max_iters=max_iters, counters=counters)


def _initialize(config, m_h, m_l, w_h, w_l, spec_h, spec_l, geom, counters,
                with_a=True):
    a_c, a_p, _ = dc.decompose_all(m_h, m_l, w_h, w_l, spec_h, spec_l,
                                   mode="cdm", counters=counters)
    states = {}
    for beta, a, rho in (("c", a_c, config.rho0), ("p", a_p, config.rho0)):
        x = projector.fbp(a, geom, counters)
        sino_shape = (geom.n_angles, geom.detector_count)
        states[beta] = BasisState(
            x=x,
            a=a.copy() if with_a else None,
            y=diff_forward(x),
            z=np.maximum(x, 0.0),
            u_a=np.zeros(sino_shape) if with_a else None,
            u_y=np.zeros((2, geom.image_side, geom.image_side)),
            u_z=np.zeros((geom.image_side, geom.image_side)),
            rho=rho,
        )
    return states


def _telemetry(it, states, reference, counters, wall_ms, rs, ray_failures):
    snap = counters.snapshot()
    if reference is not None:
        e_c = error_metric(states["c"].x, reference[0])
        e_p = error_metric(states["p"].x, reference[1])
    else:
        e_c = e_p = float("nan")
    return IterationRecord(
        iteration=it, e_c_db=e_c, e_p_db=e_p,
        r_c=rs["c"][0], s_c=rs["c"][1], r_p=rs["p"][0], s_p=rs["p"][1],
        rho_c=states["c"].rho, rho_p=states["p"].rho,
        n_forward=snap["n_forward"], n_backward=snap["n_backward"],
        n_fwd_model=snap["n_fwd_model"], wall_ms=wall_ms,
        ray_failures=ray_failures)


def run(config, measurements, weights, spec_h, spec_l, geom,
        reference=None, counters=None):
    """Run the configured ADMM variant.

    measurements/weights are (high, low) sinogram pairs. Returns
    ((x_c, x_p), records).
    """
    if config.method == "proposed":
        return run_proposed(config, measurements, weights, spec_h, spec_l,
                            geom, reference, counters)
    if config.method == "baseline-lm":
        return run_baseline_lm(config, measurements, weights, spec_h, spec_l,
                               geom, reference, counters)
    raise ValueError(f"unknown method {config.method!r}")


def run_proposed(config, measurements, weights, spec_h, spec_l, geom,
                 reference=None, counters=None):
    m_h, m_l = measurements
    w_h, w_l = weights
    counters = counters if counters is not None else OpCounters()
    sys = StackedSystem(geom, counters)
    prec = linsolve.build_preconditioner(sys) if config.precondition else None
    states = _initialize(config, m_h, m_l, w_h, w_l, spec_h, spec_l, geom,
                         counters, with_a=True)
    lams = {"c": config.lam_c, "p": config.lam_p}
    for s in states.values():
        s.rx = sys.apply_r(s.x)
        s.nx = sys.apply_rt(s.rx) + diff_adjoint(diff_forward(s.x)) + s.x
        s.dx = diff_forward(s.x)

    records = []
    for it in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        x_prev_norms = {}
        # step 4: per-basis image update via warm-started (P)CG
        for beta, s in states.items():
            x_prev_norms[beta] = (np.linalg.norm(s.x), s.x)
            res = reconstruct_x(sys, s.a, s.y, s.z, s.u_a, s.u_y, s.u_z,
                                s.x, config.cg_iters, prec=prec,
                                nx0=s.nx, rx0=s.rx)
            s.x, s.nx, s.rx = res.x, res.nx, res.rx
            s.dx = diff_forward(s.x)
        # step 5: joint decomposition update
        prev = {b: {"a": s.a, "y": s.y, "z": s.z} for b, s in states.items()}
        a_c, a_p, report = decompose_a(m_h, m_l, w_h, w_l, spec_h, spec_l,
                                       states["c"], states["p"],
                                       config.lm_iters, counters)
        states["c"].a = a_c
        states["p"].a = a_p
        rs = {}
        for beta, s in states.items():
            # steps 6-8: proximal auxiliaries and dual ascent
            s.y = update_y(s.dx, s.u_y, lams[beta], s.rho)
            s.z = update_z(s.x, s.u_z)
            s.u_a = s.u_a + s.a - s.rx
            s.u_y = s.u_y + s.y - s.dx
            s.u_z = s.u_z + s.z - s.x
            rs[beta] = residuals({"a": s.a, "y": s.y, "z": s.z,
                                  "x": s.x, "rx": s.rx, "dx": s.dx,
                                  "rho": s.rho, "prev": prev[beta]})
            # step 9: adaptive penalty on scale-free residuals,
            # with scaled-dual bookkeeping
            r_rel, s_rel = _relative_residuals(s, *rs[beta])
            rho_new = update_rho(s.rho, r_rel, s_rel, config.tau, config.mu)
            if rho_new != s.rho:
                scale = s.rho / rho_new
                s.u_a *= scale
                s.u_y *= scale
                s.u_z *= scale
                s.rho = rho_new
        wall_ms = (time.perf_counter() - t0) * 1e3
        records.append(_telemetry(it, states, reference, counters, wall_ms,
                                  rs, report.n_failed))
        if all(np.linalg.norm(states[b].x - x_prev_norms[b][1])
               <= config.tol * max(x_prev_norms[b][0], 1e-30)
               for b in states):
            break
    return (states["c"].x, states["p"].x), records


def _cg_operator(apply_fn, rhs, n_iters):
    """Plain CG for the baseline's damped Gauss-Newton step (zero start)."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    rz = float(np.vdot(r, r))
    if rz == 0.0:
        return x
    for _ in range(n_iters):
        q = apply_fn(p)
        curv = float(np.vdot(p, q))
        if curv <= 0.0:
            raise linsolve.CgBreakdownError(f"nonpositive curvature {curv:g}")
        alpha = rz / curv
        x += alpha * p
        r -= alpha * q
        rz_new = float(np.vdot(r, r))
        if rz_new == 0.0:
            break
        p = r + (rz_new / rz) * p
        rz = rz_new
    return x


def _prior_objective(s, rho):
    return 0.5 * rho * (float(np.vdot(s.y - s.dx + s.u_y, s.y - s.dx + s.u_y))
                        + float(np.vdot(s.z - s.x + s.u_z, s.z - s.x + s.u_z)))


def lm_primal_update(states, m_h, m_l, w_h, w_l, spec_h, spec_l, sys,
                     m_iters, cg_iters, r_norm_sq, counters=None,
                     max_trials=8):
    """Baseline joint primal update: damped Gauss-Newton on the full volume.

    Updates x_c first, then x_p using the fresh Compton estimate. Each LM
    iteration linearizes the polychromatic forward model at the current line
    integrals and solves the damped normal equations with ``cg_iters`` CG
    steps; rejected steps re-solve with ten-fold damping.
    """
    from .physics import forward_f_grad_batch

    rx = {b: sys.apply_r(states[b].x) for b in ("c", "p")}
    mh = m_h.ravel()
    ml = m_l.ravel()
    wh = w_h.ravel()
    wl = w_l.ravel()

    def data_misfit(rc, rp):
        from .physics import forward_f_batch
        fh = forward_f_batch(rc.ravel(), rp.ravel(), spec_h)
        fl = forward_f_batch(rc.ravel(), rp.ravel(), spec_l)
        if counters is not None:
            counters.add_fwd_model(2.0)
        return 0.5 * (float(np.dot(wh, (fh - mh) ** 2))
                      + float(np.dot(wl, (fl - ml) ** 2)))

    for _ in range(m_iters):
        for beta in ("c", "p"):
            s = states[beta]
            fh, ghc, ghp = forward_f_grad_batch(rx["c"].ravel(), rx["p"].ravel(), spec_h)
            fl, glc, glp = forward_f_grad_batch(rx["c"].ravel(), rx["p"].ravel(), spec_l)
            if counters is not None:
                counters.add_fwd_model(2.0)
            gh = ghc if beta == "c" else ghp
            gl = glc if beta == "c" else glp
            eh = fh - mh
            el = fl - ml
            obj_cur = (0.5 * (float(np.dot(wh, eh ** 2)) + float(np.dot(wl, el ** 2)))
                       + _prior_objective(s, s.rho))
            shape = rx[beta].shape
            grad_sino = (wh * eh * gh + wl * el * gl).reshape(shape)
            grad = (sys.apply_rt(grad_sino)
                    + s.rho * (diff_adjoint(s.dx - s.y - s.u_y)
                               + (s.x - s.z - s.u_z)))
            w_ray = (wh * gh ** 2 + wl * gl ** 2).reshape(shape)
            damp_scale = float(w_ray.mean()) * r_norm_sq + s.rho
            accepted = False
            for _trial in range(max_trials):
                lam = s.lm_lambda

                def apply_h(p):
                    return (sys.apply_rt(w_ray * sys.apply_r(p))
                            + s.rho * (diff_adjoint(diff_forward(p)) + p)
                            + lam * damp_scale * p)

                delta = _cg_operator(apply_h, -grad, cg_iters)
                x_t = s.x + delta
                rx_t = sys.apply_r(x_t)
                dx_t = diff_forward(x_t)
                s_t = replace(s, x=x_t, dx=dx_t)
                obj_new = (data_misfit(rx["c"] if beta == "p" else rx_t,
                                       rx_t if beta == "p" else rx["p"])
                           + _prior_objective(s_t, s.rho))
                if obj_new <= obj_cur:
                    s.x = x_t
                    s.dx = dx_t
                    rx[beta] = rx_t
                    s.lm_lambda = max(s.lm_lambda / 10.0, 1e-12)
                    accepted = True
                    break
                s.lm_lambda *= 10.0
            if not accepted:
                # keep the current iterate; damping already raised
                pass
    return rx


def run_baseline_lm(config, measurements, weights, spec_h, spec_l, geom,
                    reference=None, counters=None):
    m_h, m_l = measurements
    w_h, w_l = weights
    counters = counters if counters is not None else OpCounters()
    sys = StackedSystem(geom, counters)
    states = _initialize(config, m_h, m_l, w_h, w_l, spec_h, spec_l, geom,
                         counters, with_a=False)
    lams = {"c": config.lam_c, "p": config.lam_p}
    for s in states.values():
        s.dx = diff_forward(s.x)
    # one-time spectral-norm estimate of R^T R for damping scale
    rng = np.random.default_rng(1234)
    v = rng.standard_normal((geom.image_side, geom.image_side))
    r_norm_sq = 1.0
    for _ in range(5):
        v = sys.apply_rt(sys.apply_r(v))
        r_norm_sq = float(np.linalg.norm(v))
        v /= r_norm_sq

    records = []
    for it in range(1, config.max_iters + 1):
        t0 = time.perf_counter()
        x_prev = {b: states[b].x for b in states}
        lm_primal_update(states, m_h, m_l, w_h, w_l, spec_h, spec_l, sys,
                         config.lm_iters, config.cg_iters, r_norm_sq, counters)
        prev = {b: {"a": None, "y": s.y, "z": s.z} for b, s in states.items()}
        rs = {}
        for beta, s in states.items():
            s.y = update_y(s.dx, s.u_y, lams[beta], s.rho)
            s.z = update_z(s.x, s.u_z)
            s.u_y = s.u_y + s.y - s.dx
            s.u_z = s.u_z + s.z - s.x
            rs[beta] = residuals({"a": None, "y": s.y, "z": s.z,
                                  "x": s.x, "rx": None, "dx": s.dx,
                                  "rho": s.rho, "prev": prev[beta]})
            r_rel, s_rel = _relative_residuals(s, *rs[beta])
            rho_new = update_rho(s.rho, r_rel, s_rel, config.tau, config.mu)
            if rho_new != s.rho:
                scale = s.rho / rho_new
                s.u_y *= scale
                s.u_z *= scale
                s.rho = rho_new
        wall_ms = (time.perf_counter() - t0) * 1e3
        records.append(_telemetry(it, states, reference, counters, wall_ms,
                                  rs, 0))
        if all(np.linalg.norm(states[b].x - x_prev[b])
               <= config.tol * max(float(np.linalg.norm(x_prev[b])), 1e-30)
               for b in states):
            break
    return (states["c"].x, states["p"].x), records
