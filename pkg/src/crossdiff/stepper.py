"""Fully implicit time stepping of the coupled system.

Each step solves, for the unknown pair ``(u_k, v_k)``,

    u_k - u_{k-1} - tau * (Lap_h[a1(u_k, v_k) u_k] + r1(u_k, v_k) u_k) = 0
    v_k - v_{k-1} - tau * (Lap_h[a2(v_k) v_k]      + r2(u_k, v_k) v_k) = 0

by a damped Newton iteration on the stacked unknown.  Residuals are the
tau-scaled forms above, so the Newton tolerance is measured in units of the
densities.
"""
from __future__ import annotations

import logging
import math
import time as _time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid, face_differences, fsum, integrate
from .model import ParamSet, power, validate_params

logger = logging.getLogger(__name__)

ARMIJO = 1e-4
MAX_HALVINGS = 30


class StepSizeViolation(ValueError):
    pass


class NewtonDivergence(RuntimeError):
    def __init__(self, message: str, residual_history: Sequence[float] = ()):
        super().__init__(message)
        self.residual_history = list(residual_history)


class PositivityLoss(RuntimeError):
    pass


class StepFailure(RuntimeError):
    """A step error annotated with the index of the failing step."""

    def __init__(self, step_index: int, cause: Exception):
        super().__init__(f"step {step_index}: {type(cause).__name__}: {cause}")
        self.step_index = step_index
        self.cause = cause


@dataclass(frozen=True)
class SchemeConfig:
    T: float
    N: int
    newton_tol: float = 1e-10
    newton_max_iter: int = 50
    positivity_floor: float = 1e-14

    @property
    def tau(self) -> float:
        return self.T / self.N

    def check(self, p: ParamSet) -> None:
        if not (self.T > 0 and self.N >= 1):
            raise StepSizeViolation("need T > 0 and N >= 1")
        if not self.tau * max(p.r_u, p.r_v) < 0.5:
            raise StepSizeViolation(
                f"tau*max(r_u, r_v) = {self.tau * max(p.r_u, p.r_v):.6g} must be < 1/2"
            )


@dataclass
class State:
    grid: Grid
    u: np.ndarray
    v: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.u = self.grid.check(self.u)
        self.v = self.grid.check(self.v)

    @property
    def positive(self) -> bool:
        return bool(np.all(self.u > 0) and np.all(self.v > 0))


@dataclass
class StepReport:
    newton_iterations: int
    final_residual: float
    damping_events: int
    wall_time: float
    fallback_used: bool = False


@dataclass
class Trajectory:
    """States ``k = 0..N`` stacked along the first axis of ``u`` and ``v``."""

    grid: Grid
    params: ParamSet
    times: np.ndarray
    u: np.ndarray
    v: np.ndarray
    reports: list[StepReport] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        expected = (len(self.times),) + self.grid.shape
        if self.u.shape != expected or self.v.shape != expected:
            raise ValueError("trajectory arrays do not match times and grid")

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> float:
        return float(self.times[-1] - self.times[0])

    @property
    def steps(self) -> np.ndarray:
        """Time increments ``t_k - t_{k-1}`` for ``k = 1..N``."""
        return np.diff(self.times)

    @property
    def tau(self) -> float:
        dt = self.steps
        if not np.allclose(dt, dt[0], rtol=1e-12, atol=0):
            raise ValueError("trajectory time steps are not uniform")
        return float(dt[0])

    def state(self, k: int) -> State:
        return State(self.grid, self.u[k], self.v[k], float(self.times[k]))

    def __len__(self) -> int:
        return len(self.times)

    def __iter__(self):
        return (self.state(k) for k in range(len(self)))


def initial_lift(u_in, v_in, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Truncate ``u_in`` at ``N`` and lift both densities by ``1/N``."""
    u_in = np.asarray(u_in, dtype=float)
    v_in = np.asarray(v_in, dtype=float)
    if np.any(u_in < 0) or np.any(v_in < 0):
        raise ValueError("initial data must be nonnegative")
    return np.minimum(u_in, N) + 1.0 / N, v_in + 1.0 / N


# --- residual and Jacobian -------------------------------------------------


def scheme_residual(grid: Grid, p: ParamSet, u, v, u_prev, v_prev, tau: float):
    """Tau-scaled residual of one implicit step, returned as ``(F_u, F_v)``."""
    w1 = (p.d_u + p.d_alpha * power(u, p.alpha) + p.d_beta * power(v, p.beta)) * u
    w2 = (p.d_v + p.d_gamma * power(v, p.gamma)) * v
    r1 = u * (p.r_u - p.r_a * power(u, p.a) - p.r_b * power(v, p.b))
    r2 = v * (p.r_v - p.r_c * power(v, p.c) - p.r_d * power(u, p.d))
    fu = (u - u_prev) - tau * (grid.laplacian(w1) + r1)
    fv = (v - v_prev) - tau * (grid.laplacian(w2) + r2)
    return fu, fv


def _dpow(x, e: float, floor: float):
    """``e * x**(e-1)`` with ``x`` floored before negative powers."""
    if e == 0:
        return np.zeros_like(x)
    if e == 1:
        return np.ones_like(x)
    return e * np.power(np.maximum(x, floor), e - 1.0)


def _jacobian_blocks(grid: Grid, p: ParamSet, u, v, tau: float, floor: float):
    uf, vf = u.ravel(), v.ravel()
    ua, vb = power(uf, p.alpha), power(vf, p.beta)
    dw1_du = p.d_u + p.d_alpha * (1 + p.alpha) * ua + p.d_beta * vb
    dw1_dv = p.d_beta * _dpow(vf, p.beta, floor) * uf
    dw2_dv = p.d_v + p.d_gamma * (1 + p.gamma) * power(vf, p.gamma)
    dr1_du = p.r_u - p.r_a * (1 + p.a) * power(uf, p.a) - p.r_b * power(vf, p.b)
    dr1_dv = -p.r_b * _dpow(vf, p.b, floor) * uf
    dr2_dv = p.r_v - p.r_c * (1 + p.c) * power(vf, p.c) - p.r_d * power(uf, p.d)
    dr2_du = -p.r_d * _dpow(uf, p.d, floor) * vf

    L = grid.laplacian_matrix
    eye = sp.identity(grid.size, format="csr")
    juu = eye - tau * (L @ sp.diags(dw1_du) + sp.diags(dr1_du))
    juv = -tau * (L @ sp.diags(dw1_dv) + sp.diags(dr1_dv))
    jvu = -tau * sp.diags(dr2_du)
    jvv = eye - tau * (L @ sp.diags(dw2_dv) + sp.diags(dr2_dv))
    return juu, juv, jvu, jvv


def _laplacian_coo(grid: Grid):
    L = grid.laplacian_matrix.tocoo()
    return L.row, L.col, L.data


def _coupled_jacobian(grid: Grid, p: ParamSet, u, v, tau: float, floor: float) -> sp.csc_matrix:
    """Stacked Jacobian assembled in one pass (same entries as `_jacobian_blocks`)."""
    n = grid.size
    uf, vf = u.ravel(), v.ravel()
    ua, vb = power(uf, p.alpha), power(vf, p.beta)
    dw1_du = p.d_u + p.d_alpha * (1 + p.alpha) * ua + p.d_beta * vb
    dw1_dv = p.d_beta * _dpow(vf, p.beta, floor) * uf
    dw2_dv = p.d_v + p.d_gamma * (1 + p.gamma) * power(vf, p.gamma)
    dr1_du = p.r_u - p.r_a * (1 + p.a) * power(uf, p.a) - p.r_b * power(vf, p.b)
    dr1_dv = -p.r_b * _dpow(vf, p.b, floor) * uf
    dr2_dv = p.r_v - p.r_c * (1 + p.c) * power(vf, p.c) - p.r_d * power(uf, p.d)
    dr2_du = -p.r_d * _dpow(uf, p.d, floor) * vf

    r, c, lv = _laplacian_coo(grid)
    idx = np.arange(n)
    rows = np.concatenate([r, r, r + n, idx, idx, idx + n, idx + n])
    cols = np.concatenate([c, c + n, c + n, idx, idx + n, idx, idx + n])
    data = np.concatenate([
        -tau * lv * dw1_du[c],
        -tau * lv * dw1_dv[c],
        -tau * lv * dw2_dv[c],
        1.0 - tau * dr1_du,
        -tau * dr1_dv,
        -tau * dr2_du,
        1.0 - tau * dr2_dv,
    ])
    return sp.csc_matrix((data, (rows, cols)), shape=(2 * n, 2 * n))


def _linear_solve(A: sp.spmatrix, b: np.ndarray, dim: int) -> np.ndarray:
    A = A.tocsc()
    if dim == 1:
        return spla.spsolve(A, b)
    try:
        ilu = spla.spilu(A, drop_tol=1e-5, fill_factor=10)
        M = spla.LinearOperator(A.shape, ilu.solve)
        x, info = spla.gmres(A, b, M=M, rtol=1e-12, atol=0.0, restart=50, maxiter=200)
        if info == 0:
            return x
        logger.debug("gmres returned info=%d, falling back to direct solve", info)
    except RuntimeError as exc:  # singular ILU factor
        logger.debug("ilu failed (%s), falling back to direct solve", exc)
    return spla.spsolve(A, b)


def _damped_newton(residual: Callable, solve_update: Callable, x0: np.ndarray,
                   cfg: SchemeConfig, dim: int):
    """Damped Newton on a flat positive unknown.

    ``residual(x)`` returns the flat residual and ``solve_update(x, F)`` the
    Newton increment.  Returns ``(x, iterations, residual_norm, damping_events)``.
    """
    x = x0.copy()
    F = residual(x)
    norm = float(np.max(np.abs(F)))
    history = [norm]
    damping = 0
    floor = cfg.positivity_floor
    for it in range(cfg.newton_max_iter + 1):
        tol = cfg.newton_tol * (1.0 + float(np.max(np.abs(x))))
        if norm <= tol:
            return x, it, norm, damping
        if it == cfg.newton_max_iter:
            break
        dx = solve_update(x, F)
        if not np.all(np.isfinite(dx)):
            raise NewtonDivergence("non-finite Newton increment", history)
        lam = 1.0
        saw_positive = False
        for _ in range(MAX_HALVINGS + 1):
            cand = x + lam * dx
            if np.all(cand >= floor):
                saw_positive = True
                Fc = residual(cand)
                nc = float(np.max(np.abs(Fc)))
                tol_c = cfg.newton_tol * (1.0 + float(np.max(np.abs(cand))))
                if np.isfinite(nc) and (nc <= (1.0 - ARMIJO * lam) * norm or nc <= tol_c):
                    break
            lam *= 0.5
            damping += 1
        else:
            if not saw_positive:
                raise PositivityLoss(f"no positive damped iterate after {MAX_HALVINGS} halvings")
            raise NewtonDivergence(f"no residual decrease after {MAX_HALVINGS} halvings", history + [nc])
        x, F, norm = cand, Fc, nc
        history.append(norm)
    raise NewtonDivergence(f"no convergence in {cfg.newton_max_iter} iterations", history)


def _coupled_solve(grid, p, prev_u, prev_v, tau, cfg):
    n = grid.size
    shape = grid.shape

    def residual(x):
        fu, fv = scheme_residual(grid, p, x[:n].reshape(shape), x[n:].reshape(shape), prev_u, prev_v, tau)
        return np.concatenate([fu.ravel(), fv.ravel()])

    def solve_update(x, F):
        J = _coupled_jacobian(grid, p, x[:n].reshape(shape), x[n:].reshape(shape), tau, cfg.positivity_floor)
        return -_linear_solve(J, F, grid.dim)

    x0 = np.concatenate([prev_u.ravel(), prev_v.ravel()])
    return _damped_newton(residual, solve_update, x0, cfg, grid.dim)


def _staggered_solve(grid, p, prev_u, prev_v, tau, cfg, max_sweeps: int = 200):
    """Alternate single-species Newton solves until the coupled residual converges."""
    n = grid.size
    shape = grid.shape
    u, v = prev_u.copy(), prev_v.copy()
    iterations = damping = 0
    for _ in range(max_sweeps):
        u_fixed = u

        def res_v(y):
            return scheme_residual(grid, p, u_fixed, y.reshape(shape), prev_u, prev_v, tau)[1].ravel()

        def upd_v(y, F):
            jvv = _jacobian_blocks(grid, p, u_fixed, y.reshape(shape), tau, cfg.positivity_floor)[3]
            return -_linear_solve(jvv, F, grid.dim)

        y, it, _, dmp = _damped_newton(res_v, upd_v, v.ravel(), cfg, grid.dim)
        v = y.reshape(shape)
        iterations += it
        damping += dmp
        v_fixed = v

        def res_u(y):
            return scheme_residual(grid, p, y.reshape(shape), v_fixed, prev_u, prev_v, tau)[0].ravel()

        def upd_u(y, F):
            juu = _jacobian_blocks(grid, p, y.reshape(shape), v_fixed, tau, cfg.positivity_floor)[0]
            return -_linear_solve(juu, F, grid.dim)

        y, it, _, dmp = _damped_newton(res_u, upd_u, u.ravel(), cfg, grid.dim)
        u = y.reshape(shape)
        iterations += it
        damping += dmp

        fu, fv = scheme_residual(grid, p, u, v, prev_u, prev_v, tau)
        norm = max(float(np.max(np.abs(fu))), float(np.max(np.abs(fv))))
        if norm <= cfg.newton_tol * (1.0 + max(float(np.max(u)), float(np.max(v)))):
            return np.concatenate([u.ravel(), v.ravel()]), iterations, norm, damping
    raise NewtonDivergence("staggered fallback did not converge")


def step(prev: State, p: ParamSet, cfg: SchemeConfig) -> tuple[State, StepReport]:
    """Advance ``prev`` by one implicit step of size ``cfg.tau``."""
    cfg.check(p)
    if not prev.positive:
        raise PositivityLoss("previous state is not strictly positive")
    grid = prev.grid
    tau = cfg.tau
    start = _time.perf_counter()
    fallback = False
    try:
        x, iters, norm, damping = _coupled_solve(grid, p, prev.u, prev.v, tau, cfg)
    except NewtonDivergence as exc:
        logger.info("coupled Newton failed (%s); trying staggered fallback", exc)
        try:
            x, iters, norm, damping = _staggered_solve(grid, p, prev.u, prev.v, tau, cfg)
        except (NewtonDivergence, PositivityLoss):
            raise exc
        fallback = True
    n = grid.size
    u = x[:n].reshape(grid.shape)
    v = x[n:].reshape(grid.shape)
    if not (np.all(u >= cfg.positivity_floor) and np.all(v >= cfg.positivity_floor)):
        raise PositivityLoss("accepted iterate fell below the positivity floor")
    report = StepReport(iters, norm, damping, _time.perf_counter() - start, fallback)
    return State(grid, u, v, prev.time + tau), report


def run(initial: State, p: ParamSet, cfg: SchemeConfig, diagnostics=None, with_report: bool = True):
    """Run ``cfg.N`` steps from ``initial``.

    Returns ``(trajectory, report)``; the report is a `DiagnosticsReport`
    computed with ``diagnostics`` (a `DiagnosticsConfig`, defaults used when
    ``None``), or ``None`` when ``with_report`` is false.
    """
    validate_params(p)
    cfg.check(p)
    if not initial.positive:
        raise PositivityLoss("initial data must be strictly positive (see initial_lift)")
    grid = initial.grid
    us = np.empty((cfg.N + 1,) + grid.shape)
    vs = np.empty_like(us)
    us[0], vs[0] = initial.u, initial.v
    reports = []
    state = State(grid, initial.u.copy(), initial.v.copy(), 0.0)
    for k in range(1, cfg.N + 1):
        try:
            state, rep = step(state, p, cfg)
        except (NewtonDivergence, PositivityLoss, StepSizeViolation) as exc:
            raise StepFailure(k, exc) from exc
        state.time = k * cfg.tau
        us[k], vs[k] = state.u, state.v
        reports.append(rep)
    times = np.arange(cfg.N + 1) * cfg.tau
    traj = Trajectory(grid, p, times, us, vs, reports)
    if not with_report:
        return traj, None
    from .diagnostics import DiagnosticsConfig, run_diagnostics

    return traj, run_diagnostics(traj, diagnostics or DiagnosticsConfig())


# --- weak formulation ------------------------------------------------------


@dataclass
class TestFunction:
    """Smooth test function ``psi(t, x)`` given by closures.

    ``value(t, *coords)`` and ``grad(t, *coords)`` accept coordinate arrays
    of equal shape; ``grad`` returns one array per axis.
    """

    value: Callable
    grad: Callable
    dt: Callable | None = None

    __test__ = False


def cosine_test_function(grid: Grid, t_end: float, modes=1) -> TestFunction:
    """``cos(k pi x / L)`` times a smooth bump in time supported on ``[0, t_end)``."""
    modes = (modes,) * grid.dim if np.ndim(modes) == 0 else tuple(modes)
    ks = [m * math.pi / L for m, L in zip(modes, grid.length)]

    def bump(t):
        s = np.clip(np.asarray(t, dtype=float) / t_end, 0.0, 1.0)
        return np.where(s < 1.0, (1.0 - s**2) ** 3, 0.0)

    def dbump(t):
        s = np.clip(np.asarray(t, dtype=float) / t_end, 0.0, 1.0)
        return np.where(s < 1.0, -6.0 * s * (1.0 - s**2) ** 2 / t_end, 0.0)

    def space(*x):
        out = 1.0
        for k, xi in zip(ks, x):
            out = out * np.cos(k * xi)
        return out

    def value(t, *x):
        return bump(t) * space(*x)

    def grad(t, *x):
        out = []
        for axis, k in enumerate(ks):
            g = -k * np.sin(k * x[axis])
            for other, (k2, xo) in enumerate(zip(ks, x)):
                if other != axis:
                    g = g * np.cos(k2 * xo)
            out.append(bump(t) * g)
        return out

    def dt(t, *x):
        return dbump(t) * space(*x)

    return TestFunction(value, grad, dt)


def _face_coords(grid: Grid, axis: int):
    axes = grid.axes()
    axes[axis] = np.arange(1, grid.n[axis]) * grid.h[axis]
    return np.meshgrid(*axes, indexing="ij")


def weak_residual(traj: Trajectory, psi: TestFunction, which: str = "u") -> float:
    """Discrete residual of the weak formulation tested against ``psi``.

    The trajectory is read as a step function in time (``u_k`` on
    ``(t_{k-1}, t_k]``), so the time-derivative term is integrated exactly
    through ``psi(t_k) - psi(t_{k-1})``.  Flux terms use face differences of
    the composite ``a(u, v) u`` against the analytic gradient of ``psi`` at
    face centres; Neumann faces contribute nothing.
    """
    if which not in ("u", "v"):
        raise ValueError("which must be 'u' or 'v'")
    grid, p = traj.grid, traj.params
    centres = grid.coords()
    faces = [_face_coords(grid, axis) for axis in range(grid.dim)]
    dens = traj.u if which == "u" else traj.v
    total = []
    psi0 = psi.value(traj.times[0], *centres)
    total.append(-integrate(grid, psi0 * dens[0]))
    total.append(integrate(grid, psi.value(traj.times[-1], *centres) * dens[-1]))
    prev_psi = psi0
    for k in range(1, len(traj)):
        t, dt = traj.times[k], traj.times[k] - traj.times[k - 1]
        u, v = traj.u[k], traj.v[k]
        cur_psi = psi.value(t, *centres)
        total.append(-integrate(grid, (cur_psi - prev_psi) * dens[k]))
        if which == "u":
            w = (p.d_u + p.d_alpha * power(u, p.alpha) + p.d_beta * power(v, p.beta)) * u
            r = u * (p.r_u - p.r_a * power(u, p.a) - p.r_b * power(v, p.b))
        else:
            w = (p.d_v + p.d_gamma * power(v, p.gamma)) * v
            r = v * (p.r_v - p.r_c * power(v, p.c) - p.r_d * power(u, p.d))
        flux = 0.0
        for axis, (dw, h) in enumerate(zip(face_differences(grid, w), grid.h)):
            gpsi = psi.grad(t, *faces[axis])[axis]
            flux += fsum(gpsi * dw) / h
        total.append(dt * flux * grid.cell_volume)
        total.append(-dt * integrate(grid, cur_psi * r))
        prev_psi = cur_psi
    return math.fsum(total)
