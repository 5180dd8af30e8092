"""Runtime monitors for the a-priori estimates along a computed trajectory.

Every monitor is a pure function of a `Trajectory`.  Monitors with a
computable bound produce a margin series (``value - bound``) that is
checked against a tolerance; estimates whose constants are only known to
exist are reported as measured values without a pass/fail verdict beyond
finiteness and monotone accumulation.

Gradient-squared terms of the form ``g''(z) |grad z|^2`` are assembled with
the discrete chain rule on each interior face,
``(g'(z_{i+1}) - g'(z_i)) (z_{i+1} - z_i) / h^2``, which is the form the
implicit scheme's Neumann Laplacian produces under summation by parts.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import grid as G
from .model import ParamSet, power, validate_params
from .stepper import Trajectory, _linear_solve

MAX_PRINCIPLE_RTOL = 1e-12
ENTROPY_ABS_TOL = 1e-6
ENTROPY_H2_FACTOR = 10.0
MASS_ABS_TOL = 1e-8
MASS_ALLOWANCE = 10.0
DUAL_POSITIVITY_TOL = 1e-12
DEFAULT_NU_HATS = (0.0, 0.05, 0.1)

MONITORS = (
    "max_principle", "mass", "duality", "entropy_v", "entropy_u",
    "log_entropy", "dual_probe", "regularity",
)


# --- entropy densities -----------------------------------------------------


def phi_p(z, p: float):
    """Convex entropy density ``z - z^p/p - 1 + 1/p`` for ``0 < p < 1``.

    ``p = 0`` gives the limit ``z - log z - 1``.  Both vanish at ``z = 1``.
    """
    z = np.asarray(z, dtype=float)
    if p == 0:
        return z - np.log(z) - 1.0
    # (z^p - 1)/p through expm1 so small p does not cancel
    return z - 1.0 - np.expm1(p * np.log(z)) / p


def dphi_p(z, p: float):
    z = np.asarray(z, dtype=float)
    if p == 0:
        return 1.0 - 1.0 / z
    return 1.0 - z ** (p - 1.0)


def d2phi_p(z, p: float):
    z = np.asarray(z, dtype=float)
    if p == 0:
        return 1.0 / z**2
    return (1.0 - p) * z ** (p - 2.0)


def phi_u(z, mu: float = 1.0):
    z = np.asarray(z, dtype=float)
    return 2.0 * z - np.log(mu + z)


def dphi_u(z, mu: float = 1.0):
    return 2.0 - 1.0 / (mu + np.asarray(z, dtype=float))


def d2phi_u(z, mu: float = 1.0):
    return 1.0 / (mu + np.asarray(z, dtype=float)) ** 2


# --- explicit constants ----------------------------------------------------


def mass_constant(a: float, r_u: float, r_a: float) -> float:
    """``sup_{z>=0} r_u z - (r_a/2) z^(1+a)``."""
    if r_u == 0:
        return 0.0
    if r_a == 0:
        return math.inf
    z = (2.0 * r_u / (r_a * (1.0 + a))) ** (1.0 / a)
    return r_u * z - 0.5 * r_a * z ** (1.0 + a)


def entropy_u_constant(r_u: float, r_a: float, a: float) -> float:
    """``sup_{z>=0} 2 z (r_u - r_a z^a)``."""
    if r_u == 0:
        return 0.0
    if r_a == 0:
        return math.inf
    z = (r_u / (r_a * (1.0 + a))) ** (1.0 / a)
    return 2.0 * z * (r_u - r_a * z**a)


def max_principle_bound(p: ParamSet, v0) -> float:
    return max(float(np.max(v0)), (p.r_v / p.r_c) ** (1.0 / p.c))


def duality_K(p: ParamSet) -> float:
    """Upper bound for the reaction ``(r_u - r_a u^a) u`` used by the dual probe."""
    if p.r_a == 0:
        return math.inf
    exponent = 1.0 / p.a if p.r_u < p.r_a else 2.0 / p.a
    return p.r_u * (p.r_u / p.r_a) ** exponent


# --- report containers -----------------------------------------------------


@dataclass
class MonitorSeries:
    """One monitored inequality: ``value <= bound`` up to ``tolerance``.

    ``status`` is one of ``pass``, ``fail``, ``not_applicable`` or
    ``reported`` (no asserted bound).
    """

    name: str
    steps: np.ndarray
    times: np.ndarray
    value: np.ndarray
    bound: np.ndarray
    tolerance: float
    status: str = "reported"
    note: str = ""

    @property
    def margin(self) -> np.ndarray:
        return self.value - self.bound

    @property
    def passed(self) -> np.ndarray:
        return self.margin <= self.tolerance

    @property
    def max_margin(self) -> float:
        return float(np.max(self.margin)) if len(self.margin) else -math.inf

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "time", "value", "bound", "margin", "pass"])
            for k, t, val, b, m, ok in zip(self.steps, self.times, self.value, self.bound, self.margin, self.passed):
                w.writerow([int(k), repr(float(t)), repr(float(val)), repr(float(b)), repr(float(m)), int(bool(ok))])


def _series(name, traj, ks, value, bound, tolerance, asserted=True, note=""):
    value = np.asarray(value, dtype=float)
    bound = np.broadcast_to(np.asarray(bound, dtype=float), value.shape).copy()
    s = MonitorSeries(name, np.asarray(ks), traj.times[ks], value, bound, tolerance, note=note)
    if asserted:
        s.status = "pass" if bool(np.all(np.isfinite(value)) and np.all(s.passed)) else "fail"
    return s


def _not_applicable(name, note):
    empty = np.array([])
    return MonitorSeries(name, empty.astype(int), empty, empty, empty, 0.0, "not_applicable", note)


@dataclass
class DualProbeSpec:
    f: str | Callable = "constant"
    nu_hats: Sequence[float] = DEFAULT_NU_HATS


@dataclass
class DiagnosticsConfig:
    entropy_exponents: Sequence[float] | None = None  # None -> (0.5, 2, beta)
    include_log_entropies: bool = True
    dual_probe: DualProbeSpec | None = None
    regularity_q: float = 1.5
    monitors: Sequence[str] | None = None  # None -> all except dual_probe unless configured
    entropy_tol: float = ENTROPY_ABS_TOL
    entropy_h2_factor: float = ENTROPY_H2_FACTOR

    def exponents(self, p: ParamSet) -> list[float]:
        if self.entropy_exponents is None:
            # beta = 1 is dropped from the default set rather than rejected
            ps = [q for q in (0.5, 2.0, p.beta) if q != 1]
        else:
            ps = list(self.entropy_exponents)
        out = []
        for q in ps:
            q = float(q)
            if not q > 0 or q == 1:
                raise ValueError(f"entropy exponent must be positive and != 1, got {q}")
            if q not in out:
                out.append(q)
        return out

    def enabled(self, name: str) -> bool:
        if self.monitors is None:
            return name != "dual_probe" or self.dual_probe is not None
        return name in self.monitors


@dataclass
class DiagnosticsReport:
    monitors: dict[str, MonitorSeries] = field(default_factory=dict)
    series: dict[str, np.ndarray] = field(default_factory=dict)
    measured: dict[str, float] = field(default_factory=dict)
    probe: "DualProbeReport | None" = None
    regularity: dict[str, float] | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def failed(self) -> list[str]:
        return [n for n, m in self.monitors.items() if m.status == "fail"]

    @property
    def all_pass(self) -> bool:
        return not self.failed

    def summary(self) -> dict:
        mons = {}
        for name in sorted(self.monitors):
            m = self.monitors[name]
            mons[name] = {
                "status": m.status,
                "max_margin": None if m.status == "not_applicable" else _jsonable(m.max_margin),
                "tolerance": _jsonable(m.tolerance),
                "note": m.note,
            }
        out = {
            "all_pass": self.all_pass,
            "monitors": mons,
            "measured": {k: _jsonable(v) for k, v in sorted(self.measured.items())},
            "notes": list(self.notes),
        }
        if self.probe is not None:
            out["dual_probe"] = self.probe.summary()
        if self.regularity is not None:
            out["regularity"] = {k: _jsonable(v) for k, v in sorted(self.regularity.items())}
        return out

    def write(self, outdir: str | Path) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        for name in sorted(self.monitors):
            m = self.monitors[name]
            if m.status == "not_applicable":
                continue
            path = outdir / f"monitor_{name}.csv"
            m.write_csv(path)
            written.append(path)
        path = outdir / "summary.json"
        path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        written.append(path)
        return written


def _jsonable(x):
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
    return x


# --- monitors --------------------------------------------------------------


def check_max_principle(traj: Trajectory) -> MonitorSeries:
    p = traj.params
    if p.r_c == 0:
        return _not_applicable("max_principle", "r_c = 0")
    bound = max_principle_bound(p, traj.v[0])
    ks = np.arange(1, len(traj))
    value = np.array([np.max(traj.v[k]) for k in ks])
    return _series("max_principle", traj, ks, value, bound, MAX_PRINCIPLE_RTOL * (1.0 + bound))


def check_mass_estimate(traj: Trajectory) -> MonitorSeries:
    """``int u_k + (r_a/2) sum tau int u^(1+a) <= int u_0 + |Omega| t_k C`` for every k."""
    p, grid = traj.params, traj.grid
    if p.r_a == 0:
        return _not_applicable("mass", "r_a = 0")
    C = mass_constant(p.a, p.r_u, p.r_a)
    ks = np.arange(1, len(traj))
    dts = traj.steps
    lhs, rhs = [], []
    acc = 0.0
    m0 = G.integrate(grid, traj.u[0])
    for k in ks:
        acc += dts[k - 1] * G.integrate(grid, power(traj.u[k], 1.0 + p.a))
        lhs.append(G.integrate(grid, traj.u[k]) + 0.5 * p.r_a * acc)
        rhs.append(m0 + grid.volume * (traj.times[k] - traj.times[0]) * C)
    lhs, rhs = np.array(lhs), np.array(rhs)
    tau = float(np.max(dts))
    tol = MASS_ABS_TOL + MASS_ALLOWANCE * (tau + grid.hmax**2) * float(rhs[-1])
    return _series("mass", traj, ks, lhs, rhs, tol)


def duality_terms(traj: Trajectory, exponent: float | None = None) -> np.ndarray:
    """Per-step ``tau int (1 + u^alpha) u^2``, or ``tau int u^exponent`` if given."""
    p, grid = traj.params, traj.grid
    out = []
    for k, dt in zip(range(1, len(traj)), traj.steps):
        u = traj.u[k]
        dens = (1.0 + power(u, p.alpha)) * u**2 if exponent is None else power(u, exponent)
        out.append(dt * G.integrate(grid, dens))
    return np.array(out)


def duality_functional(traj: Trajectory, exponent: float | None = None) -> float:
    return math.fsum(duality_terms(traj, exponent))


def _chain_dissipation(grid: G.Grid, z, dg: Callable, weight=None) -> float:
    """``int g''(z) w |grad z|^2`` through face differences of ``g'(z)`` and ``z``."""
    return G.face_bilinear(grid, dg(z), z, weight)


def entropy_v_step_check(traj: Trajectory, p_exp: float, tol: float | None = None) -> MonitorSeries:
    """Per-step entropy inequality for ``v`` with density ``phi_p``, ``0 <= p < 1``."""
    if not 0 <= p_exp < 1:
        raise ValueError("the step inequality holds for 0 <= p < 1")
    p, grid = traj.params, traj.grid
    if tol is None:
        tol = ENTROPY_ABS_TOL + ENTROPY_H2_FACTOR * grid.hmax**2
    ks = np.arange(1, len(traj))
    margins = []
    for k, dt in zip(ks, traj.steps):
        u, v, v_prev = traj.u[k], traj.v[k], traj.v[k - 1]
        vf = np.maximum(v, 1e-300)
        dE = G.integrate(grid, phi_p(vf, p_exp) - phi_p(np.maximum(v_prev, 1e-300), p_exp))
        diss = p.d_v * _chain_dissipation(grid, vf, lambda z: dphi_p(z, p_exp))
        react = G.integrate(grid, dphi_p(vf, p_exp) * v * (p.r_v - p.r_c * power(v, p.c) - p.r_d * power(u, p.d)))
        margins.append(dE + dt * diss - dt * react)
    return _series(f"entropy_v_p{_fmt(p_exp)}", traj, ks, margins, 0.0, tol)


def entropy_v_series(traj: Trajectory, p_exp: float) -> tuple[np.ndarray, np.ndarray]:
    """``(int phi_p(v_k), sum_{j<=k} tau d_v int phi_p'' |grad v_j|^2)`` for k = 0..N."""
    p, grid = traj.params, traj.grid
    values = np.array([G.integrate(grid, phi_p(np.maximum(v, 1e-300), p_exp)) for v in traj.v])
    terms = [0.0] + [
        dt * p.d_v * _chain_dissipation(grid, np.maximum(traj.v[k], 1e-300), lambda z: dphi_p(z, p_exp))
        for k, dt in zip(range(1, len(traj)), traj.steps)
    ]
    return values, np.cumsum(terms)


def entropy_v_cumulative(traj: Trajectory, p_exp: float) -> np.ndarray:
    """Running sums ``sum_{j<=k} tau int |grad v_j^(p/2)|^2`` for k = 0..N."""
    grid = traj.grid
    terms = [0.0] + [
        dt * G.grad_sq_integral(grid, power(traj.v[k], p_exp / 2.0))
        for k, dt in zip(range(1, len(traj)), traj.steps)
    ]
    return np.cumsum(terms)


def entropy_u_step_check(traj: Trajectory, tol: float | None = None) -> MonitorSeries:
    p, grid = traj.params, traj.grid
    C = entropy_u_constant(p.r_u, p.r_a, p.a)
    if not math.isfinite(C):
        return _not_applicable("entropy_u", "r_a = 0")
    if tol is None:
        tol = ENTROPY_ABS_TOL + ENTROPY_H2_FACTOR * grid.hmax**2
    ks = np.arange(1, len(traj))
    lhs, rhs = [], []
    for k, dt in zip(ks, traj.steps):
        u, v, u_prev = traj.u[k], traj.v[k], traj.u[k - 1]
        coef = (
            p.d_u
            + p.d_alpha * (1.0 + p.alpha) * power(u, p.alpha)
            + 0.5 * p.d_beta * power(v, p.beta)
        )
        weight = G.face_average(grid, coef)
        dE = G.integrate(grid, phi_u(u) - phi_u(u_prev))
        diss = _chain_dissipation(grid, u, dphi_u, weight)
        lhs.append(dE + dt * diss)
        cross = 2.0 * p.d_beta * G.grad_sq_integral(grid, power(v, p.beta / 2.0))
        rhs.append(dt * cross + dt * grid.volume * C)
    return _series("entropy_u", traj, ks, lhs, rhs, tol)


def log_entropy_checks(traj: Trajectory) -> tuple[MonitorSeries, MonitorSeries, dict[str, np.ndarray]]:
    """Log-entropy accumulation for ``u`` and ``v``.

    Returns one monitor per species whose value is the running sum
    ``sum tau int |grad log z_k|^2``; it passes when every reported
    quantity is finite and the running sum never decreases.  The bound
    column holds ``sup_{j<=k} int |log z_j|``.
    """
    grid = traj.grid
    out, extra = [], {}
    ks = np.arange(0, len(traj))
    for name, dens in (("u", traj.u), ("v", traj.v)):
        abs_log = np.array([G.integrate(grid, np.abs(np.log(np.maximum(z, 1e-300)))) for z in dens])
        sup_abs = np.maximum.accumulate(abs_log)
        terms = [0.0] + [
            dt * G.grad_sq_integral(grid, np.log(np.maximum(dens[k], 1e-300)))
            for k, dt in zip(range(1, len(traj)), traj.steps)
        ]
        cum = np.cumsum(terms)
        s = MonitorSeries(f"log_entropy_{name}", ks, traj.times[ks], cum, sup_abs, math.inf)
        ok = bool(np.all(np.isfinite(cum)) and np.all(np.isfinite(sup_abs)) and np.all(np.diff(cum) >= 0))
        s.status = "pass" if ok else "fail"
        s.note = "finiteness and monotone accumulation only; bound column is sup_k int|log z_k|"
        out.append(s)
        extra[f"sup_abs_log_{name}"] = sup_abs
        extra[f"grad_log_sum_{name}"] = cum
    return out[0], out[1], extra


# --- dual problem probe ----------------------------------------------------


@dataclass
class DualProbeReport:
    min_value: float
    positive: bool
    pairing: float
    identity_residual: float
    ratios: dict[float, float]
    solution: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            "min_value": _jsonable(self.min_value),
            "positive": self.positive,
            "pairing": _jsonable(self.pairing),
            "identity_residual": _jsonable(self.identity_residual),
            "ratios": {f"{k:g}": _jsonable(v) for k, v in sorted(self.ratios.items())},
        }


def probe_forcing(spec: str | Callable, grid: G.Grid, T: float) -> Callable:
    """Nonpositive smooth forcing ``f(t, *x)`` from a preset name.

    ``constant`` is ``-1``; ``random:<seed>`` is a random combination of
    low cosine modes in space and time shifted to stay below ``-0.1``.
    """
    if callable(spec):
        return spec
    if spec == "constant":
        return lambda t, *x: -np.ones(np.shape(x[0]))
    if spec.startswith("random:"):
        seed = int(spec.split(":", 1)[1])
        rng = np.random.default_rng(seed)
        modes = rng.integers(1, 4, size=(3, grid.dim))
        amps = rng.uniform(-1.0, 1.0, size=3)
        freqs = rng.uniform(0.0, 2.0 * math.pi / T, size=3)
        shift = float(np.sum(np.abs(amps))) + 0.1

        def f(t, *x):
            total = np.full(np.shape(x[0]), shift)
            for amp, mode, om in zip(amps, modes, freqs):
                term = amp * math.cos(om * t)
                for xi, m, L in zip(x, mode, grid.length):
                    term = term * np.cos(m * math.pi * xi / L)
                total = total + term
            return -total

        return f
    raise ValueError(f"unknown dual probe forcing: {spec}")


def dual_probe(traj: Trajectory, f, nu_hats: Sequence[float] = DEFAULT_NU_HATS,
               M: np.ndarray | None = None) -> DualProbeReport:
    """Solve the backward dual problem ``psi_t + M Lap psi = f``, ``psi(T) = 0``.

    ``M_k = a1(u_k, v_k)`` unless an explicit ``M`` (shape ``(N+1,) + grid``)
    is given.  Backward implicit steps

        (I - tau_k M_k Lap_h) psi_{k-1} = psi_k - tau_k f(t_k)

    are the exact discrete adjoint of the forward scheme, so
    ``sum tau_k <u_k, -f_k> = <u_0, psi_0> + sum tau_k <psi_{k-1}, r1 u_k>``
    holds up to the Newton tolerance; its relative defect is reported.
    """
    p, grid = traj.params, traj.grid
    f = probe_forcing(f, grid, traj.T)
    coords = grid.coords()
    N = len(traj) - 1
    fs = np.array([np.asarray(f(traj.times[k], *coords), dtype=float) * np.ones(grid.shape) for k in range(N + 1)])
    if np.any(fs > 0):
        raise ValueError("dual probe forcing must be nonpositive")
    if M is None:
        M = np.array([p.d_u + p.d_alpha * power(traj.u[k], p.alpha) + p.d_beta * power(traj.v[k], p.beta)
                      for k in range(N + 1)])
    L = grid.laplacian_matrix
    eye = sp.identity(grid.size, format="csr")
    psi = np.zeros((N + 1,) + grid.shape)
    for k in range(N, 0, -1):
        dt = traj.times[k] - traj.times[k - 1]
        A = eye - dt * (sp.diags(M[k].ravel()) @ L)
        rhs = (psi[k] - dt * fs[k]).ravel()
        psi[k - 1] = _linear_solve(A, rhs, grid.dim).reshape(grid.shape)

    pairing = math.fsum(
        (traj.times[k] - traj.times[k - 1]) * G.integrate(grid, -fs[k] * traj.u[k]) for k in range(1, N + 1)
    )
    other = [G.integrate(grid, traj.u[0] * psi[0])]
    for k in range(1, N + 1):
        dt = traj.times[k] - traj.times[k - 1]
        u, v = traj.u[k], traj.v[k]
        r = u * (p.r_u - p.r_a * power(u, p.a) - p.r_b * power(v, p.b))
        other.append(dt * G.integrate(grid, psi[k - 1] * r))
    other_sum = math.fsum(other)
    scale = max(abs(pairing), abs(other_sum), 1e-300)
    identity_residual = abs(pairing - other_sum) / scale if pairing != 0 or other_sum != 0 else 0.0

    u0_norm = math.sqrt(G.integrate(grid, traj.u[0] ** 2))
    K = duality_K(p)
    ratios = {}
    for nu in nu_hats:
        r = 2.0 - nu
        f_norm = math.fsum(
            (traj.times[k] - traj.times[k - 1]) * G.integrate(grid, np.abs(fs[k]) ** r) for k in range(1, N + 1)
        ) ** (1.0 / r)
        denom = (u0_norm + K) * f_norm
        ratios[float(nu)] = pairing / denom if denom > 0 else 0.0
    min_value = float(np.min(psi))
    return DualProbeReport(min_value, min_value >= -DUAL_POSITIVITY_TOL, pairing, identity_residual, ratios, psi)


# --- regularity ------------------------------------------------------------


def regularity_norms(traj: Trajectory, q: float) -> dict[str, float]:
    """Discrete ``L^q`` norms of ``dv/dt`` and the Hessian of ``v``, and ``L^2q`` of its gradient."""
    grid = traj.grid
    dt_terms, hess_terms, grad_terms = [], [], []
    for k, dt in zip(range(1, len(traj)), traj.steps):
        v = traj.v[k]
        dvdt = (v - traj.v[k - 1]) / dt
        dt_terms.append(dt * G.integrate(grid, np.abs(dvdt) ** q))
        H = G.hessian(grid, v)
        frob = np.sqrt(sum(H[i][j] ** 2 for i in range(grid.dim) for j in range(grid.dim)))
        hess_terms.append(dt * G.integrate(grid, frob**q))
        g = G.cell_gradient(grid, v)
        gnorm = np.sqrt(sum(gi**2 for gi in g))
        grad_terms.append(dt * G.integrate(grid, gnorm ** (2 * q)))
    return {
        "q": float(q),
        "dt_v_Lq": math.fsum(dt_terms) ** (1.0 / q),
        "hess_v_Lq": math.fsum(hess_terms) ** (1.0 / q),
        "grad_v_L2q": math.fsum(grad_terms) ** (1.0 / (2 * q)),
    }


# --- driver ----------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:g}"


def run_diagnostics(traj: Trajectory, cfg: DiagnosticsConfig | None = None) -> DiagnosticsReport:
    cfg = cfg or DiagnosticsConfig()
    p, grid = traj.params, traj.grid
    regime = validate_params(p)
    rep = DiagnosticsReport()
    rep.notes.append(
        "entropy step inequalities are checked on the space-discrete scheme with tolerance "
        f"{cfg.entropy_tol:g} + {cfg.entropy_h2_factor:g} h^2 (empirical surrogate)"
    )
    rep.series["time"] = traj.times.copy()
    rep.series["max_v"] = np.array([float(np.max(v)) for v in traj.v])
    rep.series["mass_u"] = np.array([G.integrate(grid, u) for u in traj.u])
    tol_e = cfg.entropy_tol + cfg.entropy_h2_factor * grid.hmax**2
    cumulative_ok = True

    if cfg.enabled("max_principle"):
        rep.monitors["max_principle"] = check_max_principle(traj)
    if cfg.enabled("mass"):
        rep.monitors["mass"] = check_mass_estimate(traj)
    if cfg.enabled("duality"):
        partial = np.concatenate([[0.0], np.cumsum(duality_terms(traj))])
        rep.series["duality_partial_sum"] = partial
        rep.measured["duality_functional"] = duality_functional(traj)
        for nu in DEFAULT_NU_HATS[1:]:
            rep.measured[f"duality_L{2 + nu:g}"] = duality_functional(traj, 2.0 + nu)
        cumulative_ok &= bool(np.all(np.diff(partial) >= 0))
    if cfg.enabled("entropy_v"):
        step_exps = [q for q in cfg.exponents(p) if q < 1]
        if cfg.include_log_entropies:
            step_exps = [0.0] + step_exps
        for q in step_exps:
            mon = entropy_v_step_check(traj, q, tol_e)
            rep.monitors[mon.name] = mon
            values, diss = entropy_v_series(traj, q)
            rep.series[f"entropy_v_p{_fmt(q)}"] = values
            rep.series[f"entropy_v_p{_fmt(q)}_dissipation"] = diss
            cumulative_ok &= bool(np.all(np.diff(diss) >= 0))
        for q in cfg.exponents(p):
            cum = entropy_v_cumulative(traj, q)
            rep.series[f"grad_v_pow_sum_p{_fmt(q)}"] = cum
            rep.measured[f"grad_v_pow_sum_p{_fmt(q)}"] = float(cum[-1])
            cumulative_ok &= bool(np.all(np.diff(cum) >= 0))
    if cfg.enabled("entropy_u"):
        mon = entropy_u_step_check(traj, tol_e)
        rep.monitors["entropy_u"] = mon
        rep.series["entropy_u"] = np.array([G.integrate(grid, phi_u(u)) for u in traj.u])
    if cfg.enabled("log_entropy") and cfg.include_log_entropies:
        mu, mv, extra = log_entropy_checks(traj)
        rep.monitors[mu.name] = mu
        rep.monitors[mv.name] = mv
        rep.series.update(extra)
        # measured constants of the log-entropy estimates (no asserted bound)
        for name, d in (("u", p.d_u), ("v", p.d_v)):
            lhs = extra[f"sup_abs_log_{name}"] + d * extra[f"grad_log_sum_{name}"]
            rep.measured[f"log_entropy_{name}_constant"] = float(np.max(lhs) - extra[f"sup_abs_log_{name}"][0])
    if cfg.enabled("dual_probe") and cfg.dual_probe is not None:
        probe = dual_probe(traj, cfg.dual_probe.f, cfg.dual_probe.nu_hats)
        rep.probe = probe
        ks = np.arange(0, len(traj))
        mins = np.array([float(np.min(probe.solution[k])) for k in ks])
        mon = MonitorSeries("dual_probe", ks, traj.times, -mins, np.zeros_like(mins), DUAL_POSITIVITY_TOL)
        mon.status = "pass" if probe.positive else "fail"
        mon.note = "value is -min(psi_k); backward solution must stay nonnegative"
        rep.monitors["dual_probe"] = mon
        for nu, ratio in probe.ratios.items():
            rep.measured[f"dual_probe_ratio_nu{nu:g}"] = ratio
    if cfg.enabled("regularity"):
        norms = regularity_norms(traj, cfg.regularity_q)
        rep.regularity = norms
        if regime.gamma_zero:
            finite = all(math.isfinite(v) for v in norms.values())
            ks = np.array([len(traj) - 1])
            mon = MonitorSeries("regularity", ks, traj.times[ks], np.array([0.0 if finite else 1.0]),
                                np.zeros(1), 0.0, "pass" if finite else "fail", "finiteness (gamma = 0 regime)")
            rep.monitors["regularity"] = mon

    cum = MonitorSeries("cumulative_monotone", np.array([len(traj) - 1]), traj.times[-1:],
                        np.array([0.0 if cumulative_ok else 1.0]), np.zeros(1), 0.0,
                        "pass" if cumulative_ok else "fail", "all running sums nondecreasing")
    rep.monitors["cumulative_monotone"] = cum
    return rep
