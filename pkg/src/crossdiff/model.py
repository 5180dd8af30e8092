"""Parameter set, admissibility rules and pointwise coefficient laws.

The system has the triangular power-law form

    u_t - Lap[(d_u + d_alpha u^alpha + d_beta v^beta) u] = u (r_u - r_a u^a - r_b v^b)
    v_t - Lap[(d_v + d_gamma v^gamma) v]                 = v (r_v - r_c v^c - r_d u^d)

with homogeneous Neumann boundary conditions.  Everything in this module is a
pure function of its arguments and works on scalars or numpy arrays.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PARAM_KEYS = (
    "d_u", "d_v", "d_alpha", "d_beta", "d_gamma",
    "r_u", "r_v", "r_a", "r_b", "r_c", "r_d",
    "a", "b", "c", "d",
    "alpha", "beta", "gamma",
)
# The fifteen entries that must be strictly positive under strict validation.
_POSITIVE_KEYS = PARAM_KEYS[:15]
_DIFFUSION_KEYS = ("d_u", "d_v")
_RELAXABLE_KEYS = ("d_alpha", "d_beta", "d_gamma", "r_u", "r_v", "r_a", "r_b", "r_c", "r_d")

BISECTION_WIDTH = 1e-14
NEWTON_POLISH_STEPS = 3
_MAX_BISECTIONS = 400


class Inadmissible(ValueError):
    """Raised when a parameter set violates the admissibility conditions."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


class NegativeInput(ValueError):
    pass


class NoConvergence(RuntimeError):
    def __init__(self, iterations: int, message: str = ""):
        super().__init__(message or f"root finding did not converge after {iterations} iterations")
        self.iterations = iterations


@dataclass(frozen=True)
class ParamSet:
    """The 18 coefficients of the system.

    ``strict_validation=False`` allows the self/cross diffusion and reaction
    coefficients to vanish, which is used for decoupled oracle runs (pure
    diffusion, heat-mode checks).  ``d_u`` and ``d_v`` stay strictly positive
    in both modes.
    """

    d_u: float = 1.0
    d_v: float = 1.0
    d_alpha: float = 1.0
    d_beta: float = 1.0
    d_gamma: float = 1.0
    r_u: float = 2.0
    r_v: float = 2.0
    r_a: float = 1.0
    r_b: float = 1.0
    r_c: float = 1.0
    r_d: float = 1.0
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: float = 1.0
    alpha: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    strict_validation: bool = True

    def replace(self, **changes) -> "ParamSet":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return {k: float(getattr(self, k)) for k in PARAM_KEYS}

    @classmethod
    def from_mapping(cls, values, strict_validation: bool | None = None) -> "ParamSet":
        missing = [k for k in PARAM_KEYS if k not in values]
        if missing:
            raise KeyError(f"missing parameter keys: {', '.join(missing)}")
        kwargs = {k: float(values[k]) for k in PARAM_KEYS}
        if strict_validation is None:
            strict_validation = _parse_bool(values.get("strict_validation", True))
        return cls(**kwargs, strict_validation=strict_validation)


@dataclass(frozen=True)
class RegimeTag:
    """Regime flags; several may be set at once."""

    strict: bool
    alpha_zero_boundary: bool
    gamma_zero: bool

    @property
    def names(self) -> list[str]:
        out = []
        if self.strict:
            out.append("Strict")
        if self.alpha_zero_boundary:
            out.append("AlphaZeroBoundary")
        if self.gamma_zero:
            out.append("GammaZero")
        return out


def _parse_bool(value) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ("1", "true", "yes", "on")
    return bool(value)


def validate_params(p: ParamSet) -> RegimeTag:
    """Check admissibility and classify the parameter regime.

    Raises `Inadmissible` naming the first violated inequality.
    """
    for key in PARAM_KEYS:
        value = getattr(p, key)
        if not np.isfinite(value):
            raise Inadmissible(f"{key} is not finite")
    if p.strict_validation:
        for key in _POSITIVE_KEYS:
            if getattr(p, key) <= 0:
                raise Inadmissible(f"{key}<=0")
    else:
        for key in _DIFFUSION_KEYS:
            if getattr(p, key) <= 0:
                raise Inadmissible(f"{key}<=0")
        for key in _RELAXABLE_KEYS:
            if getattr(p, key) < 0:
                raise Inadmissible(f"{key}<0")
        for key in ("a", "b", "c", "d"):
            if getattr(p, key) <= 0:
                raise Inadmissible(f"{key}<=0")
    if p.alpha < 0:
        raise Inadmissible("alpha<0")
    if p.beta <= 0:
        raise Inadmissible("beta<=0")
    if p.gamma < 0:
        raise Inadmissible("gamma<0")

    if p.alpha > 0:
        if not p.d < 2 + p.alpha:
            raise Inadmissible("d>=2+alpha")
        if not p.a < 1 + p.alpha:
            raise Inadmissible("a>=1+alpha")
    else:
        if p.d > 2:
            raise Inadmissible("d>2")
        if p.a > 1:
            raise Inadmissible("a>1")

    strict = p.d < 2 + p.alpha and p.a < 1 + p.alpha
    return RegimeTag(
        strict=strict,
        alpha_zero_boundary=p.alpha == 0,
        gamma_zero=p.gamma == 0,
    )


def power(x, e: float):
    """``x**e`` for ``x >= 0`` with ``0**e = 0`` for ``e > 0`` and ``x**0 = 1``."""
    x = np.asarray(x, dtype=float)
    if e == 0:
        return np.ones_like(x)
    out = np.power(np.maximum(x, 1e-300), e)
    return np.where(x == 0, 0.0, out)


def _check_nonnegative(*arrays) -> None:
    for arr in arrays:
        if np.any(np.asarray(arr) < 0):
            raise NegativeInput("densities must be nonnegative")


def diffusion_u(p: ParamSet, u, v):
    _check_nonnegative(u, v)
    return p.d_u + p.d_alpha * power(u, p.alpha) + p.d_beta * power(v, p.beta)


def diffusion_v(p: ParamSet, v):
    _check_nonnegative(v)
    return p.d_v + p.d_gamma * power(v, p.gamma)


def reaction_u(p: ParamSet, u, v):
    _check_nonnegative(u, v)
    u = np.asarray(u, dtype=float)
    return u * (p.r_u - p.r_a * power(u, p.a) - p.r_b * power(v, p.b))


def reaction_v(p: ParamSet, u, v):
    _check_nonnegative(u, v)
    v = np.asarray(v, dtype=float)
    return v * (p.r_v - p.r_c * power(v, p.c) - p.r_d * power(u, p.d))


def map_A(p: ParamSet, u, v):
    """Return ``(a1(u, v) u, a2(v) v)``."""
    return diffusion_u(p, u, v) * np.asarray(u, dtype=float), diffusion_v(p, v) * np.asarray(v, dtype=float)


def _solve_increasing(g, dg, target, hi):
    """Solve ``g(z) = target`` on ``[0, hi]`` for increasing ``g``, elementwise.

    Bisection until the bracket width drops below ``BISECTION_WIDTH``
    (relative to the bracket scale), then a few safeguarded Newton steps.
    """
    lo = np.zeros_like(target)
    hi = np.array(hi, dtype=float)
    if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(target))):
        raise NoConvergence(0, "cannot bracket root: non-finite input")
    g_hi = g(hi)
    if np.any(g_hi < target * (1 - 1e-12) - 1e-300):
        raise NoConvergence(0, "cannot bracket root: upper bound too small")
    for it in range(_MAX_BISECTIONS):
        width = hi - lo
        if np.all(width <= BISECTION_WIDTH * np.maximum(1.0, hi)):
            break
        mid = 0.5 * (lo + hi)
        below = g(mid) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    else:
        raise NoConvergence(_MAX_BISECTIONS)
    z = 0.5 * (lo + hi)
    for _ in range(NEWTON_POLISH_STEPS):
        slope = dg(z)
        step = np.where(slope > 0, (g(z) - target) / np.where(slope > 0, slope, 1.0), 0.0)
        candidate = z - step
        # keep the polish inside the final bracket (it is already tight)
        z = np.where((candidate >= lo) & (candidate <= hi), candidate, z)
    return np.where(target == 0, 0.0, z)


def invert_A(p: ParamSet, w1, w2):
    """Inverse of `map_A` on the nonnegative quadrant.

    Solves ``w2 = a2(v) v`` for ``v`` first, then ``w1 = a1(u, v) u`` for
    ``u`` with ``v`` fixed.  Both scalar maps are strictly increasing.
    """
    scalar = np.ndim(w1) == 0 and np.ndim(w2) == 0
    w1 = np.atleast_1d(np.asarray(w1, dtype=float))
    w2 = np.atleast_1d(np.asarray(w2, dtype=float))
    w1, w2 = np.broadcast_arrays(w1, w2)
    _check_nonnegative(w1, w2)

    def g2(z):
        return (p.d_v + p.d_gamma * power(z, p.gamma)) * z

    def dg2(z):
        return p.d_v + p.d_gamma * (1 + p.gamma) * power(z, p.gamma)

    v = _solve_increasing(g2, dg2, w2, w2 / p.d_v)

    base = p.d_u + p.d_beta * power(v, p.beta)

    def g1(z):
        return (base + p.d_alpha * power(z, p.alpha)) * z

    def dg1(z):
        return base + p.d_alpha * (1 + p.alpha) * power(z, p.alpha)

    u = _solve_increasing(g1, dg1, w1, w1 / base)
    if scalar:
        return float(u[0]), float(v[0])
    return u, v


def sample_params(rng: np.random.Generator, alpha_zero: bool | None = None) -> ParamSet:
    """Draw a random strictly admissible parameter set.

    Coefficients lie in moderate ranges so that explicit step-size limits
    stay reasonable.  ``alpha_zero`` forces (True) or forbids (False) the
    ``alpha = 0`` regime; ``None`` picks either with equal probability.
    """
    if alpha_zero is None:
        alpha_zero = bool(rng.random() < 0.5)
    alpha = 0.0 if alpha_zero else float(rng.uniform(0.2, 2.0))
    a_max = 1.0 if alpha_zero else 1.0 + alpha
    d_max = 2.0 if alpha_zero else 2.0 + alpha
    return ParamSet(
        d_u=rng.uniform(0.05, 1.0),
        d_v=rng.uniform(0.05, 1.0),
        d_alpha=rng.uniform(0.05, 1.0),
        d_beta=rng.uniform(0.05, 3.0),
        d_gamma=rng.uniform(0.05, 1.0),
        r_u=rng.uniform(0.2, 3.0),
        r_v=rng.uniform(0.2, 3.0),
        r_a=rng.uniform(0.2, 2.0),
        r_b=rng.uniform(0.2, 2.0),
        r_c=rng.uniform(0.2, 2.0),
        r_d=rng.uniform(0.2, 2.0),
        a=rng.uniform(0.2, 0.95 * a_max),
        b=rng.uniform(0.3, 2.0),
        c=rng.uniform(0.3, 2.0),
        d=rng.uniform(0.2, 0.95 * d_max),
        alpha=alpha,
        beta=rng.uniform(0.3, 2.0),
        gamma=0.0 if rng.random() < 0.25 else float(rng.uniform(0.2, 2.0)),
    )


def read_params(path: str | Path, strict_validation: bool | None = None) -> ParamSet:
    from .config import read_keyvalue

    return ParamSet.from_mapping(read_keyvalue(path), strict_validation=strict_validation)


def write_params(p: ParamSet, path: str | Path) -> None:
    lines = [f"{k} = {getattr(p, k)!r}" for k in PARAM_KEYS]
    lines.append(f"strict_validation = {str(p.strict_validation).lower()}")
    Path(path).write_text("\n".join(lines) + "\n")
