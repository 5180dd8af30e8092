"""Key-value run configuration files.

One ``key = value`` (or ``key: value``) pair per line, ``#`` starts a
comment.  A run config combines the 18 parameter keys, grid keys
(``dim n length``), scheme keys (``T N newton_tol``), the initial data
(``u_init``, ``v_init``) and optional diagnostics keys.

Initial-data presets:

``constant:<val>``
    spatially constant field.
``cosine_bump:<amp>``
    ``1 + amp cos(pi x / L)`` (a product of cosines in 2D).
``random:<seed>,<lo>,<hi>``
    independent uniform cell values in ``[lo, hi]``.
``file:<path>``
    a Field CSV; relative paths resolve against the config's directory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .diagnostics import MONITORS, DiagnosticsConfig, DualProbeSpec
from .grid import Grid, read_field_csv
from .model import PARAM_KEYS, ParamSet, _parse_bool
from .stepper import SchemeConfig, State, initial_lift


class ConfigError(ValueError):
    pass


def parse_keyvalue(text: str) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        sep = "=" if "=" in line else ":" if ":" in line else None
        if sep is None:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split(sep, 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_keyvalue(path: str | Path) -> dict[str, str]:
    return parse_keyvalue(Path(path).read_text())


def _floats(value: str) -> tuple[float, ...]:
    return tuple(float(s) for s in value.split(",") if s.strip())


def initial_field(spec: str, grid: Grid, base: Path | None = None, seed: int | None = None) -> np.ndarray:
    """Evaluate an initial-data preset on ``grid``.

    ``seed`` replaces the seed of a ``random:`` preset when given.
    """
    kind, _, arg = spec.partition(":")
    kind = kind.strip()
    if kind == "constant":
        return np.full(grid.shape, float(arg))
    if kind == "cosine_bump":
        amp = float(arg)
        out = np.ones(grid.shape)
        for x, L in zip(grid.coords(), grid.length):
            out = out * np.cos(math.pi * x / L)
        return 1.0 + amp * out
    if kind == "random":
        parts = [s.strip() for s in arg.split(",")]
        if len(parts) != 3:
            raise ConfigError("random preset needs '<seed>,<lo>,<hi>'")
        lo, hi = float(parts[1]), float(parts[2])
        rng = np.random.default_rng(int(parts[0]) if seed is None else seed)
        return rng.uniform(lo, hi, size=grid.shape)
    if kind == "file":
        path = Path(arg.strip())
        if base is not None and not path.is_absolute():
            path = base / path
        return read_field_csv(path, grid).values
    raise ConfigError(f"unknown initial-data preset {spec!r}")


@dataclass
class RunConfig:
    params: ParamSet
    grid: Grid
    scheme: SchemeConfig
    u_init: str = "constant:1"
    v_init: str = "constant:1"
    lift: bool = False
    diagnostics: DiagnosticsConfig = field(default_factory=DiagnosticsConfig)
    base: Path | None = None
    raw: dict[str, str] = field(default_factory=dict, repr=False)

    def initial_state(self, seed: int | None = None) -> State:
        u = initial_field(self.u_init, self.grid, self.base, seed)
        v = initial_field(self.v_init, self.grid, self.base, None if seed is None else seed + 1)
        if self.lift:
            u, v = initial_lift(u, v, self.scheme.N)
        return State(self.grid, u, v, 0.0)

    def with_(self, **changes) -> "RunConfig":
        return replace(self, **changes)


_GRID_KEYS = ("dim", "n", "length")
_SCHEME_KEYS = ("T", "N", "newton_tol", "newton_max_iter")
_DIAG_KEYS = (
    "entropy_exponents", "include_log_entropies", "dual_probe", "dual_probe_nu",
    "regularity_q", "monitors",
)
_OTHER_KEYS = ("strict_validation", "u_init", "v_init", "lift")
KNOWN_KEYS = frozenset(PARAM_KEYS + _GRID_KEYS + _SCHEME_KEYS + _DIAG_KEYS + _OTHER_KEYS)


def parse_monitors(value: str) -> tuple[str, ...]:
    names = tuple(s.strip() for s in value.split(",") if s.strip())
    unknown = [n for n in names if n not in MONITORS]
    if unknown:
        raise ConfigError(f"unknown monitors: {', '.join(unknown)}")
    return names


def diagnostics_from_mapping(kv: dict[str, str]) -> DiagnosticsConfig:
    cfg = DiagnosticsConfig()
    if "entropy_exponents" in kv:
        cfg.entropy_exponents = _floats(kv["entropy_exponents"])
    if "include_log_entropies" in kv:
        cfg.include_log_entropies = _parse_bool(kv["include_log_entropies"])
    probe = kv.get("dual_probe", "none").strip()
    if probe and probe != "none":
        nus = _floats(kv["dual_probe_nu"]) if "dual_probe_nu" in kv else DualProbeSpec().nu_hats
        cfg.dual_probe = DualProbeSpec(probe, nus)
    if "regularity_q" in kv:
        cfg.regularity_q = float(kv["regularity_q"])
    if "monitors" in kv:
        cfg.monitors = parse_monitors(kv["monitors"])
    return cfg


def run_config_from_mapping(kv: dict[str, str], base: Path | None = None) -> RunConfig:
    unknown = sorted(set(kv) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(unknown)}")
    try:
        params = ParamSet.from_mapping(kv)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    for key in ("dim", "n", "T", "N"):
        if key not in kv:
            raise ConfigError(f"missing key {key!r}")
    dim = int(kv["dim"])
    n = tuple(int(x) for x in kv["n"].split(","))
    length = _floats(kv.get("length", "1"))
    grid = Grid(dim, n[0] if len(n) == 1 else n, length[0] if len(length) == 1 else length)
    scheme = SchemeConfig(
        T=float(kv["T"]),
        N=int(kv["N"]),
        newton_tol=float(kv.get("newton_tol", 1e-10)),
        newton_max_iter=int(kv.get("newton_max_iter", 50)),
    )
    return RunConfig(
        params=params,
        grid=grid,
        scheme=scheme,
        u_init=kv.get("u_init", "constant:1"),
        v_init=kv.get("v_init", "constant:1"),
        lift=_parse_bool(kv.get("lift", False)),
        diagnostics=diagnostics_from_mapping(kv),
        base=base,
        raw=dict(kv),
    )


def read_run_config(path: str | Path) -> RunConfig:
    path = Path(path)
    return run_config_from_mapping(read_keyvalue(path), base=path.parent)


def format_run_config(kv: dict[str, str]) -> str:
    return "".join(f"{k} = {v}\n" for k, v in kv.items())
