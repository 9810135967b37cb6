"""INI-style experiment configuration.

Example::

    [system]
    K = 10
    d_list = 1, 2, 3
    lambda_list = 0.02:0.98:0.02

    [service]
    kind = iid_finite
    pmf = 10:0.9, 100:0.1

    [simulation]
    slots = 1000000
    seed = 1

    [bounds]
    lambda_m = off

``lambda_list`` and ``d_list`` accept comma lists or an inclusive
``start:stop:step`` range. Joint pmfs list space-separated vectors,
``pmf = 10 10 100:0.5, 100 10 10:0.5``. A moment profile is either an
explicit ``profile = g1, g2, ...`` or ``profile_scale`` with
``profile_exponent`` (``g[j] = scale / j**exponent``, ``j = 1..K``).
"""
from __future__ import annotations

import configparser
import io
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path

from .distributions import KINDS, ServiceSpec, SpecError
from .simulator import DEFAULT_SLOPE_TOL, DEFAULT_STRIDE, DEFAULT_WINDOW

ENV_VAR = "RDSTAB_CONFIG"

SCHEMA = {
    "system": {"K", "d", "d_list", "lambda", "lambda_list"},
    "service": {"kind", "pmf", "profile", "profile_scale", "profile_exponent"},
    "simulation": {"slots", "burn_in", "seed", "stride", "parallelism", "window_fraction", "slope_tol"},
    "bounds": {"lambda_m", "method", "mc_samples", "grid_cell_cap"},
    "validate": {"slots", "lambda_factor", "arrivals", "drift_samples", "drift_states"},
}


class ConfigError(ValueError):
    pass


@dataclass
class ValidateSettings:
    slots: int = 20_000
    lambda_factor: float = 0.6
    arrivals: int = 20_000
    drift_samples: int = 400_000
    drift_states: int = 20


@dataclass
class Config:
    K: int
    ds: list[int]
    lambdas: list[float]
    kind: str
    pmf: list = field(default_factory=list)
    profile: list[float] = field(default_factory=list)
    profile_scale: float | None = None
    profile_exponent: float | None = None
    slots: int = 1_000_000
    burn_in: int | None = None
    seed: int = 1
    stride: int = DEFAULT_STRIDE
    parallelism: int = 1
    window_fraction: float = DEFAULT_WINDOW
    slope_tol: float = DEFAULT_SLOPE_TOL
    lambda_m: bool = False
    method: str = "exact"
    mc_samples: int = 20_000
    grid_cell_cap: int = 2_000_000
    validate: ValidateSettings = field(default_factory=ValidateSettings)

    def service_spec(self) -> ServiceSpec:
        if self.kind == "iid_finite":
            return ServiceSpec.iid(self.pmf)
        if self.kind == "identical_replicas":
            return ServiceSpec.identical(self.pmf)
        if self.kind == "joint_finite":
            return ServiceSpec.joint(self.pmf)
        if self.profile:
            return ServiceSpec.moment_profile(self.profile)
        return ServiceSpec.power_profile(self.profile_scale, self.profile_exponent, self.K)


def _ints(text: str) -> list[int]:
    if ":" in text:
        a, b, *step = (int(x) for x in text.split(":"))
        return list(range(a, b + 1, step[0] if step else 1))
    return [int(x) for x in text.split(",") if x.strip()]


def _floats(text: str) -> list[float]:
    if ":" in text:
        a, b, s = (Fraction(x.strip()) for x in text.split(":"))
        n = int((b - a) / s)
        return [float(a + k * s) for k in range(n + 1)]
    return [float(Fraction(x.strip())) for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _pmf(text: str, joint: bool) -> list:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        value, sep, prob = item.rpartition(":")
        if not sep:
            raise ConfigError(f"pmf entry {item!r} must be value:prob")
        p = float(Fraction(prob.strip()))
        if joint:
            out.append((tuple(int(v) for v in value.split()), p))
        else:
            out.append((int(value), p))
    return out


def parse(text: str) -> Config:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        unknown = set(cp[section]) - SCHEMA[section]
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(unknown))}")
    for required in ("system", "service"):
        if not cp.has_section(required):
            raise ConfigError(f"missing section [{required}]")
    try:
        return _build(cp)
    except (KeyError, ValueError, ZeroDivisionError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config: {exc}") from exc


def _build(cp: configparser.ConfigParser) -> Config:
    sysd = cp["system"]
    K = int(sysd["K"])
    if "d" in sysd and "d_list" in sysd:
        raise ConfigError("give either d or d_list")
    ds = _ints(sysd["d_list"]) if "d_list" in sysd else [int(sysd["d"])] if "d" in sysd else []
    if "lambda" in sysd and "lambda_list" in sysd:
        raise ConfigError("give either lambda or lambda_list")
    if "lambda_list" in sysd:
        lambdas = _floats(sysd["lambda_list"])
    elif "lambda" in sysd:
        lambdas = [float(Fraction(sysd["lambda"]))]
    else:
        lambdas = []
    svc = cp["service"]
    kind = svc.get("kind", "").strip()
    if kind not in KINDS:
        raise ConfigError(f"service kind must be one of {', '.join(KINDS)}")
    cfg = Config(K=K, ds=ds, lambdas=lambdas, kind=kind)
    if kind == "moment_profile":
        if "profile" in svc:
            cfg.profile = _floats(svc["profile"])
        elif "profile_scale" in svc and "profile_exponent" in svc:
            cfg.profile_scale = float(svc["profile_scale"])
            cfg.profile_exponent = float(svc["profile_exponent"])
        else:
            raise ConfigError("moment_profile needs profile or profile_scale + profile_exponent")
    else:
        if "pmf" not in svc:
            raise ConfigError(f"{kind} needs pmf")
        cfg.pmf = _pmf(svc["pmf"], joint=kind == "joint_finite")
    if cp.has_section("simulation"):
        sim = cp["simulation"]
        for key in ("slots", "seed", "stride", "parallelism"):
            if key in sim:
                setattr(cfg, key, int(sim[key]))
        if "burn_in" in sim:
            cfg.burn_in = int(sim["burn_in"])
        for key in ("window_fraction", "slope_tol"):
            if key in sim:
                setattr(cfg, key, float(sim[key]))
    if cp.has_section("bounds"):
        bd = cp["bounds"]
        if "lambda_m" in bd:
            cfg.lambda_m = _bool(bd["lambda_m"])
        if "method" in bd:
            cfg.method = bd["method"].strip()
        for key in ("mc_samples", "grid_cell_cap"):
            if key in bd:
                setattr(cfg, key, int(bd[key]))
    if cp.has_section("validate"):
        v = cp["validate"]
        vs = ValidateSettings()
        for key in ("slots", "arrivals", "drift_samples", "drift_states"):
            if key in v:
                setattr(vs, key, int(v[key]))
        if "lambda_factor" in v:
            vs.lambda_factor = float(v["lambda_factor"])
        cfg.validate = vs
    check(cfg)
    return cfg


def check(cfg: Config) -> None:
    """Reject configs that violate a module precondition."""
    if cfg.K < 1:
        raise ConfigError("K must be >= 1")
    for d in cfg.ds:
        if not 1 <= d <= cfg.K:
            raise ConfigError(f"d={d} outside 1..K")
    for lam in cfg.lambdas:
        if not 0 < lam < 1:
            raise ConfigError(f"lambda={lam} outside (0, 1)")
    if cfg.slots < 1 or cfg.stride < 1 or cfg.parallelism < 1:
        raise ConfigError("slots, stride and parallelism must be positive")
    if cfg.burn_in is not None and not 0 <= cfg.burn_in < cfg.slots:
        raise ConfigError("need 0 <= burn_in < slots")
    if not 0 < cfg.window_fraction <= 1 or cfg.slope_tol <= 0:
        raise ConfigError("window_fraction must be in (0, 1] and slope_tol positive")
    if cfg.method not in ("exact", "mc"):
        raise ConfigError("bounds.method must be exact or mc")
    try:
        spec = cfg.service_spec()
        spec.check_k(cfg.K)
        if spec.kind == "moment_profile" and len(spec.profile) < max(cfg.ds, default=1):
            raise ConfigError("moment profile is shorter than the largest d")
    except SpecError as exc:
        raise ConfigError(f"[service]: {exc}") from exc


def _fmt_list(xs) -> str:
    return ", ".join(repr(x) for x in xs)


def dump(cfg: Config) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["system"] = {"K": str(cfg.K)}
    if cfg.ds:
        cp["system"]["d_list"] = _fmt_list(cfg.ds)
    if cfg.lambdas:
        cp["system"]["lambda_list"] = _fmt_list(cfg.lambdas)
    svc = {"kind": cfg.kind}
    if cfg.kind == "moment_profile":
        if cfg.profile:
            svc["profile"] = _fmt_list(cfg.profile)
        else:
            svc["profile_scale"] = repr(cfg.profile_scale)
            svc["profile_exponent"] = repr(cfg.profile_exponent)
    elif cfg.kind == "joint_finite":
        svc["pmf"] = ", ".join(f"{' '.join(map(str, v))}:{p!r}" for v, p in cfg.pmf)
    else:
        svc["pmf"] = ", ".join(f"{v}:{p!r}" for v, p in cfg.pmf)
    cp["service"] = svc
    sim = {"slots": str(cfg.slots), "seed": str(cfg.seed), "stride": str(cfg.stride),
           "parallelism": str(cfg.parallelism), "window_fraction": repr(cfg.window_fraction),
           "slope_tol": repr(cfg.slope_tol)}
    if cfg.burn_in is not None:
        sim["burn_in"] = str(cfg.burn_in)
    cp["simulation"] = sim
    cp["bounds"] = {"lambda_m": "on" if cfg.lambda_m else "off", "method": cfg.method,
                    "mc_samples": str(cfg.mc_samples), "grid_cell_cap": str(cfg.grid_cell_cap)}
    v = cfg.validate
    cp["validate"] = {"slots": str(v.slots), "lambda_factor": repr(v.lambda_factor),
                      "arrivals": str(v.arrivals), "drift_samples": str(v.drift_samples),
                      "drift_states": str(v.drift_states)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


DEFAULT_TEXT = """\
[system]
K = 5
d_list = 1:5
lambda_list = 0.05:0.5:0.05

[service]
kind = iid_finite
pmf = 10:0.9, 100:0.1

[simulation]
slots = 200000
seed = 1
"""


def load(path: str | os.PathLike | None = None) -> Config:
    """Load ``path``, else ``$RDSTAB_CONFIG``, else the built-in default.

    An unreadable file raises ``OSError``, not ``ConfigError``.
    """
    if path is None:
        path = os.environ.get(ENV_VAR)
    if path is None:
        return parse(DEFAULT_TEXT)
    return parse(Path(path).read_text())


def with_seed(cfg: Config, seed: int | None) -> Config:
    return cfg if seed is None else replace(cfg, seed=seed)
