"""Run configuration: JSON schema with defaults, validation, and factories.

One JSON file describes a full experiment (model, surrogate build, posterior,
sampler, outputs).  Validation is strict: unknown keys are rejected with
their path, every default is written into the effective config, and the
effective config is echoed into the output directory so a run can be
reproduced from its own artifacts.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

import numpy as np

from .bayes import LikelihoodSpec, exp_likelihood, load_reference_csv, make_reference_data, mvn_likelihood
from .errors import ConfigurationError
from .grid import Box
from .mcmc import DramConfig
from .models import (
    ANALYTIC_MODEL_NAMES,
    ExternalModel,
    ExternalProtocol,
    ForwardModel,
    ModelSpec,
    SyntheticLESConfig,
    TRUE_THETA,
    analytic_model,
    multilinear_model,
    synthetic_les_model,
)
from .pipeline import BuildPlan
from .persistence import EvalCache

CACHE_DIR_ENV = "SGBAYES_CACHE_DIR"

# Schema: {section: {key: (type(s), default)}}.  None defaults mean
# "derived later" and stay None unless the user sets them.
_SCHEMA = {
    "model": {
        "backend": (str, "synthetic-les"),
        "name": (str, ""),
        "ndim": (int, 3),
        "n_outputs": (int, 0),
        "domain_lower": (list, None),
        "domain_upper": (list, None),
        "exe": (str, ""),
        "workdir": (str, ""),
        "timeout": ((int, float), None),
    },
    "surrogate": {
        "start_level": (int, 2),
        "max_level": (int, 6),
        "alpha": ((int, float), 1e-3),
        "alpha_mode": (str, "relative"),
        "budget": (int, None),
        "path": (str, "surrogate.sgb"),
    },
    "posterior": {
        "likelihood": (str, "mvn"),
        "sigma": ((int, float, list), 0.1),
        "zeta": ((int, float), 500.0),
        "data_path": (str, None),
        "theta_star": (list, list(TRUE_THETA)),
        "noise_sigma": ((int, float), 0.1),
        "noise_seed": (int, 7021),
    },
    "mcmc": {
        "samples": (int, 60_000),
        "burn_in": (int, 10_000),
        "theta0": (list, None),
        "adapt_start": (int, 1000),
        "adapt_interval": (int, 100),
        "scale_sd": ((int, float), None),
        "cov_reg": ((int, float), 1e-10),
        "dr_stages": (int, 2),
        "dr_scale": ((int, float), 5.0),
        "histogram_bins": (int, 50),
    },
    "output_dir": (str, "runs/out"),
    "cache_dir": (str, None),
    "seed": (int, 20260801),
}


def default_config() -> dict:
    cfg = {}
    for section, spec in _SCHEMA.items():
        if isinstance(spec, dict):
            cfg[section] = {key: copy.deepcopy(default) for key, (_, default) in spec.items()}
        else:
            cfg[section] = copy.deepcopy(spec[1])
    return cfg


def _check_type(path, value, expected):
    if value is None:
        return
    if isinstance(expected, tuple):
        ok = isinstance(value, expected)
    else:
        ok = isinstance(value, expected)
    # bool is an int subclass but never a valid numeric config value here
    if isinstance(value, bool):
        ok = False
    if not ok:
        raise ConfigurationError(
            f"config key {path}: expected {expected}, got {type(value).__name__}"
        )


def validate_config(user: dict) -> dict:
    """Merge a user dict over the defaults; reject unknown keys and bad types."""
    if not isinstance(user, dict):
        raise ConfigurationError("config root must be a JSON object")
    cfg = default_config()
    for section, content in user.items():
        if section not in _SCHEMA:
            raise ConfigurationError(f"unknown config key {section!r}")
        spec = _SCHEMA[section]
        if isinstance(spec, dict):
            if not isinstance(content, dict):
                raise ConfigurationError(f"config section {section!r} must be an object")
            for key, value in content.items():
                if key not in spec:
                    raise ConfigurationError(f"unknown config key {section}.{key!r}")
                _check_type(f"{section}.{key}", value, spec[key][0])
                cfg[section][key] = value
        else:
            _check_type(section, content, spec[0])
            cfg[section] = content
    return cfg


def _parse_override(token: str):
    if "=" not in token:
        raise ConfigurationError(f"--set expects section.key=value, got {token!r}")
    path, raw = token.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings are convenient: --set model.backend=synthetic-les
    return path.strip(), value


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``--set section.key=value`` tokens onto a raw config dict."""
    cfg = copy.deepcopy(cfg)
    for token in overrides or ():
        path, value = _parse_override(token)
        parts = path.split(".")
        if len(parts) == 1:
            cfg[parts[0]] = value
        elif len(parts) == 2:
            cfg.setdefault(parts[0], {})
            if not isinstance(cfg[parts[0]], dict):
                raise ConfigurationError(f"config key {parts[0]!r} is not a section")
            cfg[parts[0]][parts[1]] = value
        else:
            raise ConfigurationError(f"--set path too deep: {path!r}")
    return cfg


def load_config(path=None, overrides=None, seed=None) -> dict:
    """Load, override, validate; returns the effective config dict."""
    raw = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    raw = apply_overrides(raw, overrides)
    cfg = validate_config(raw)
    if seed is not None:
        cfg["seed"] = int(seed)
    return cfg


def echo_config(cfg: dict, out_dir) -> str:
    """Write the effective config into the output directory; returns the path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "config.echo.json"
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    return str(path)


# ---------------------------------------------------------------------------
# Factories.
# ---------------------------------------------------------------------------

def _domain_from(cfg_model: dict, ndim: int) -> Box | None:
    lower, upper = cfg_model["domain_lower"], cfg_model["domain_upper"]
    if lower is None and upper is None:
        return None
    if lower is None or upper is None:
        raise ConfigurationError("domain_lower and domain_upper must be given together")
    if len(lower) != ndim or len(upper) != ndim:
        raise ConfigurationError(f"domain bounds must have length {ndim}")
    return Box(tuple(lower), tuple(upper))


def build_model(cfg: dict) -> ForwardModel:
    m = cfg["model"]
    backend = m["backend"]
    if backend == "synthetic-les":
        return synthetic_les_model(SyntheticLESConfig())
    if backend == "analytic":
        name = m["name"] or "gaussian-peak"
        ndim = m["ndim"]
        domain = _domain_from(m, ndim)
        if name == "multilinear":
            return multilinear_model(ndim, domain=domain)
        if name not in ANALYTIC_MODEL_NAMES:
            raise ConfigurationError(
                f"unknown analytic model {name!r}; choose from "
                f"{ANALYTIC_MODEL_NAMES + ('multilinear',)}"
            )
        return analytic_model(name, ndim, domain=domain)
    if backend == "external":
        if not m["exe"]:
            raise ConfigurationError("external backend requires model.exe")
        if m["n_outputs"] < 1:
            raise ConfigurationError("external backend requires model.n_outputs")
        ndim = m["ndim"]
        domain = _domain_from(m, ndim)
        if domain is None:
            raise ConfigurationError("external backend requires an explicit domain")
        spec = ModelSpec(
            name=m["name"] or "external",
            n_inputs=ndim,
            n_outputs=m["n_outputs"],
            domain=domain,
            backend="external",
        )
        workdir = m["workdir"] or os.path.join(cfg["output_dir"], "external_runs")
        return ExternalModel(spec, ExternalProtocol(m["exe"], workdir, m["timeout"]))
    raise ConfigurationError(f"unknown model backend {backend!r}")


def build_plan(cfg: dict, model: ForwardModel) -> BuildPlan:
    s = cfg["surrogate"]
    return BuildPlan(
        start_level=s["start_level"],
        max_level=s["max_level"],
        alpha=float(s["alpha"]),
        alpha_mode=s["alpha_mode"],
        budget=s["budget"],
        model_id=model.spec.name,
    )


def build_cache(cfg: dict, model_id: str) -> EvalCache | None:
    root = os.environ.get(CACHE_DIR_ENV) or cfg["cache_dir"]
    if not root:
        return None
    return EvalCache(root, model_id)


def reference_data(cfg: dict, model: ForwardModel | None) -> np.ndarray:
    """Reference data from file when configured, else generated at theta*."""
    p = cfg["posterior"]
    if p["data_path"]:
        return load_reference_csv(p["data_path"])
    if model is None:
        raise ConfigurationError(
            "posterior.data_path is required when no forward model is available"
        )
    return make_reference_data(
        model,
        np.asarray(p["theta_star"], dtype=float),
        noise_sigma=float(p["noise_sigma"]),
        seed=p["noise_seed"],
    )


def build_likelihood(cfg: dict, data: np.ndarray) -> LikelihoodSpec:
    p = cfg["posterior"]
    kind = p["likelihood"]
    if kind == "mvn":
        sigma = p["sigma"]
        sigma = np.asarray(sigma, dtype=float) if isinstance(sigma, list) else float(sigma)
        return mvn_likelihood(data, sigma=sigma)
    if kind == "exp":
        return exp_likelihood(data, zeta=float(p["zeta"]))
    raise ConfigurationError(f"unknown likelihood kind {kind!r}")


def build_dram(cfg: dict, box: Box, seed_offset: int = 0) -> DramConfig:
    m = cfg["mcmc"]
    theta0 = m["theta0"]
    theta0 = box.midpoint if theta0 is None else np.asarray(theta0, dtype=float)
    return DramConfig(
        theta0=theta0,
        n_samples=m["samples"],
        burn_in=m["burn_in"],
        bounds=box,
        adapt_start=m["adapt_start"],
        adapt_interval=m["adapt_interval"],
        scale_sd=None if m["scale_sd"] is None else float(m["scale_sd"]),
        cov_reg=float(m["cov_reg"]),
        dr_stages=m["dr_stages"],
        dr_scale=float(m["dr_scale"]),
        seed=cfg["seed"] + seed_offset,
    )
