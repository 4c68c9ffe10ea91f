"""Experiment configuration: one TOML file, explicit seed, no implicit entropy.

Schema (keys with defaults may be omitted):

    [source]
    k = 3
    beta = [2.0, 3.0, 1.0]
    sigma2 = 16.0
    [source.y_dist]
    kind = "uniform"            # "uniform" | "gaussian"
    half_width = 1.0            # uniform only
    # variance = 1.0            # gaussian only

    [channel]                   # either a distortion or the pair
    distortion = 8.0
    # alpha = 0.5
    # sigma_phi2 = 16.0

    [experiment]
    kind = "asymptotic-sweep"   # asymptotic-sweep | tradeoff | rate-loss-region | property-suite
    seed = 20250810             # required, uint64

    [grids]
    n = [200, 500, 1000, 5000]
    epsilon = [0.01, 0.1]
    loss = [16.5, 17.0, 17.5]
    distortion = [2.0, 4.0, 8.0]

    [samples]
    replicates = 10000          # trainings per n in the sweep
    mc_pairs = 200000           # Monte Carlo pairs for distortion / loss checks
    info_loss = 200000          # information-loss samples per n
    gaussian_cache = 1000000    # cached Gaussian 3-vectors
    trained_n = 10000           # training length for the trade-off's fitted column

    [flags]
    v3_coupling = "per-sample"  # "per-sample" | "conditional"
    directions = 64             # boundary sweep directions

    [fault_injection]
    encoder_sigma_phi2_scale = 1.0   # property suite negative control
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError, InvalidInputError
from .source_model import GaussianSideInfo, PolynomialSource, UniformSymmetric
from .test_channel import TestChannelParams, params_from_distortion, params_from_noise

__all__ = ["ExperimentConfig", "load_config", "EXPERIMENT_KINDS"]

EXPERIMENT_KINDS = ("asymptotic-sweep", "tradeoff", "rate-loss-region", "property-suite")


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    kind: str
    source: PolynomialSource
    channel: TestChannelParams
    seed: int
    n_grid: tuple
    epsilon_grid: tuple
    loss_grid: tuple
    distortion_grid: tuple
    replicates: int
    mc_pairs: int
    info_loss_samples: int
    cache_size: int
    trained_n: int
    v3_mode: str
    directions: int
    encoder_sigma_phi2_scale: float
    config_sha256: str


def load_config(path, *, seed_override: Optional[int] = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment configuration."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        doc = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc

    problems: list[str] = []
    source = _parse_source(doc, problems)
    channel = _parse_channel(doc, source, problems)
    kind = _get(doc, "experiment", "kind", str, problems, required=True)
    if kind is not None and kind not in EXPERIMENT_KINDS:
        problems.append(f"experiment.kind: must be one of {EXPERIMENT_KINDS}")
    seed = _get(doc, "experiment", "seed", int, problems,
                required=seed_override is None)
    if seed_override is not None:
        seed = seed_override
    if seed is not None and not 0 <= seed < 2**64:
        problems.append("experiment.seed: must fit in uint64")

    grids = doc.get("grids", {})
    n_grid = _num_list(grids, "grids.n", int, problems, default=(200, 500, 1000, 5000))
    epsilon_grid = _num_list(grids.get("epsilon"), "grids.epsilon", float, problems,
                             default=(0.01, 0.1), raw=True)
    loss_grid = _num_list(grids.get("loss"), "grids.loss", float, problems,
                          default=(), raw=True)
    distortion_grid = _num_list(grids.get("distortion"), "grids.distortion", float,
                                problems, default=(), raw=True)
    for i, e in enumerate(epsilon_grid):
        if not 0 < e < 1:
            problems.append(f"grids.epsilon[{i}]: must lie in (0, 1)")
    for i, nn in enumerate(n_grid):
        if nn < 2:
            problems.append(f"grids.n[{i}]: must be >= 2")
    if source is not None:
        for i, d in enumerate(distortion_grid):
            if not 0 < d < source.sigma2:
                problems.append(f"grids.distortion[{i}]: must lie in (0, sigma2)")

    samples = doc.get("samples", {})
    replicates = _positive(samples, "samples.replicates", 10_000, problems)
    mc_pairs = _positive(samples, "samples.mc_pairs", 200_000, problems)
    info_loss = _positive(samples, "samples.info_loss", 200_000, problems)
    cache_size = _positive(samples, "samples.gaussian_cache", 1_000_000, problems)
    trained_n = _positive(samples, "samples.trained_n", 10_000, problems)

    flags = doc.get("flags", {})
    v3_mode = flags.get("v3_coupling", "per-sample")
    if v3_mode not in ("per-sample", "conditional"):
        problems.append('flags.v3_coupling: must be "per-sample" or "conditional"')
    directions = _positive(flags, "flags.directions", 64, problems)

    fault = doc.get("fault_injection", {})
    encoder_scale = fault.get("encoder_sigma_phi2_scale", 1.0)
    if not isinstance(encoder_scale, (int, float)) or encoder_scale <= 0:
        problems.append("fault_injection.encoder_sigma_phi2_scale: must be positive")

    if kind == "rate-loss-region" and not loss_grid:
        problems.append("grids.loss: required for rate-loss-region")
    if kind == "tradeoff" and not distortion_grid:
        problems.append("grids.distortion: required for tradeoff")
    if loss_grid and any(b <= a for a, b in zip(loss_grid, loss_grid[1:])):
        problems.append("grids.loss: must be sorted strictly ascending")

    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))
    return ExperimentConfig(
        kind=kind, source=source, channel=channel, seed=seed,
        n_grid=tuple(n_grid), epsilon_grid=tuple(epsilon_grid),
        loss_grid=tuple(loss_grid), distortion_grid=tuple(distortion_grid),
        replicates=replicates, mc_pairs=mc_pairs, info_loss_samples=info_loss,
        cache_size=cache_size, trained_n=trained_n, v3_mode=v3_mode,
        directions=directions, encoder_sigma_phi2_scale=float(encoder_scale),
        config_sha256=hashlib.sha256(raw).hexdigest(),
    )


def _parse_source(doc, problems):
    sec = doc.get("source")
    if not isinstance(sec, dict):
        problems.append("source: section is required")
        return None
    k = sec.get("k")
    beta = sec.get("beta")
    sigma2 = sec.get("sigma2")
    if not isinstance(k, int) or k < 1:
        problems.append("source.k: must be a positive integer")
        return None
    if not isinstance(beta, list) or len(beta) != k:
        problems.append(f"source.beta: must be a list of {k} numbers")
        return None
    if not isinstance(sigma2, (int, float)) or sigma2 < 0:
        problems.append("source.sigma2: must be a nonnegative number")
        return None
    ysec = sec.get("y_dist", {"kind": "uniform", "half_width": 1.0})
    kind = ysec.get("kind")
    if kind == "uniform":
        y_dist = UniformSymmetric(half_width=float(ysec.get("half_width", 1.0)))
    elif kind == "gaussian":
        y_dist = GaussianSideInfo(variance=float(ysec.get("variance", 1.0)))
    else:
        problems.append('source.y_dist.kind: must be "uniform" or "gaussian"')
        return None
    try:
        return PolynomialSource(k=k, beta=beta, sigma2=float(sigma2), y_dist=y_dist)
    except InvalidInputError as exc:
        problems.append(f"source: {exc}")
        return None


def _parse_channel(doc, source, problems):
    sec = doc.get("channel")
    if not isinstance(sec, dict):
        problems.append("channel: section is required")
        return None
    if source is None:
        return None
    has_d = "distortion" in sec
    has_pair = "alpha" in sec or "sigma_phi2" in sec
    if has_d == has_pair:
        problems.append("channel: give either distortion or (alpha, sigma_phi2)")
        return None
    try:
        if has_d:
            return params_from_distortion(source.sigma2, float(sec["distortion"]))
        return params_from_noise(source.sigma2, float(sec["alpha"]),
                                 float(sec["sigma_phi2"]))
    except InvalidInputError as exc:
        problems.append(f"channel: {exc}")
        return None


def _get(doc, section, key, typ, problems, *, required=False):
    sec = doc.get(section, {})
    val = sec.get(key) if isinstance(sec, dict) else None
    if val is None:
        if required:
            problems.append(f"{section}.{key}: required")
        return None
    if typ is int and isinstance(val, bool) or not isinstance(val, typ):
        problems.append(f"{section}.{key}: must be {typ.__name__}")
        return None
    return val


def _num_list(container, field, typ, problems, *, default=(), raw=False):
    val = container if raw else (container.get(field.split(".")[1]) if container else None)
    if val is None:
        return tuple(default)
    if not isinstance(val, list) or not val:
        problems.append(f"{field}: must be a non-empty list")
        return tuple(default)
    out = []
    for i, item in enumerate(val):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            problems.append(f"{field}[{i}]: must be a number")
            return tuple(default)
        out.append(typ(item))
    return tuple(out)


def _positive(section, field, default, problems):
    val = section.get(field.split(".")[1], default)
    if isinstance(val, bool) or not isinstance(val, int) or val < 1:
        problems.append(f"{field}: must be a positive integer")
        return default
    return val
