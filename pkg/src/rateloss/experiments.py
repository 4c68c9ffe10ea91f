"""Experiment runners: deterministic CSV artifacts plus run manifests.

Work is split into fixed-size chunks whose random streams are derived from
(seed, phase, grid index, chunk index) only, and chunk results are reduced
in chunk order, so outputs are byte-identical for any worker count.  Floats
are formatted with 17 significant digits.
"""

from __future__ import annotations

import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from . import regression, test_channel
from .config import ExperimentConfig
from .errors import NumericalFailureError
from .finite_blocklength import (
    GaussianCache,
    InfoLossSamples,
    RateLossPoint,
    estimate_moments,
    rate_loss_bound,
    sample_info_loss,
)
from .manifest import RunManifest
from .properties import run_property_checks
from .source_model import UDensityRule, moment_matrix, sample_pairs
from .streams import substream

__all__ = [
    "RunResult",
    "run_asymptotic_sweep",
    "run_tradeoff",
    "run_rate_loss_region",
    "run_property_suite",
    "run_experiment",
]

_SWEEP_CHUNK = 512
_INFO_CHUNK = 8192

# stream index layout: (phase << 40) | (grid index << 20) | chunk
_PHASE_SWEEP = 1
_PHASE_TRADEOFF = 2
_PHASE_MOMENTS = 3
_PHASE_CACHE = 4


@dataclass
class RunResult:
    kind: str
    rows: List[dict]
    header: Sequence[str]
    csv_path: Path
    manifest_path: Path
    plot_path: Optional[Path] = None
    numerical_failures: int = 0
    failed_invariants: List[str] = field(default_factory=list)
    extras: dict = field(default_factory=dict)


def run_experiment(cfg: ExperimentConfig, out_dir, *, threads: int = 1,
                   plot: bool = False) -> RunResult:
    runner = {
        "asymptotic-sweep": run_asymptotic_sweep,
        "tradeoff": run_tradeoff,
        "rate-loss-region": run_rate_loss_region,
        "property-suite": run_property_suite,
    }[cfg.kind]
    return runner(cfg, out_dir, threads=threads, plot=plot)


def run_asymptotic_sweep(cfg: ExperimentConfig, out_dir, *, threads: int = 1,
                         plot: bool = False) -> RunResult:
    """Replicate-mean generalization error against the closed forms, per n."""
    out_dir = _prepare(out_dir)
    manifest, manifest_path = _start_manifest(cfg, out_dir, threads)
    source, channel = cfg.source, cfg.channel
    moment = moment_matrix(source)
    r_wz = test_channel.rates(source.sigma2, channel).r_wz
    raginsky_sq = test_channel.raginsky_sqrt_bound(r_wz, source.sigma2) ** 2

    tasks = []
    for i, n in enumerate(cfg.n_grid):
        for j, size in enumerate(_chunks(cfg.replicates, _SWEEP_CHUNK)):
            tasks.append((i, n, j, size))

    def worker(task):
        i, n, j, size = task
        rng = substream(cfg.seed, _index(_PHASE_SWEEP, i, j))
        return regression.simulate_replicates(source, channel, n, size, rng)

    results = _map_ordered(worker, tasks, threads)
    rows = []
    for i, n in enumerate(cfg.n_grid):
        batches = [r for t, r in zip(tasks, results) if t[0] == i]
        gen = np.concatenate([b.gen_error for b in batches])
        expected = np.concatenate([b.expected_given_design for b in batches])
        rows.append({
            "n": n,
            "mc_gen_error_mean": float(gen.mean()),
            "mc_gen_error_stderr": float(gen.std(ddof=1) / math.sqrt(gen.size)),
            "closed_form_eq14": float(expected.mean()),
            "upper_bound_eq17": regression.gen_error_upper_bound(
                n, source.k, source.sigma2, channel, moment),
            "raginsky_sqrt_bound_squared": raginsky_sq,
            "sigma2": source.sigma2,
        })
    header = ["n", "mc_gen_error_mean", "mc_gen_error_stderr", "closed_form_eq14",
              "upper_bound_eq17", "raginsky_sqrt_bound_squared", "sigma2"]
    csv_path = out_dir / "asymptotic_sweep.csv"
    _write_csv(csv_path, header, rows)
    manifest.finalize(manifest_path, {csv_path.name: csv_path})
    return RunResult("asymptotic-sweep", rows, header, csv_path, manifest_path)


def run_tradeoff(cfg: ExperimentConfig, out_dir, *, threads: int = 1,
                 plot: bool = False) -> RunResult:
    """Reconstruction distortion and coding rate across a distortion grid."""
    out_dir = _prepare(out_dir)
    manifest, manifest_path = _start_manifest(cfg, out_dir, threads)
    source = cfg.source
    moment = moment_matrix(source)

    def worker(item):
        i, d = item
        ch = test_channel.params_from_distortion(source.sigma2, d)
        rs = test_channel.rates(source.sigma2, ch)
        train_rng = substream(cfg.seed, _index(_PHASE_TRADEOFF, i, 0))
        eval_rng = substream(cfg.seed, _index(_PHASE_TRADEOFF, i, 1))
        train = sample_pairs(source, cfg.trained_n, train_rng)
        u_train = test_channel.apply(train.x, ch, train_rng)
        predictor = regression.ols_fit(u_train, train.y, ch, source.k)
        batch = sample_pairs(source, cfg.mc_pairs, eval_rng)
        u = test_channel.apply(batch.x, ch, eval_rng)
        true_hat = test_channel.reconstruct(u, batch.y, source.beta, ch)
        trained_hat = test_channel.reconstruct(u, batch.y, predictor.beta_hat, ch)
        return {
            "D": d,
            "r_conditional": rs.r_conditional,
            "r_wz": rs.r_wz,
            "empirical_distortion_true_beta": float(np.mean((batch.x - true_hat) ** 2)),
            "empirical_distortion_trained": float(np.mean((batch.x - trained_hat) ** 2)),
            "gen_error_at_same_rate": regression.expected_gen_error(
                cfg.trained_n, source.sigma2, ch, moment, moment),
        }

    rows = _map_ordered(worker, list(enumerate(cfg.distortion_grid)), threads)
    header = ["D", "r_conditional", "r_wz", "empirical_distortion_true_beta",
              "empirical_distortion_trained", "gen_error_at_same_rate"]
    csv_path = out_dir / "tradeoff.csv"
    _write_csv(csv_path, header, rows)
    manifest.finalize(manifest_path, {csv_path.name: csv_path})
    return RunResult("tradeoff", rows, header, csv_path, manifest_path)


def run_rate_loss_region(cfg: ExperimentConfig, out_dir, *, threads: int = 1,
                         plot: bool = False) -> RunResult:
    """Rate vs loss-level frontier for every (n, epsilon) combination.

    Moment summaries are estimated once per n (shared across epsilon) and all
    boundary searches share one Gaussian cache.  Numerical failures are
    recorded per point and the run continues.
    """
    out_dir = _prepare(out_dir)
    manifest, manifest_path = _start_manifest(cfg, out_dir, threads)
    source, channel = cfg.source, cfg.channel
    u_rule = UDensityRule(source, channel)

    info_tasks = []
    for i, n in enumerate(cfg.n_grid):
        for j, size in enumerate(_chunks(cfg.info_loss_samples, _INFO_CHUNK)):
            info_tasks.append((i, n, j, size))

    def info_worker(task):
        i, n, j, size = task
        rng = substream(cfg.seed, _index(_PHASE_MOMENTS, i, j))
        return sample_info_loss(source, channel, n, size, rng,
                                v3_mode=cfg.v3_mode, u_rule=u_rule)

    info_results = _map_ordered(info_worker, info_tasks, threads)
    moments_by_n = {}
    rejections = 0
    for i, n in enumerate(cfg.n_grid):
        parts = [r for t, r in zip(info_tasks, info_results) if t[0] == i]
        combined = InfoLossSamples(
            v1=np.concatenate([p.v1 for p in parts]),
            v2=np.concatenate([p.v2 for p in parts]),
            v3=np.concatenate([p.v3 for p in parts]),
            n_train=n, rejections=sum(p.rejections for p in parts),
            v3_mode=cfg.v3_mode,
        )
        rejections += combined.rejections
        moments_by_n[n] = estimate_moments(combined)

    cache = GaussianCache(cfg.cache_size, substream(cfg.seed, _index(_PHASE_CACHE, 0, 0)))
    point_tasks = [
        (n, eps, l)
        for n in cfg.n_grid for eps in cfg.epsilon_grid for l in cfg.loss_grid
    ]

    def point_worker(task):
        n, eps, l = task
        try:
            return rate_loss_bound(moments_by_n[n].j, moments_by_n[n].v, n, eps, l,
                                   cache, directions=cfg.directions)
        except NumericalFailureError as exc:
            return exc

    outcomes = _map_ordered(point_worker, point_tasks, threads)
    rows, failures = [], 0
    for (n, eps, l), outcome in zip(point_tasks, outcomes):
        if isinstance(outcome, NumericalFailureError):
            failures += 1
            print(f"warning: point (n={n}, epsilon={eps}, l={l}) failed: {outcome}",
                  file=sys.stderr)
            rows.append({"n": n, "epsilon": eps, "l": l,
                         "rate": math.nan, "feasible": False})
        else:
            rows.append({"n": n, "epsilon": eps, "l": l,
                         "rate": outcome.rate, "feasible": outcome.feasible})
    header = ["n", "epsilon", "l", "rate", "feasible"]
    csv_path = out_dir / "rate_loss_region.csv"
    _write_csv(csv_path, header, rows)
    plot_path = None
    if plot:
        plot_path = out_dir / "rate_loss_region.svg"
        _plot_region(rows, source.sigma2, plot_path, cfg.seed)
    manifest.flags["info_loss_rejections"] = str(rejections)
    manifest.flags["numerical_failures"] = str(failures)
    outputs = {csv_path.name: csv_path}
    if plot_path is not None:
        outputs[plot_path.name] = plot_path
    manifest.finalize(manifest_path, outputs)
    return RunResult("rate-loss-region", rows, header, csv_path, manifest_path,
                     plot_path=plot_path, numerical_failures=failures,
                     extras={"moments_by_n": moments_by_n, "cache": cache})


def run_property_suite(cfg: ExperimentConfig, out_dir, *, threads: int = 1,
                       plot: bool = False) -> RunResult:
    """Machine-readable pass/fail report over all module invariants.

    Runs on the canonical quadratic setup regardless of the configured
    source, so the analytic-density invariants always apply; the config
    contributes the seed, sample sizes, and the fault-injection scale.
    """
    out_dir = _prepare(out_dir)
    manifest, manifest_path = _start_manifest(cfg, out_dir, threads)
    checks = run_property_checks(
        cfg.seed,
        encoder_sigma_phi2_scale=cfg.encoder_sigma_phi2_scale,
        mc_pairs=cfg.mc_pairs,
    )
    rows = [{
        "name": c.name,
        "passed": bool(c.passed),
        "statistic": float(c.statistic),
        "threshold": c.threshold,
        "detail": c.detail,
    } for c in checks]
    header = ["name", "passed", "statistic", "threshold", "detail"]
    csv_path = out_dir / "property_suite.csv"
    _write_csv(csv_path, header, rows)
    manifest.flags["checks"] = str(len(rows))
    manifest.finalize(manifest_path, {csv_path.name: csv_path})
    failed = [c.name for c in checks if not c.passed]
    return RunResult("property-suite", rows, header, csv_path, manifest_path,
                     failed_invariants=failed)


# ---------------------------------------------------------------------------
# shared machinery
# ---------------------------------------------------------------------------


def _index(phase: int, major: int, minor: int) -> int:
    if not (0 <= major < 1 << 20 and 0 <= minor < 1 << 20):
        raise ValueError("stream index component out of range")
    return (phase << 40) | (major << 20) | minor


def _chunks(total: int, size: int) -> List[int]:
    out = [size] * (total // size)
    if total % size:
        out.append(total % size)
    return out


def _map_ordered(fn: Callable, tasks: Sequence, threads: int) -> list:
    if threads <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, tasks))


def _prepare(out_dir) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    return out_dir


def _start_manifest(cfg: ExperimentConfig, out_dir: Path, threads: int):
    manifest = RunManifest(
        experiment=cfg.kind,
        seed=cfg.seed,
        config_sha256=cfg.config_sha256,
        threads=threads,
        tool_version=_version(),
        flags={
            "v3_coupling": cfg.v3_mode,
            "blocklength_correction": "loss-constraint-and-rate",
            "expected_error_matrix": "realized-gram-per-replicate",
        },
    )
    path = out_dir / f"{cfg.kind}.manifest.toml"
    manifest.start(path)
    return manifest, path


def _version() -> str:
    try:
        from importlib.metadata import version

        return version("rateloss")
    except Exception:
        return "0.1.0"


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.17g}"


def _quote(text: str) -> str:
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


def _write_csv(path: Path, header: Sequence[str], rows: List[dict]) -> None:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for col in header:
            val = row[col]
            cells.append(_quote(val) if isinstance(val, str) else _fmt(val))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _plot_region(rows: List[dict], sigma2: float, path: Path, seed: int) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = str(seed)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    combos = sorted({(r["n"], r["epsilon"]) for r in rows})
    for n, eps in combos:
        pts = [(r["l"], r["rate"]) for r in rows
               if r["n"] == n and r["epsilon"] == eps and r["feasible"]]
        if pts:
            ls, rates = zip(*pts)
            ax.plot(ls, rates, marker=".", label=f"n={n}, eps={eps}")
    ax.axvline(sigma2, color="black", linewidth=1.2,
               label="minimum expected loss")
    ax.set_xlabel("generalization-error level l")
    ax.set_ylabel("achievable rate (bits/sample)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
