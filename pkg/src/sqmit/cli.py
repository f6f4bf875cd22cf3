"""Experiment runner: INI config in, deterministic CSV + manifest out.

Each named experiment reproduces one of the quantitative studies (no-control
baseline curve, sampled records, exact record-averaged curves, rate-vs-K
tables, Greedy condensation, the (Theta, K*tau) sweep, phase-space dumps, and
the asymptotic cost-function scan).  Outputs are written as
``<experiment>_<confighash>.csv`` with a JSON manifest; identical resolved
config (including seed) produces byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import __version__
from .evaluate import (
    asymptotic_nc_rates,
    coherence_nc,
    exact_expected_coherence,
    fit_rate,
    gamma_4state,
    h_theta,
    minimize_h_theta,
    monte_carlo_trajectory,
    scaled_rate,
    sweep_theta_tau,
)
from .maps import SensitivityPair
from .rtp import RtpParams
from .strategies import (
    Greedy2,
    Greedy4,
    GreedyFull,
    NoControl,
    NonAdaptive,
    StrategySpec,
    ThetaFamily,
    extract_greedy4_params,
    tau_effective,
)

_STOCHASTIC_KINDS = {"trajectories", "rate_vs_K", "greedy4_extract", "sweep", "phase_space"}

_DEFAULTS = {
    "experiment": {
        "n_steps": "15",
        "n_trajectories": "100",
        "threads": "1",
        "output_dir": ".",
    },
    "noise": {"gamma_up": "1.0", "gamma_down": "1.0", "kappa": "0.2", "k_big": "20.0"},
    "strategy": {"kind": "theta_family", "Theta": "1.50055"},
    "grid": {
        "t_max": "",
        "n_points": "100",
        "theta_min": "1.4",
        "theta_max": "1.6",
        "theta_count": "30",
        "ktau_min": "1.4",
        "ktau_max": "1.6",
        "ktau_count": "30",
        "k_values": "5,10,20,50,100",
        "n_transient": "5",
    },
}

# Execution details that do not affect the numbers: excluded from the config
# hash and the manifest so byte-identity survives running elsewhere.
_NON_IDENTITY_KEYS = {"experiment.output_dir", "experiment.threads"}


class ConfigError(ValueError):
    """Configuration problem, carrying the offending location."""


@dataclass
class ExperimentConfig:
    kind: str
    params: RtpParams
    sens: SensitivityPair
    strategy: StrategySpec
    n_steps: int
    n_trajectories: int
    seed: Optional[int]
    output_dir: Path
    threads: int
    grid: dict
    resolved: dict = field(default_factory=dict)
    load_diagnostics: list = field(default_factory=list)


def _parse_strategy(sec: configparser.SectionProxy) -> StrategySpec:
    kind = sec.get("kind", "theta_family").strip()
    try:
        if kind == "no_control":
            return NoControl()
        if kind == "non_adaptive":
            return NonAdaptive(theta=sec.getfloat("theta"), tau=sec.getfloat("tau"))
        if kind == "theta_family":
            tau = sec.getfloat("tau", fallback=None)
            return ThetaFamily(Theta=sec.getfloat("Theta"), tau=tau)
        if kind == "greedy_full":
            return GreedyFull(dt_scan=sec.getfloat("dt_scan", fallback=None))
        if kind == "greedy4":
            return Greedy4(
                theta_gt=sec.getfloat("theta_gt"),
                theta_lt=sec.getfloat("theta_lt"),
                delta_gt=sec.getfloat("delta_gt"),
                delta_lt=sec.getfloat("delta_lt"),
                alpha_threshold=sec.getfloat("alpha_threshold"),
            )
        if kind == "greedy2":
            return Greedy2(
                theta_gt=sec.getfloat("theta_gt"),
                theta_lt=sec.getfloat("theta_lt"),
                alpha_threshold=sec.getfloat("alpha_threshold"),
            )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[strategy] {exc}") from exc
    raise ConfigError(f"[strategy] unknown kind {kind!r}")


def load_config(
    path: str,
    seed_override: Optional[int] = None,
    output_dir_override: Optional[str] = None,
    threads_override: Optional[int] = None,
) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    for section, values in _DEFAULTS.items():
        parser[section] = dict(values)
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path!r}")
    try:
        kind = parser.get("experiment", "kind")
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(f"{path}: [experiment] kind is required") from exc
    if seed_override is not None:
        parser.set("experiment", "seed", str(seed_override))
    if output_dir_override is not None:
        parser.set("experiment", "output_dir", output_dir_override)
    if threads_override is not None:
        parser.set("experiment", "threads", str(threads_override))

    exp = parser["experiment"]
    noise = parser["noise"]
    load_diagnostics = []
    try:
        params = RtpParams(noise.getfloat("gamma_up"), noise.getfloat("gamma_down"))
    except ValueError as exc:
        load_diagnostics.append(f"[noise] {exc}")
        params = RtpParams(1.0, 1.0)
    try:
        sens = SensitivityPair(noise.getfloat("kappa"), noise.getfloat("k_big"))
    except ValueError as exc:
        load_diagnostics.append(f"[noise] {exc}")
        sens = SensitivityPair(0.2, 20.0)
    try:
        strategy = _parse_strategy(parser["strategy"])
    except ConfigError as exc:
        load_diagnostics.append(str(exc))
        strategy = NoControl()
    seed = exp.getint("seed", fallback=None)
    resolved = {
        f"{s}.{k}": v
        for s in parser.sections()
        for k, v in sorted(parser[s].items())
        if f"{s}.{k}" not in _NON_IDENTITY_KEYS and v != ""
    }
    return ExperimentConfig(
        kind=kind,
        params=params,
        sens=sens,
        strategy=strategy,
        n_steps=exp.getint("n_steps"),
        n_trajectories=exp.getint("n_trajectories"),
        seed=seed,
        output_dir=Path(exp.get("output_dir")),
        threads=exp.getint("threads"),
        grid=dict(parser["grid"]),
        resolved=resolved,
        load_diagnostics=load_diagnostics,
    )


def validate(config: ExperimentConfig) -> list[str]:
    """Non-mutating invariant check; an empty list means runnable."""
    diags = list(config.load_diagnostics)
    if config.kind not in EXPERIMENTS:
        diags.append(f"unknown experiment kind {config.kind!r}")
    if config.seed is None and config.kind in _STOCHASTIC_KINDS:
        diags.append(f"experiment {config.kind!r} is stochastic and needs a seed")
    if config.sens.k_big < config.sens.kappa:
        diags.append(
            "warning: k_big < kappa is outside the weak/strong sensitivity regime"
        )
    if config.n_steps <= 0:
        diags.append("n_steps must be positive")
    if config.n_trajectories <= 0:
        diags.append("n_trajectories must be positive")
    if config.threads <= 0:
        diags.append("threads must be positive")
    return diags


# ---------------------------------------------------------------------------
# Experiments: each returns (header, rows, summary)
# ---------------------------------------------------------------------------


def _grid_float(config: ExperimentConfig, key: str, default: float) -> float:
    raw = config.grid.get(key, "")
    return float(raw) if raw else default


def _run_nc_curve(config: ExperimentConfig):
    t_max = _grid_float(config, "t_max", 5.0 / config.params.gamma_bar)
    n = int(config.grid["n_points"])
    t = np.linspace(0.0, t_max, n)
    rate, _ = asymptotic_nc_rates(config.params, config.sens.kappa)
    exact = coherence_nc(config.params, config.sens.kappa, t)
    rows = [(ti, ci, np.exp(-rate * ti)) for ti, ci in zip(t, exact)]
    return ("t", "C_exact", "C_asymptotic"), rows


def _run_trajectories(config: ExperimentConfig):
    rng = np.random.default_rng(config.seed)
    rows = []
    for j in range(config.n_trajectories):
        rec = monte_carlo_trajectory(
            config.strategy, config.params, config.sens, config.n_steps, rng
        )
        rows.append((j, 0, 0.0, 1.0, -1))
        for n in range(1, config.n_steps + 1):
            rows.append(
                (j, n, rec.times[n], rec.coherence[n], int(rec.outcomes[n - 1]))
            )
    return ("trajectory", "step", "t", "coherence", "y"), rows


def _run_exact_curve(config: ExperimentConfig):
    series = exact_expected_coherence(
        config.strategy, config.params, config.sens, config.n_steps
    )
    rows = list(zip(series.times, series.values))
    return ("t", "C"), rows


def _extract_greedy4(config: ExperimentConfig, sens: SensitivityPair, rng) -> Greedy4:
    recs = [
        monte_carlo_trajectory(
            GreedyFull(), config.params, sens, config.n_steps, rng
        )
        for _ in range(config.n_trajectories)
    ]
    n_transient = int(config.grid["n_transient"])
    return extract_greedy4_params(
        [r.decisions for r in recs], n_transient, sens.k_big
    )


def _run_rate_vs_K(config: ExperimentConfig):
    rng = np.random.default_rng(config.seed)
    k_values = [float(v) for v in config.grid["k_values"].split(",")]
    theta_star, _ = minimize_h_theta()
    rows = []
    for k in k_values:
        sens = SensitivityPair(config.sens.kappa, k)
        moaaar = ThetaFamily(theta_star)
        greedy4 = _extract_greedy4(config, sens, rng)
        for name, spec in (("moaaar", moaaar), ("greedy4", greedy4)):
            series = exact_expected_coherence(spec, config.params, sens, config.n_steps)
            fit = fit_rate(series)
            rows.append(
                (k, name, fit.slope, scaled_rate(fit.slope, config.params, sens), fit.r_squared)
            )
            closed = gamma_4state(spec, config.params, sens)
            rows.append(
                (k, name + "_closed_form", closed,
                 scaled_rate(closed, config.params, sens), 1.0)
            )
    return ("K", "strategy", "rate", "scaled_rate", "r_squared"), rows


def _run_greedy4_extract(config: ExperimentConfig):
    rng = np.random.default_rng(config.seed)
    g4 = _extract_greedy4(config, config.sens, rng)
    tau_eff = tau_effective(g4, config.sens.k_big, config.params.gamma_breve)
    rows = [
        (g4.theta_gt, g4.theta_lt, g4.delta_gt, g4.delta_lt, g4.alpha_threshold, tau_eff)
    ]
    return (
        "theta_gt", "theta_lt", "delta_gt", "delta_lt", "alpha_threshold", "tau_effective",
    ), rows


def _sweep_row(args):
    params, sens, theta, ktaus, n_steps = args
    res = sweep_theta_tau(params, sens, [theta], ktaus, n_steps=n_steps)
    return res.rates[0], res.r_squared[0]


def _run_sweep(config: ExperimentConfig):
    thetas = np.linspace(
        float(config.grid["theta_min"]),
        float(config.grid["theta_max"]),
        int(config.grid["theta_count"]),
    )
    ktaus = np.linspace(
        float(config.grid["ktau_min"]),
        float(config.grid["ktau_max"]),
        int(config.grid["ktau_count"]),
    )
    jobs = [(config.params, config.sens, th, ktaus, config.n_steps) for th in thetas]
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(_sweep_row, jobs))
    else:
        results = [_sweep_row(j) for j in jobs]
    rows = []
    for th, (rates, r2s) in zip(thetas, results):
        for ktau, rate, r2 in zip(ktaus, rates, r2s):
            rows.append((th, ktau, rate, r2, int(r2 <= 0.998)))
    return ("Theta", "K_tau", "scaled_rate", "r_squared", "flagged"), rows


def _run_phase_space(config: ExperimentConfig):
    rng = np.random.default_rng(config.seed)
    rows = []
    for j in range(config.n_trajectories):
        rec = monte_carlo_trajectory(
            config.strategy, config.params, config.sens, config.n_steps, rng
        )
        for row in rec.phase_rows:
            rows.append((j,) + tuple(row))
    return ("trajectory", "step", "alpha", "zeta", "varphi", "log_r", "s", "y"), rows


def _run_h_theta_scan(config: ExperimentConfig):
    lo = _grid_float(config, "theta_min", 0.1)
    hi = _grid_float(config, "theta_max", np.pi - 0.1)
    n = int(config.grid["n_points"])
    thetas = np.linspace(lo, hi, n)
    rows = [(th, float(h_theta(th))) for th in thetas]
    theta_star, h_star = minimize_h_theta()
    rows.append((theta_star, h_star))
    return ("Theta", "h_theta"), rows


EXPERIMENTS: dict[str, Callable] = {
    "nc_curve": _run_nc_curve,
    "trajectories": _run_trajectories,
    "exact_curve": _run_exact_curve,
    "rate_vs_K": _run_rate_vs_K,
    "greedy4_extract": _run_greedy4_extract,
    "sweep": _run_sweep,
    "phase_space": _run_phase_space,
    "h_theta_scan": _run_h_theta_scan,
}


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _fmt(value) -> str:
    """Round-trip formatting: repr for floats, str otherwise."""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return str(value)


def _config_hash(resolved: dict) -> str:
    blob = "\n".join(f"{k}={v}" for k, v in sorted(resolved.items()))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


def _column_summary(header, rows) -> dict:
    summary = {}
    for i, name in enumerate(header):
        vals = [r[i] for r in rows]
        if all(isinstance(v, (int, float, np.integer, np.floating)) for v in vals):
            summary[name] = {
                "n": len(vals),
                "mean": repr(float(np.mean(vals))) if vals else "nan",
            }
    return summary


def run(config: ExperimentConfig) -> list[Path]:
    diags = [d for d in validate(config) if not d.startswith("warning:")]
    if diags:
        raise ConfigError("; ".join(diags))
    header, rows = EXPERIMENTS[config.kind](config)
    tag = _config_hash(config.resolved)
    config.output_dir.mkdir(parents=True, exist_ok=True)
    csv_path = config.output_dir / f"{config.kind}_{tag}.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    manifest = {
        "experiment": config.kind,
        "config_hash": tag,
        "version": __version__,
        "config": config.resolved,
        "columns": list(header),
        "summary": _column_summary(header, rows),
    }
    manifest_path = config.output_dir / f"{config.kind}_{tag}.manifest.json"
    with open(manifest_path, "w", newline="", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [csv_path, manifest_path]


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def main(argv: Optional[list[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="sqmit", description="spectator-qubit dephasing-mitigation experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "validate"):
        p = sub.add_parser(name)
        p.add_argument("config", help="path to an INI experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output-dir", default=None)
        p.add_argument("--threads", type=int, default=None)
    sub.add_parser("list-experiments")
    args = parser.parse_args(argv)

    if args.command == "list-experiments":
        for name in sorted(EXPERIMENTS):
            print(name)
        return 0

    try:
        config = load_config(args.config, args.seed, args.output_dir, args.threads)
    except (ConfigError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        diags = validate(config)
        for d in diags:
            print(d)
        return 0 if all(d.startswith("warning:") for d in diags) else 1

    try:
        paths = run(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numeric failures carry experiment context
        print(f"error: experiment {config.kind!r} failed: {exc}", file=sys.stderr)
        return 1
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
