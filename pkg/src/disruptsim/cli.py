"""Command-line front end.

One subcommand per artifact: ``portrait``, ``trajectory``, ``diagram``,
``overshoot``, ``sweep``, ``abm``, ``fit``.  Each writes CSV/JSON files
into ``--out-dir`` together with a ``manifest.json`` recording the fully
resolved configuration and a SHA-256 hash of every emitted file, so runs
are reproducible byte for byte.

Parameter precedence: command-line flag > ``--config`` JSON file >
built-in default.  A manifest can itself be passed back via ``--config``
to reproduce the run.  Environment overrides are limited to
``DISRUPTSIM_OUT_DIR`` (used when ``--out-dir`` is absent) and
``DISRUPTSIM_THREADS`` (replica parallelism).

Exit codes: 0 success, 2 invalid flags or configuration, 3 I/O failure,
4 data error (for example a rank-deficient fit).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import __version__
from . import abm, analysis, meanfield
from .analysis import MalformedHeaderError, RankDeficiencyError
from .strategy import ModelParams, Strategy, analytic_breakpoints

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_DATA = 4


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


def _parse_grid(spec: str) -> list[float]:
    """Parse ``lo:hi:count`` into an inclusive linear grid."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise UsageError(f"grid must be lo:hi:count, got {spec!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        count = int(parts[2])
    except ValueError as exc:
        raise UsageError(f"bad grid {spec!r}: {exc}") from exc
    if count < 1 or hi < lo:
        raise UsageError(f"bad grid {spec!r}: need hi >= lo and count >= 1")
    return [float(v) for v in np.linspace(lo, hi, count)]


def _parse_floats(spec: str) -> list[float]:
    try:
        return [float(tok) for tok in spec.split(",") if tok != ""]
    except ValueError as exc:
        raise UsageError(f"bad float list {spec!r}: {exc}") from exc


def _load_config_file(path: str) -> dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from exc
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]  # accept a manifest verbatim
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    return data


def _resolve(args: argparse.Namespace, defaults: dict[str, Any]) -> dict[str, Any]:
    """Merge CLI flags over config-file values over built-in defaults."""
    from_file: dict[str, Any] = {}
    if getattr(args, "config", None):
        from_file = _load_config_file(args.config)
    resolved = dict(defaults)
    for key, value in from_file.items():
        if key in defaults or key in ("command",):
            if key != "command":
                resolved[key] = value
        else:
            raise UsageError(f"unknown config key {key!r}")
    for key in defaults:
        cli_value = getattr(args, key, None)
        if cli_value is not None:
            resolved[key] = cli_value
    return resolved


def _require(resolved: dict[str, Any], *keys: str) -> None:
    missing = [k for k in keys if resolved.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise UsageError(f"missing required flags: {flags}")


def _out_dir(resolved: dict[str, Any]) -> Path:
    out = resolved.get("out_dir") or os.environ.get("DISRUPTSIM_OUT_DIR")
    if not out:
        raise UsageError("missing --out-dir (or DISRUPTSIM_OUT_DIR)")
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    resolved["out_dir"] = str(path)
    return path


def _params(resolved: dict[str, Any]) -> ModelParams:
    _require(resolved, "alpha", "beta")
    try:
        return ModelParams(
            alpha=float(resolved["alpha"]),
            beta=float(resolved["beta"]),
            eps=float(resolved["eps"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def _write_manifest(
    command: str, resolved: dict[str, Any], out: Path, files: list[str]
) -> None:
    hashes = {}
    for name in sorted(files):
        digest = hashlib.sha256((out / name).read_bytes()).hexdigest()
        hashes[name] = f"sha256:{digest}"
    manifest = {
        "command": command,
        "config": {k: v for k, v in sorted(resolved.items())},
        "outputs": hashes,
        "version": __version__,
    }
    with open(out / "manifest.json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_json(payload: dict[str, Any], path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _progress(resolved: dict[str, Any], message: str) -> None:
    if resolved.get("verbose"):
        print(message)


# --------------------------------------------------------------------------
# Subcommands


def _segments_payload(params: ModelParams, resolved: dict[str, Any], s: int, out: Path) -> list[str]:
    portrait = meanfield.phase_portrait(params, int(resolved["resolution"]), overshoot=s)
    meanfield.write_portrait_csv(portrait, out / "segments.csv")
    basin = meanfield.trap_basin(params, int(resolved["resolution"]), overshoot=s)
    bp = analytic_breakpoints(params)
    _write_json(
        {
            "trap_basin": basin,
            "breakpoints": {"f_exit_trap": bp.f_exit_trap, "f_11_22": bp.f_11_22},
        },
        out / "summary.json",
    )
    return ["segments.csv", "summary.json"]


def cmd_portrait(resolved: dict[str, Any]) -> None:
    params = _params(resolved)
    out = _out_dir(resolved)
    files = _segments_payload(params, resolved, 0, out)
    _write_manifest("portrait", resolved, out, files)
    _progress(resolved, f"portrait written to {out}")


def cmd_overshoot(resolved: dict[str, Any]) -> None:
    params = _params(resolved)
    _require(resolved, "s")
    out = _out_dir(resolved)
    files = _segments_payload(params, resolved, int(resolved["s"]), out)
    _write_manifest("overshoot", resolved, out, files)
    _progress(resolved, f"overshoot portrait written to {out}")


def cmd_trajectory(resolved: dict[str, Any]) -> None:
    params = _params(resolved)
    _require(resolved, "f0")
    out = _out_dir(resolved)
    kind = resolved["policy"]
    if kind == "best":
        policy: meanfield.Policy = meanfield.BestResponse(T=float(resolved["commit_T"]))
    elif kind == "overshoot":
        policy = meanfield.Overshoot(int(resolved["s"] if resolved["s"] is not None else 0))
    elif kind == "fixed":
        _require(resolved, "m", "tau")
        policy = meanfield.Fixed(Strategy(int(resolved["m"]), int(resolved["tau"])))
    else:
        raise UsageError(f"unknown policy {kind!r}; use best, overshoot or fixed")
    try:
        traj = meanfield.integrate(
            params,
            float(resolved["f0"]),
            policy,
            float(resolved["t_end"]),
            float(resolved["dt"]),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    meanfield.write_trajectory_csv(traj, out / "trajectory.csv")
    transient = 0.5 * float(resolved["t_end"])
    try:
        cyc = meanfield.detect_cycle(traj, transient)
        cycle_payload: dict[str, Any] = {
            "detected": cyc.detected,
            "period": cyc.period,
            "f_min": cyc.f_min,
            "f_max": cyc.f_max,
            "strategy_sequence": [[s.m, s.tau] for s in cyc.strategy_sequence],
        }
    except meanfield.InsufficientDataError as exc:
        cycle_payload = {"detected": None, "error": str(exc)}
    _write_json(
        {
            "final_f": float(traj.f_values[-1]),
            "n_switches": len(traj.switch_events),
            "cycle": cycle_payload,
        },
        out / "summary.json",
    )
    _write_manifest("trajectory", resolved, out, ["trajectory.csv", "summary.json"])
    _progress(resolved, f"trajectory written to {out}")


def cmd_diagram(resolved: dict[str, Any]) -> None:
    _require(resolved, "beta", "alpha_grid", "f_grid")
    out = _out_dir(resolved)
    alphas = _parse_grid(resolved["alpha_grid"])
    fs = _parse_grid(resolved["f_grid"])
    cells = meanfield.phase_diagram(float(resolved["beta"]), float(resolved["eps"]), alphas, fs)
    meanfield.write_diagram_csv(cells, out / "diagram.csv")
    _write_manifest("diagram", resolved, out, ["diagram.csv"])
    _progress(resolved, f"diagram written to {out}")


def cmd_sweep(resolved: dict[str, Any]) -> None:
    _require(resolved, "alpha", "betas", "f_grid")
    out = _out_dir(resolved)
    betas = _parse_floats(resolved["betas"])
    fs = _parse_grid(resolved["f_grid"])
    points = meanfield.redundancy_sweep(float(resolved["alpha"]), float(resolved["eps"]), betas, fs)
    meanfield.write_sweep_csv(points, out / "sweep.csv")
    fits = {}
    for beta in betas:
        xs = [p.tau_star for p in points if p.beta == beta]
        ys = [p.buffer for p in points if p.beta == beta]
        try:
            report = analysis.inverted_u_report(xs, ys)
        except ValueError as exc:
            raise DataError(f"sweep fit failed for beta={beta}: {exc}") from exc
        fits[f"{beta:g}"] = {
            "coefficients": list(report.fit.coefficients),
            "p_values": list(report.fit.p_values),
            "r_squared": report.fit.r_squared,
            "n_obs": report.fit.n_obs,
            "is_inverted_u": report.is_inverted_u,
        }
    _write_json(fits, out / "fits.json")
    _write_manifest("sweep", resolved, out, ["sweep.csv", "fits.json"])
    _progress(resolved, f"sweep written to {out}")


def cmd_abm(resolved: dict[str, Any]) -> None:
    params = _params(resolved)
    _require(resolved, "n", "f0")
    out = _out_dir(resolved)
    if resolved["policy"] == "fixed":
        _require(resolved, "m", "tau")
        policy: Optional[Strategy] = Strategy(int(resolved["m"]), int(resolved["tau"]))
    elif resolved["policy"] in ("best", None):
        policy = None
    else:
        raise UsageError(f"unknown abm policy {resolved['policy']!r}; use best or fixed")
    try:
        config = abm.AbmConfig(
            n_agents=int(resolved["n"]),
            params=params,
            r=float(resolved["r"]),
            xi=float(resolved["xi"]),
            f0=float(resolved["f0"]),
            policy=policy,
            t_end=float(resolved["t_end"]),
            sample_dt=float(resolved["sample_dt"]),
            seed=int(resolved["seed"]),
        )
        summary = abm.run_replicas(config, int(resolved["replicas"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    abm.write_timeseries_csv(summary, out / "timeseries.csv")
    abm.write_finals_csv(summary, out / "finals.csv")
    _write_json(
        {
            "mean_final_f": float(np.mean(summary.final_f_samples)),
            "sem_final_f": float(
                np.std(summary.final_f_samples, ddof=1) / np.sqrt(summary.n_replicas)
            ),
            "n_replicas": summary.n_replicas,
        },
        out / "summary.json",
    )
    _write_manifest("abm", resolved, out, ["timeseries.csv", "finals.csv", "summary.json"])
    _progress(resolved, f"abm ensemble written to {out}")


def cmd_fit(resolved: dict[str, Any]) -> None:
    _require(resolved, "input")
    out = _out_dir(resolved)
    records, skipped = analysis.load_country_csv(
        resolved["input"],
        country_col=resolved["country_col"],
        inventory_col=resolved["y_col"],
        eci_col=resolved["x_col"],
    )
    xs = [r.eci for r in records]
    ys = [r.inventory_days for r in records]
    report = analysis.inverted_u_report(xs, ys)
    analysis.write_fit_json(report.fit, out / "fit.json", skipped_rows=skipped)
    _write_manifest("fit", resolved, out, ["fit.json"])
    _progress(resolved, f"fit written to {out}")


# --------------------------------------------------------------------------
# Parser


_COMMON_DEFAULTS: dict[str, Any] = {"out_dir": None, "verbose": False}

_DEFAULTS: dict[str, dict[str, Any]] = {
    "portrait": {"alpha": None, "beta": None, "eps": 0.0, "resolution": 1000},
    "overshoot": {"alpha": None, "beta": None, "eps": 0.0, "resolution": 1000, "s": None},
    "trajectory": {
        "alpha": None,
        "beta": None,
        "eps": 0.0,
        "f0": None,
        "t_end": 50.0,
        "dt": 1e-3,
        "policy": "best",
        "commit_T": 0.0,
        "s": None,
        "m": None,
        "tau": None,
    },
    "diagram": {"beta": None, "eps": 0.0, "alpha_grid": None, "f_grid": None},
    "sweep": {"alpha": None, "eps": 0.0, "betas": None, "f_grid": None},
    "abm": {
        "alpha": None,
        "beta": None,
        "eps": 0.0,
        "n": None,
        "r": 1.0,
        "xi": 0.0,
        "f0": None,
        "t_end": 100.0,
        "sample_dt": 1.0,
        "replicas": 10,
        "seed": 0,
        "policy": "best",
        "m": None,
        "tau": None,
    },
    "fit": {
        "input": None,
        "x_col": "eci",
        "y_col": "inventory_days",
        "country_col": "country",
    },
}

_HANDLERS = {
    "portrait": cmd_portrait,
    "overshoot": cmd_overshoot,
    "trajectory": cmd_trajectory,
    "diagram": cmd_diagram,
    "sweep": cmd_sweep,
    "abm": cmd_abm,
    "fit": cmd_fit,
}

_HELP = {
    "alpha": "marginal cost per attempted input (> 0)",
    "beta": "returns-to-complexity exponent in (0, 1)",
    "eps": "exogenous failure rate (default %(default)s)",
    "resolution": "F-grid resolution (default %(default)s)",
    "s": "overshoot size added to the best response",
    "f0": "initial functional fraction in [0, 1]",
    "t_end": "simulation horizon (default %(default)s)",
    "dt": "integrator step (default %(default)s)",
    "policy": "strategy policy (default %(default)s)",
    "commit_T": "commitment interval T for --policy best (default %(default)s)",
    "m": "attempted inputs for a fixed strategy",
    "tau": "required inputs for a fixed strategy",
    "alpha_grid": "alpha grid as lo:hi:count",
    "f_grid": "F grid as lo:hi:count",
    "betas": "comma-separated beta values",
    "n": "number of agents (>= 2)",
    "r": "supplier stickiness (>= 1, default %(default)s)",
    "xi": "preferential-attachment exponent (>= 0, default %(default)s)",
    "sample_dt": "sampling interval (default %(default)s)",
    "replicas": "ensemble size (default %(default)s)",
    "seed": "64-bit RNG seed (default %(default)s)",
    "input": "input CSV path",
    "x_col": "x column name (default %(default)s)",
    "y_col": "y column name (default %(default)s)",
    "country_col": "identifier column name (default %(default)s)",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="disruptsim",
        description="Simulate contagious production disruptions: phase portraits, "
        "trajectories, phase diagrams, redundancy sweeps, agent-based ensembles, "
        "and quadratic fits.",
    )
    parser.add_argument("--version", action="version", version=f"disruptsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, defaults in _DEFAULTS.items():
        p = sub.add_parser(name, help=f"run the {name} artifact")
        p.add_argument("--config", help="JSON config file (or a previous manifest)")
        p.add_argument("--out-dir", dest="out_dir", help="output directory")
        p.add_argument("--verbose", action="store_true", default=None)
        for key, default in defaults.items():
            flag = "--" + key.replace("_", "-")
            help_text = _HELP.get(key, key)
            if key in ("resolution", "n", "replicas", "seed", "m", "tau", "s"):
                p.add_argument(flag, type=int, default=None, help=help_text)
            elif key in ("policy", "alpha_grid", "f_grid", "betas", "input", "x_col", "y_col", "country_col"):
                p.add_argument(flag, type=str, default=None, help=help_text)
            else:
                p.add_argument(flag, type=float, default=None, help=help_text)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    command = args.command
    defaults = {**_DEFAULTS[command], **_COMMON_DEFAULTS}
    try:
        resolved = _resolve(args, defaults)
        _HANDLERS[command](resolved)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"run 'disruptsim {command} --help' for usage", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (RankDeficiencyError, MalformedHeaderError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
