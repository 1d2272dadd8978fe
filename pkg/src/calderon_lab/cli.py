"""Command-line runner.

    calderon-lab <command> [--config PATH] [--set key=value ...] [--out DIR]

Config files are INI: keys in ``[run]`` apply to every command and a
section named after the command overrides them.  ``--set`` and the
shortcut flags override the file.  Outputs go to ``--out``, else the
``output_dir`` key, else ``$CALDERON_LAB_OUT``, else ``./calderon_out``.

Exit codes: 0 all checks pass, 1 a check failed, 2 config or I/O error,
3 solver did not converge.
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys

import numpy as np

from . import gridio
from .errors import CalderonError, NonConvergence
from .experiments import COMMANDS, PRECONDITIONERS, REPORT_HEADER

ENV_OUT = "CALDERON_LAB_OUT"

COMMON = {
    "seed": 20240611,
    "threads": 1,
    "output_dir": "",
    "dump_grids": False,
    "order_lo": 1.7,
    "order_hi": 2.3,
    "box_half_width": 0.4,
    "cg_tol": 1e-10,
    "cg_maxiter": 0,
    "cg_precondition": "multigrid",
    "ball_radius": 1.0,
    "epsilon": 1e-3,
}

DEFAULTS = {
    "verify-algebra": {"n_cases": 10000, "algebra_rtol": 1e-12},
    "verify-operators": {"grid_n": 32, "mono_tol": 1e-2, "identity_tol": 1e-10, "n_frequencies": 5},
    "conjugate": {"grid_n": 40, "conjugate_tol": 1e-2},
    "alessandrini": {"grid_n": 48, "fd_grid_n": 24, "pairing_rtol": 0.03, "bump_amplitude": 1.0},
    "cgo-residual": {"grid_n": 32, "n_trials": 5},
    "linrecon": {
        "grid_n": 48, "K": 8, "L": 4.0, "route": "volume", "scenario": "gaussian",
        "amplitude": 0.1, "width": 0.2, "delta_path": "",
        "exp_cap_volume": 12.0, "exp_cap_dtn": 12.0, "batch": 64,
        "recon_tol": 0.10, "recon_tol_dtn": 0.25, "dtn_margin": 0.15,
    },
}

SHORTCUTS = {
    "K": "K", "L": "L", "route": "route", "scenario": "scenario", "grid_n": "grid_n",
    "seed": "seed", "threads": "threads", "eps": "epsilon",
}


class ConfigError(Exception):
    pass


def _coerce(key, raw, default):
    if isinstance(default, bool):
        v = str(raw).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    return str(raw)


def resolve_config(command, path=None, overrides=()):
    cfg = dict(COMMON)
    cfg.update(DEFAULTS[command])
    pending = []
    if path:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except (OSError, configparser.Error) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        for section in ("run", command):
            if cp.has_section(section):
                pending.extend(cp.items(section))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        pending.append((k.strip(), v.strip()))
    for k, v in pending:
        if k not in cfg:
            raise ConfigError(f"unknown config key {k!r} for {command}")
        cfg[k] = _coerce(k, v, cfg[k])
    _validate(cfg)
    return cfg


def _validate(cfg):
    for k, v in cfg.items():
        if (k.endswith("_tol") or k.endswith("rtol")) and not isinstance(v, bool) and not v > 0:
            raise ConfigError(f"{k} must be positive")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if cfg["epsilon"] <= 0:
        raise ConfigError("epsilon must be positive")
    if "grid_n" in cfg and cfg["grid_n"] < 8:
        raise ConfigError("grid_n must be at least 8")
    if "K" in cfg and cfg["K"] < 1:
        raise ConfigError("K must be at least 1 (the lattice would only hold the DC mode)")
    if cfg["cg_precondition"] not in PRECONDITIONERS:
        raise ConfigError(f"cg_precondition must be one of {sorted(PRECONDITIONERS)}")
    if "scenario" in cfg and cfg["scenario"] not in ("gaussian", "file"):
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}")
    if cfg.get("scenario") == "file" and not cfg.get("delta_path"):
        raise ConfigError("scenario 'file' needs delta_path")


def _output_dir(args, cfg):
    for cand in (args.out, cfg["output_dir"], os.environ.get(ENV_OUT)):
        if cand:
            return cand
    return "calderon_out"


def build_parser():
    p = argparse.ArgumentParser(prog="calderon-lab", description=__doc__.split("\n\n")[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.add_argument("--out", help="output directory")
    for flag in SHORTCUTS:
        p.add_argument("--" + flag.replace("_", "-"), dest="short_" + flag, default=None,
                       metavar="VALUE", help=f"same as --set {SHORTCUTS[flag]}=VALUE")
    return p


def run(command, cfg, out_dir):
    """Run ``command`` and write the artifacts; returns the exit code."""
    rng = np.random.Generator(np.random.PCG64(cfg["seed"]))
    extra = {}
    if command == "linrecon" and cfg["scenario"] == "file":
        try:
            delta, _, _ = gridio.read_grid(cfg["delta_path"])
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot load delta: {exc}") from None
        extra["delta"] = delta
    outcome = COMMANDS[command](cfg, rng, **extra)
    try:
        os.makedirs(out_dir, exist_ok=True)
        gridio.write_csv(os.path.join(out_dir, "report.csv"), REPORT_HEADER, [c.row() for c in outcome.checks])
        for name, (header, rows) in outcome.tables.items():
            gridio.write_csv(os.path.join(out_dir, name), header, rows)
        if cfg["dump_grids"]:
            for name, (arr, grid, kind) in outcome.grids.items():
                gridio.write_grid(os.path.join(out_dir, name + ".grid"), arr, grid, kind)
        failed = [c.name for c in outcome.checks if c.passed is False]
        summary = {
            "command": command,
            "config": {k: v for k, v in sorted(cfg.items()) if k != "output_dir"},
            "passed": not failed,
            "n_checks": len(outcome.checks),
            "failed_checks": failed,
        }
        summary.update(outcome.summary)
        gridio.write_json(os.path.join(out_dir, "summary.json"), summary)
    except OSError as exc:
        raise ConfigError(f"cannot write outputs: {exc}") from None
    for c in outcome.checks:
        status = {None: "info", True: "pass", False: "FAIL"}[c.passed]
        print(f"[{status:>4}] {c.name}: {c.value:.3e}")
    return 0 if outcome.passed else 1


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = list(args.set)
    for flag, key in SHORTCUTS.items():
        v = getattr(args, "short_" + flag)
        if v is not None:
            overrides.append(f"{key}={v}")
    try:
        cfg = resolve_config(args.command, args.config, overrides)
        return run(args.command, cfg, _output_dir(args, cfg))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NonConvergence as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, CalderonError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
