"""Command-line front end: QMI leakage curves, estimator convergence and certification runs.

Every command reads one YAML file. Keys may sit at the top level or under a
section named after the command (``qmi_curve``, ``certify``, ``convergence``);
the section wins. ``--seed`` and ``--out`` override the file.

Exit codes: 0 success or certified, 1 estimator failure or formula-domain
error, 2 configuration error, 3 certification rejected.
"""

from __future__ import annotations

import csv
import math
import sys
from pathlib import Path

import click
import numpy as np
import yaml

from .certification import (
    AccessStructure,
    EstimatorConfig,
    Thresholds,
    certify,
    qmi_from_moments,
    sigma_bound,
    validate_access_structure,
)
from .errors import FormulaDomainError
from .gaussian import GaussianState, SqueezeParam, quantum_mutual_information, tmsv_state
from .homodyne import RngStream, RunningMoments, run_schedule
from .sharing import (
    LeakageCoefficients,
    SharingParams,
    build_encoding,
    qmi_curve,
    subset_joint_covariance,
    vandermonde_encoding,
    write_qmi_curve_csv,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_REJECTED = 0, 1, 2, 3

DEFAULTS = {
    "qmi_curve": {
        "zeta_mag": 2.0,
        "ln_a_min": -2.0,
        "ln_a_max": 4.0,
        "points": 50,
        "u2": 1.0,
        "v2": 1.0,
        "out": "qmi_curve.csv",
    },
    "certify": {
        "seed": 0,
        "k": 2,
        "a": 4.0,
        "zeta_mag": 0.8,
        "encoding": "vandermonde",
        "claimed": "threshold",
        "I_T_F": 1.575,
        "I_T_A": 1.575,
        "epsilon": 0.2,
        "delta": 0.4,
        "tol": 0.1,
        "T": 10**17,
        "sigma": "auto",
        "method": "aggregate",
        "check_growth": 1.1,
        "out": "certification_report.json",
    },
    "convergence": {
        "seed": 0,
        "zeta_mag": 0.8813735870195430,  # cosh(2 zeta) = 3
        "cycles": [1000, 10000, 100000, 1000000],
        "tol": 0.1,
        "sigma": "auto",
        "method": "aggregate",
        "out": "convergence.csv",
    },
}


class ConfigError(Exception):
    pass


def load_config(path: str | None, command: str, seed: int | None, out: str | None) -> dict:
    raw = {}
    if path is not None:
        try:
            raw = yaml.safe_load(Path(path).read_text()) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping")
    section = raw.get(command, {})
    if not isinstance(section, dict):
        raise ConfigError(f"section {command!r} must be a mapping")
    top = {k: v for k, v in raw.items() if k not in DEFAULTS}
    cfg = {**DEFAULTS[command], **top, **section}
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"] = out
    return cfg


def _number(cfg: dict, key: str, *, positive=False, nonneg=False, integer=False):
    value = cfg.get(key)
    if integer and isinstance(value, int) and not isinstance(value, bool):
        if (positive and value <= 0) or (nonneg and value < 0):
            raise ConfigError(f"{key} must be {'positive' if positive else 'nonnegative'}, got {value}")
        return value
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be a number, got {cfg.get(key)!r}") from None
    if not math.isfinite(value):
        raise ConfigError(f"{key} must be finite")
    if positive and value <= 0:
        raise ConfigError(f"{key} must be positive, got {value}")
    if nonneg and value < 0:
        raise ConfigError(f"{key} must be nonnegative, got {value}")
    if integer:
        if not value.is_integer():
            raise ConfigError(f"{key} must be an integer, got {value}")
        return int(value)
    return value


def _seed(cfg: dict) -> int:
    seed = _number(cfg, "seed", nonneg=True, integer=True)
    if seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits")
    return seed


def _sigma(cfg: dict, states) -> float:
    if cfg.get("sigma", "auto") == "auto":
        return sigma_bound(states)
    return _number(cfg, "sigma", positive=True)


def _fail(code: int, message: str):
    click.echo(message, err=True)
    sys.exit(code)


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Simulate and certify continuous-variable ramp secret sharing."""


def _common(f):
    f = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file.")(f)
    f = click.option("--seed", type=int, default=None, help="Overrides the config seed.")(f)
    f = click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
                     help="YAML config file.")(f)
    return f


@main.command("qmi-curve")
@_common
def qmi_curve_cmd(config_path, seed, out):
    """Mutual information of extracted secret and reference against ln a (CSV)."""
    try:
        cfg = load_config(config_path, "qmi_curve", seed, out)
        zeta = _number(cfg, "zeta_mag", nonneg=True)
        if "a_grid" in cfg:
            grid = np.asarray(cfg["a_grid"], dtype=float)
            if grid.ndim != 1 or grid.size == 0 or np.any(grid <= 0):
                raise ConfigError("a_grid must be a nonempty list of positive numbers")
        else:
            lo, hi = _number(cfg, "ln_a_min"), _number(cfg, "ln_a_max")
            points = _number(cfg, "points", positive=True, integer=True)
            if hi < lo:
                raise ConfigError("ln_a_max must be >= ln_a_min")
            grid = np.exp(np.linspace(lo, hi, points))
        coef = LeakageCoefficients(_number(cfg, "u2", nonneg=True), _number(cfg, "v2", nonneg=True))
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")
    try:
        rows = qmi_curve(zeta, grid, coef)
    except FormulaDomainError as exc:
        _fail(EXIT_FAIL, f"formula domain error: {exc}")
    write_qmi_curve_csv(cfg["out"], rows)
    click.echo(f"wrote {len(rows)} rows to {cfg['out']}")


def _claimed_structure(cfg: dict, n_players: int, k: int) -> AccessStructure:
    claimed = cfg.get("claimed", "threshold")
    if claimed == "threshold":
        return AccessStructure.threshold(k, n_players)
    if isinstance(claimed, str):
        try:
            claimed = yaml.safe_load(Path(claimed).read_text())
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read claim file {claimed}: {exc}") from exc
    if isinstance(claimed, dict):
        claimed = claimed.get("subsets")
    if not isinstance(claimed, list):
        raise ConfigError("claimed must be 'threshold', a list of {players, class} or a file")
    try:
        return AccessStructure.from_list(n_players, claimed)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed access structure: {exc}") from exc


@main.command("certify")
@_common
def certify_cmd(config_path, seed, out):
    """Run a full certification session on simulated scheme outputs (JSON report)."""
    try:
        cfg = load_config(config_path, "certify", seed, out)
        seed_value = _seed(cfg)
        params = SharingParams(
            _number(cfg, "k", integer=True),
            _number(cfg, "a", positive=True),
            _number(cfg, "zeta_mag", nonneg=True),
        )
        claimed = _claimed_structure(cfg, params.n_players, params.k)
        ok, violations = validate_access_structure(claimed)
        if not ok:
            raise ConfigError("claimed structure is invalid:\n  " + "\n  ".join(violations))
        if cfg["encoding"] == "vandermonde":
            g = vandermonde_encoding(params)
        elif cfg["encoding"] == "random":
            g = build_encoding(params, seed_value)
        else:
            raise ConfigError(f"encoding must be 'vandermonde' or 'random', got {cfg['encoding']!r}")
        th = Thresholds(_number(cfg, "I_T_F", nonneg=True), _number(cfg, "I_T_A", nonneg=True))
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")

    try:
        states = {
            members: GaussianState(np.zeros(4), subset_joint_covariance(params, g, members))
            for members in (tuple(i for i in range(params.n_players) if m >> i & 1)
                            for m in claimed.claimed)
        }
    except FormulaDomainError as exc:
        _fail(EXIT_FAIL, f"formula domain error: {exc}")

    try:
        est_cfg = EstimatorConfig(
            epsilon=_number(cfg, "epsilon", positive=True),
            tol=_number(cfg, "tol", positive=True),
            T=_number(cfg, "T", nonneg=True, integer=True),
            sigma=_sigma(cfg, list(states.values())),
            delta=_number(cfg, "delta", positive=True),
            method=cfg["method"],
            check_growth=_number(cfg, "check_growth", positive=True),
        )
    except (ConfigError, ValueError) as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")

    report = certify(claimed, states.__getitem__, th, est_cfg, RngStream(seed_value))
    Path(cfg["out"]).write_text(report.to_json(indent=2) + "\n")
    failed = report.subsets and report.subsets[-1].est_qmi is None
    click.echo(
        f"verdict={'certified' if report.verdict else 'rejected'} "
        f"subsets_tested={len(report.subsets)} copies_used={report.copies_used}"
    )
    if failed:
        _fail(EXIT_FAIL, "estimation failed: copy budget exhausted")
    sys.exit(EXIT_OK if report.verdict else EXIT_REJECTED)


@main.command("convergence")
@_common
def convergence_cmd(config_path, seed, out):
    """Error bar and actual error of the QMI estimate against cycle count (CSV)."""
    try:
        cfg = load_config(config_path, "convergence", seed, out)
        seed_value = _seed(cfg)
        if "state" in cfg:
            state = GaussianState.from_dict(cfg["state"])
            if state.n_modes != 2:
                raise ConfigError("state must have two modes")
        else:
            state = tmsv_state(SqueezeParam(_number(cfg, "zeta_mag", nonneg=True)))
        grid = cfg["cycles"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("cycles must be a nonempty list")
        grid = sorted({_number({"c": c}, "c", positive=True, integer=True) for c in grid})
        tol = _number(cfg, "tol", positive=True)
        if not tol < 0.5:
            raise ConfigError("tol must be < 0.5")
        sigma = _sigma(cfg, [state])
        if cfg["method"] not in ("aggregate", "outcomes"):
            raise ConfigError(f"unknown method {cfg['method']!r}")
    except (ConfigError, ValueError, KeyError) as exc:
        _fail(EXIT_CONFIG, f"config error: {exc}")

    truth = quantum_mutual_information(state.cov)
    rng = RngStream(seed_value)
    moments = RunningMoments()
    with Path(cfg["out"]).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cycles", "eps_qmi", "abs_error"])
        for cycles in grid:
            moments = moments + run_schedule(state, cycles - moments.l, rng, method=cfg["method"])
            est = qmi_from_moments(moments, sigma, tol)
            writer.writerow([cycles, repr(est.eps_qmi), repr(abs(est.est_qmi - truth))])
    click.echo(f"wrote {len(grid)} rows to {cfg['out']}")


if __name__ == "__main__":  # pragma: no cover
    main()
