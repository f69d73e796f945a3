"""Command-line surface: CSV ingestion, estimation, simulation presets,
bootstrap stability, and dimension selection.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.  Machine-readable output is JSON with a meta header; ``--format
table`` renders aligned text instead.
"""

import argparse
import csv
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .data import Dataset
from .estimator import CqsConfig, bic_profile, estimate_cqs
from .exceptions import ConfigError, CqsError, DataError, EstimationError
from .metrics import estimation_error
from .simulation import (
    ERROR_DISTS,
    EstimatorSettings,
    ModelSpec,
    MODELS,
    run_cell,
)
from .subspace import Basis

_EXIT_CODES = {ConfigError: 2, DataError: 3, EstimationError: 4}


def load_csv(path, response_column):
    """Read a rectangular, headed, numeric CSV into a Dataset.

    Predictors keep header order (response column excluded).  Parse
    failures name the offending row and column.
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty")
        header = [name.strip() for name in header]
        if response_column not in header:
            raise DataError(
                f"response column {response_column!r} not in header {header}"
            )
        y_idx = header.index(response_column)
        rows = []
        for row_num, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(
                    f"row {row_num} has {len(row)} cells, header has {len(header)}"
                )
            parsed = []
            for name, cell in zip(header, row):
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"non-numeric cell at row {row_num}, column {name!r}: {cell!r}"
                    )
            rows.append(parsed)
    if not rows:
        raise DataError(f"{path} contains a header but no data rows")
    table = np.asarray(rows, dtype=float)
    predictors = [name for j, name in enumerate(header) if j != y_idx]
    X = np.delete(table, y_idx, axis=1)
    return Dataset(X=X, y=table[:, y_idx], predictor_names=predictors,
                   response_name=response_column)


def canonical_sign(vector):
    """Flip sign so the largest-magnitude coordinate is positive."""
    v = np.asarray(vector, dtype=float)
    lead = v[np.argmax(np.abs(v))]
    return v if lead >= 0 else -v


OZONE_PREDICTORS = ["TMP", "InvHt", "PR", "VIS", "HT", "HUM", "TMP2", "WindSpeed"]
OZONE_RESPONSE = "O3"


def validate_ozone_schema(dataset):
    """Check a loaded dataset against the Upland ozone layout: response O3
    plus the eight weather predictors, in any column order."""
    missing = [c for c in OZONE_PREDICTORS if c not in dataset.predictor_names]
    if dataset.response_name != OZONE_RESPONSE:
        raise DataError(f"response column must be {OZONE_RESPONSE!r}, got "
                        f"{dataset.response_name!r}")
    if missing:
        raise DataError(f"ozone predictors missing: {missing}")
    if dataset.p != len(OZONE_PREDICTORS):
        extra = [c for c in dataset.predictor_names if c not in OZONE_PREDICTORS]
        raise DataError(f"unexpected predictor columns: {extra}")
    if dataset.n < 100:
        raise DataError(f"ozone dataset should have a few hundred rows, found {dataset.n}")
    return True


@dataclass
class RunConfig:
    """Flat key-value run configuration shared by all subcommands."""

    input: str | None = None
    response: str | None = None
    tau: list = field(default_factory=lambda: [0.5])
    d_tau: int | None = None
    cs_dim: int | None = None
    n_slices: int | None = None
    seed: int = 0
    output: str | None = None
    format: str = "json"
    # simulate
    preset: str | None = None
    model: str | None = None
    n: int = 600
    p: int = 10
    error_dist: str = "N"
    cov: str = "independent"
    reps: int = 100
    # bootstrap
    resamples: int = 500
    resample_size: int = 100
    with_replacement: bool = True
    # dimension
    matrix: str = "sir"
    eigenvalues: list | None = None

    _INT_KEYS = ("d_tau", "cs_dim", "n_slices", "seed", "n", "p", "reps",
                 "resamples", "resample_size")
    _BOOL_KEYS = ("with_replacement",)

    @classmethod
    def from_sources(cls, config_path=None, overrides=None):
        cfg = cls()
        known = {k for k in cls.__dataclass_fields__ if not k.startswith("_")}
        def apply(key, value):
            key = key.strip().replace("-", "_")
            if key not in known:
                raise ConfigError(f"unknown configuration key {key!r}")
            if value is None:
                return
            if key == "tau":
                cfg.tau = _parse_tau_list(value)
            elif key == "eigenvalues":
                cfg.eigenvalues = _parse_float_list(value)
            elif key in cls._INT_KEYS:
                try:
                    setattr(cfg, key, int(value))
                except ValueError:
                    raise ConfigError(f"{key} must be an integer, got {value!r}")
            elif key in cls._BOOL_KEYS:
                setattr(cfg, key, str(value).strip().lower() in ("1", "true", "yes"))
            else:
                setattr(cfg, key, value if not isinstance(value, str) else value.strip())
        if config_path:
            try:
                lines = open(config_path, encoding="utf-8").read().splitlines()
            except OSError as exc:
                raise ConfigError(f"cannot read config {config_path}: {exc}") from exc
            for line_num, line in enumerate(lines, start=1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"config line {line_num} is not key=value: {line!r}")
                key, value = line.split("=", 1)
                apply(key, value)
        for key, value in (overrides or {}).items():
            apply(key, value)
        cfg.validate()
        return cfg

    def validate(self):
        for t in self.tau:
            if not 0.0 < t < 1.0:
                raise ConfigError(f"tau values must lie in (0, 1), got {t}")
        if self.format not in ("json", "table"):
            raise ConfigError(f"format must be json or table, got {self.format!r}")
        if self.matrix not in ("sir", "quantile"):
            raise ConfigError(f"matrix must be sir or quantile, got {self.matrix!r}")
        if self.error_dist not in ERROR_DISTS:
            raise ConfigError(f"error_dist must be one of {ERROR_DISTS}")


def _parse_tau_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse tau list from {value!r}")


def _parse_float_list(value):
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    try:
        return [float(v) for v in str(value).split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse number list from {value!r}")


def _timestamp():
    # honor SOURCE_DATE_EPOCH so identical runs serialize byte-identically
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _meta(seed):
    return {"seed": seed, "version": __version__, "timestamp": _timestamp()}


def _emit(payload, cfg, render_table):
    if cfg.format == "json":
        text = json.dumps(payload, indent=2, sort_keys=True)
    else:
        text = render_table(payload)
    if cfg.output:
        with open(cfg.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _require_dataset(cfg):
    if not cfg.input:
        raise ConfigError("an input CSV is required (--input)")
    if not cfg.response:
        raise ConfigError("a response column is required (--response)")
    return load_csv(cfg.input, cfg.response)


def serialize_basis(basis, names):
    cols = []
    for j in range(basis.k):
        vec = canonical_sign(basis.columns[:, j])
        cols.append({name: float(v) for name, v in zip(names, vec)})
    return cols


def basis_from_serialized(columns, names):
    cols = np.column_stack([[entry[name] for name in names] for entry in columns])
    return Basis(columns=cols)


def cmd_estimate(cfg):
    dataset = _require_dataset(cfg)
    directions = []
    for tau in cfg.tau:
        est = estimate_cqs(dataset.X, dataset.y,
                           CqsConfig(tau=tau, d_tau=cfg.d_tau,
                                     initial_cs_dim=cfg.cs_dim, n_slices=cfg.n_slices))
        entry = {
            "tau": tau,
            "cs_dim": est.cs_dim,
            "subspace_dim": est.subspace_dim,
            "directions": serialize_basis(est.basis, dataset.predictor_names),
        }
        if est.sir_eigenvalues is not None:
            entry["sir_eigenvalues"] = [float(v) for v in est.sir_eigenvalues]
        if est.trace is not None:
            entry["iterate_eigenvalues"] = [float(v) for v in est.trace.eigenvalues]
        directions.append(entry)
    payload = {"meta": _meta(cfg.seed), "predictors": dataset.predictor_names,
               "directions": directions}

    def render(payload):
        lines = [f"tau-quantile subspace directions ({dataset.response_name} ~ predictors)"]
        width = max(len(n) for n in dataset.predictor_names)
        for entry in payload["directions"]:
            lines.append(f"\ntau = {entry['tau']}  (cs_dim={entry['cs_dim']}, "
                         f"dim={entry['subspace_dim']})")
            for j, col in enumerate(entry["directions"]):
                lines.append(f"  direction {j + 1}:")
                for name in dataset.predictor_names:
                    lines.append(f"    {name:<{width}}  {col[name]: .4f}")
        return "\n".join(lines)

    _emit(payload, cfg, render)


_PRESETS = {
    # 3 sample sizes x 3 predictor counts for the single-index grid benchmark
    "size-grid": lambda seed: [
        dict(model="Ex1a", n=n, p=p, taus=(0.25, 0.5, 0.75), error_dist="N",
             cov="independent")
        for n in (200, 400, 600) for p in (10, 20, 40)
    ],
    # 4 single-index models x 3 error distributions
    "error-dists": lambda seed: [
        dict(model=m, n=600, p=10, taus=(0.25, 0.5, 0.75), error_dist=dist,
             cov="independent")
        for m in ("I", "II", "III", "IV") for dist in ("N", "t3", "chisq3")
    ],
}


def cmd_simulate(cfg):
    if cfg.preset is not None:
        if cfg.preset not in _PRESETS:
            raise ConfigError(f"unknown preset {cfg.preset!r}; known: {sorted(_PRESETS)}")
        cell_specs = _PRESETS[cfg.preset](cfg.seed)
    elif cfg.model is not None:
        if cfg.model not in MODELS:
            raise ConfigError(f"unknown model {cfg.model!r}; known: {sorted(MODELS)}")
        cell_specs = [dict(model=cfg.model, n=cfg.n, p=cfg.p, taus=tuple(cfg.tau),
                           error_dist=cfg.error_dist, cov=cfg.cov)]
    else:
        raise ConfigError("simulate needs --preset or --model")
    if not cell_specs:
        raise ConfigError("empty cell list")
    cells = []
    for spec in cell_specs:
        for tau in spec["taus"]:
            ms = ModelSpec(model_id=spec["model"], n=spec["n"], p=spec["p"],
                           error_dist=spec["error_dist"], cov=spec["cov"], seed=cfg.seed)
            cell = run_cell(ms, tau, EstimatorSettings(), n_reps=cfg.reps)
            record = asdict(cell)
            record.pop("selected_dims")
            cells.append(record)
    payload = {"meta": _meta(cfg.seed), "cells": cells}

    def render(payload):
        lines = ["model  n     p   dist     cov          tau    mean     sd      reps"]
        for c in payload["cells"]:
            lines.append(
                f"{c['model_id']:<6} {c['n']:<5} {c['p']:<3} {c['error_dist']:<8} "
                f"{c['cov']:<12} {c['tau']:<6} {c['mean_error']:.4f}  {c['sd_error']:.4f}  "
                f"{c['n_success']}{'  FAILED' if c['failed'] else ''}"
            )
        return "\n".join(lines)

    _emit(payload, cfg, render)


def bootstrap_stability(dataset, tau, n_resamples, resample_size, seed,
                        d_tau=None, cs_dim=None, n_slices=None, with_replacement=True):
    """Ye-Weiss style stability: angle between resample estimates and the
    full-sample estimate, averaged over resamples."""
    full = estimate_cqs(dataset.X, dataset.y,
                        CqsConfig(tau=tau, d_tau=d_tau, initial_cs_dim=cs_dim,
                                  n_slices=n_slices))
    errors = []
    failures = 0
    for b in range(n_resamples):
        rng = np.random.default_rng((seed, int(round(tau * 1000)), b))
        if with_replacement:
            rows = rng.integers(0, dataset.n, size=resample_size)
        else:
            if resample_size > dataset.n:
                raise ConfigError("resample size exceeds n for without-replacement sampling")
            rows = rng.permutation(dataset.n)[:resample_size]
        try:
            est = estimate_cqs(dataset.X[rows], dataset.y[rows],
                               CqsConfig(tau=tau, d_tau=full.subspace_dim,
                                         initial_cs_dim=full.cs_dim, n_slices=n_slices))
            errors.append(estimation_error(est.basis, full.basis))
        except CqsError:
            failures += 1
    return {
        "tau": tau,
        "n_resamples": n_resamples,
        "resample_size": resample_size,
        "n_failed": failures,
        "mean_error": float(np.mean(errors)) if errors else float("nan"),
        "full_sample_dim": full.subspace_dim,
    }


def cmd_bootstrap(cfg):
    dataset = _require_dataset(cfg)
    reports = [
        bootstrap_stability(dataset, tau, cfg.resamples, cfg.resample_size, cfg.seed,
                            d_tau=cfg.d_tau, cs_dim=cfg.cs_dim, n_slices=cfg.n_slices,
                            with_replacement=cfg.with_replacement)
        for tau in cfg.tau
    ]
    payload = {"meta": _meta(cfg.seed), "bootstrap": reports}

    def render(payload):
        lines = ["tau    resamples  size  mean_error  failed"]
        for r in payload["bootstrap"]:
            lines.append(f"{r['tau']:<6} {r['n_resamples']:<10} {r['resample_size']:<5} "
                         f"{r['mean_error']:.4f}      {r['n_failed']}")
        return "\n".join(lines)

    _emit(payload, cfg, render)


def cmd_dimension(cfg):
    from .estimator import bic_dimension

    if cfg.eigenvalues is not None:
        lam = np.asarray(cfg.eigenvalues, dtype=float)
        profile = bic_profile(lam, cfg.n)
        selected = bic_dimension(lam, cfg.n)
        reports = [{"source": "provided", "eigenvalues": [float(v) for v in lam],
                    "g_profile": [float(v) for v in profile], "selected": selected}]
    else:
        dataset = _require_dataset(cfg)
        reports = []
        if cfg.matrix == "sir":
            est = estimate_cqs(dataset.X, dataset.y,
                               CqsConfig(tau=cfg.tau[0], d_tau=1, n_slices=cfg.n_slices))
            lam = est.sir_eigenvalues
            profile = bic_profile(lam, dataset.n)
            reports.append({"source": "sir", "eigenvalues": [float(v) for v in lam],
                            "g_profile": [float(v) for v in profile],
                            "selected": bic_dimension(lam, dataset.n)})
        else:
            for tau in cfg.tau:
                est = estimate_cqs(dataset.X, dataset.y,
                                   CqsConfig(tau=tau, initial_cs_dim=cfg.cs_dim,
                                             n_slices=cfg.n_slices))
                sv = np.sqrt(est.trace.eigenvalues)
                profile = bic_profile(sv, dataset.n)
                reports.append({"source": f"quantile tau={tau}",
                                "eigenvalues": [float(v) for v in sv],
                                "g_profile": [float(v) for v in profile],
                                "selected": est.subspace_dim})
    payload = {"meta": _meta(cfg.seed), "dimension": reports}

    def render(payload):
        lines = []
        for r in payload["dimension"]:
            lines.append(f"{r['source']}: selected dimension {r['selected']}")
            lines.append("  k    G(k)")
            for k, g in enumerate(r["g_profile"], start=1):
                lines.append(f"  {k:<4} {g:.4f}")
        return "\n".join(lines)

    _emit(payload, cfg, render)


def _add_common(parser):
    parser.add_argument("--config", help="flat key=value configuration file")
    parser.add_argument("--input", help="input CSV path")
    parser.add_argument("--response", help="response column name")
    parser.add_argument("--tau", help="comma-separated quantile levels")
    parser.add_argument("--d-tau", dest="d_tau", help="target subspace dimension")
    parser.add_argument("--cs-dim", dest="cs_dim", help="initial reduction dimension")
    parser.add_argument("--n-slices", dest="n_slices", help="slice count for the initial reduction")
    parser.add_argument("--seed", help="master seed")
    parser.add_argument("--output", help="output file (default: stdout)")
    parser.add_argument("--format", choices=("json", "table"), help="output format")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="cqs",
        description="Central quantile subspace estimation and its validation harness.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate tau-quantile subspace directions from a CSV")
    _add_common(est)

    sim = sub.add_parser("simulate", help="run Monte Carlo benchmark cells")
    _add_common(sim)
    sim.add_argument("--preset", help="named cell collection (size-grid, error-dists)")
    sim.add_argument("--model", help="single model id")
    sim.add_argument("--n", help="sample size")
    sim.add_argument("--p", help="predictor count")
    sim.add_argument("--error-dist", dest="error_dist", help="N, t3 or chisq3")
    sim.add_argument("--cov", help="independent or ar_half")
    sim.add_argument("--reps", help="replications per cell")

    boot = sub.add_parser("bootstrap", help="bootstrap subspace stability for a CSV dataset")
    _add_common(boot)
    boot.add_argument("--resamples", help="number of bootstrap resamples")
    boot.add_argument("--resample-size", dest="resample_size", help="rows per resample")
    boot.add_argument("--with-replacement", dest="with_replacement",
                      help="true/false (default true)")

    dim = sub.add_parser("dimension", help="modified-BIC dimension selection with its G(k) profile")
    _add_common(dim)
    dim.add_argument("--matrix", choices=("sir", "quantile"), help="eigenvalue source")
    dim.add_argument("--eigenvalues", help="comma-separated eigenvalues (audit mode)")
    dim.add_argument("--n", help="sample size for the penalty (audit mode)")

    return parser


_COMMANDS = {
    "estimate": cmd_estimate,
    "simulate": cmd_simulate,
    "bootstrap": cmd_bootstrap,
    "dimension": cmd_dimension,
}


def main(argv=None):
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    config_path = args.pop("config", None)
    overrides = {k: v for k, v in args.items() if v is not None}
    try:
        cfg = RunConfig.from_sources(config_path, overrides)
        _COMMANDS[command](cfg)
    except CqsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        for err_type, code in _EXIT_CODES.items():
            if isinstance(exc, err_type):
                return code
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
