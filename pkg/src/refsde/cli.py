"""Batch experiment front-end.

Subcommands ``validate``, ``dist-rate``, ``strong-rate`` and
``weak-compare`` each read one JSON config, run the experiment and write
artifacts into the output directory:

* ``errors.csv``: the per-level table (rate kinds: n, num_paths, p, error,
  stderr; weak-compare: n, num_paths, functional, value).
* ``rate_report.json`` (rate kinds): slope fits against both regressors,
  the pass band, and monotonicity flags.
* ``weak_report.json`` (weak-compare): first/last values and decrease
  factor. ``validation_report.json`` (validate): per-check outcomes.
* ``manifest.json``: config echo, seed, config hash and artifact hashes.

Configs are parsed fail-closed: unknown keys anywhere are rejected. All
floating point is serialized with 17 significant digits and reductions run
in a fixed order, so re-running a config reproduces every artifact
bitwise, independent of ``--threads``.

Exit codes: 0 success, 2 invalid config, 3 numerical failure.
"""

import argparse
import hashlib
import json
import os
import sys
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import __version__
from .brownian import TimeGrid
from .coefficients import check_linear_growth, check_lipschitz, \
    make_coefficients
from .errors import ConfigError, IntegrationError, ProjectionError
from .geometry import Ball, domain_from_spec, sample_points
from .rates import boundary_distance_sweep, fit_rate, monotone_decreasing, \
    strong_error_sweep, weak_compare
from . import tolerances as tol

KINDS = ("validate", "dist-rate", "strong-rate", "weak-compare")

_COMMON_KEYS = {"kind", "domain", "coefficients", "x0", "horizon_T",
                "log2_fine_steps", "master_seed", "num_paths"}
_SWEEP_KEYS = {"n_list", "scheme", "substeps", "p_list"}
_KEYS_BY_KIND = {
    "validate": _COMMON_KEYS,
    "dist-rate": _COMMON_KEYS | _SWEEP_KEYS | {"regressor", "slope_band"},
    "strong-rate": _COMMON_KEYS | _SWEEP_KEYS
        | {"reference", "regressor", "slope_band"},
    "weak-compare": _COMMON_KEYS | _SWEEP_KEYS | {"reference", "functional"},
}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    raw: dict
    domain: object
    coefficients: object
    x0: np.ndarray
    grid: TimeGrid
    master_seed: int
    num_paths: int
    n_list: tuple = ()
    scheme: str = "splitting"
    substeps: int = 1
    p_list: tuple = (2.0,)
    reference_scheme: str = "projected_euler"
    reference_steps: Optional[int] = None
    functional: str = "cdf"
    regressor: str = "ln_n_over_n"
    slope_band: Optional[tuple] = None


def load_config(path, kind):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    return parse_config(raw, kind)


def parse_config(raw, kind):
    if kind not in KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r}")
    allowed = _KEYS_BY_KIND[kind]
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "kind" in raw and raw["kind"] != kind:
        raise ConfigError(
            f"config kind {raw['kind']!r} does not match subcommand {kind!r}")
    missing = ({"domain", "coefficients", "x0", "horizon_T",
                "log2_fine_steps", "master_seed", "num_paths"} - set(raw))
    if kind != "validate":
        missing |= {"n_list", "scheme"} - set(raw)
    if missing:
        raise ConfigError(f"config missing keys: {sorted(missing)}")

    try:
        domain = domain_from_spec(raw["domain"])
    except ValueError as exc:
        raise ConfigError(f"invalid domain: {exc}") from exc

    coeff_spec = raw["coefficients"]
    if not isinstance(coeff_spec, dict) or "name" not in coeff_spec:
        raise ConfigError("coefficients must be a mapping with a 'name' key")
    try:
        coeffs = make_coefficients(
            coeff_spec["name"],
            **{k: v for k, v in coeff_spec.items() if k != "name"})
    except ValueError as exc:
        raise ConfigError(f"invalid coefficients: {exc}") from exc
    if coeffs.dim != domain.dim:
        raise ConfigError(
            f"coefficient dimension {coeffs.dim} does not match domain "
            f"dimension {domain.dim}")

    x0 = np.atleast_1d(np.asarray(raw["x0"], dtype=float))
    if x0.shape != (domain.dim,):
        raise ConfigError(f"x0 must have {domain.dim} coordinates")
    if not domain.contains(x0, tol.MEMBERSHIP_TOL):
        raise ConfigError("x0 must lie in the domain closure")

    horizon = float(raw["horizon_T"])
    log2_steps = int(raw["log2_fine_steps"])
    if not 0 <= log2_steps <= 30:
        raise ConfigError("log2_fine_steps must be between 0 and 30")
    try:
        grid = TimeGrid.from_log2(horizon, log2_steps)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    master_seed = int(raw["master_seed"])
    if not 0 <= master_seed < 2 ** 64:
        raise ConfigError("master_seed must be an unsigned 64-bit integer")
    num_paths = int(raw["num_paths"])
    if num_paths < 1:
        raise ConfigError("num_paths must be >= 1")

    cfg = dict(kind=kind, raw=raw, domain=domain, coefficients=coeffs,
               x0=x0, grid=grid, master_seed=master_seed,
               num_paths=num_paths)
    if kind == "validate":
        return ExperimentConfig(**cfg)

    n_list = raw["n_list"]
    if (not isinstance(n_list, list) or not n_list
            or any(int(n) != n or n < 1 for n in n_list)
            or any(b <= a for a, b in zip(n_list, n_list[1:]))):
        raise ConfigError("n_list must be a strictly ascending list of "
                          "positive integers")
    scheme = raw["scheme"]
    if scheme not in ("euler", "splitting"):
        raise ConfigError("scheme must be 'euler' or 'splitting'")
    if scheme == "euler" and max(n_list) * grid.step > 1.0 + 1e-12:
        raise ConfigError(
            f"explicit scheme is unstable: max(n_list) * h = "
            f"{max(n_list) * grid.step:.4g} > 1")
    substeps = int(raw.get("substeps", 1))
    if substeps < 1:
        raise ConfigError("substeps must be >= 1")
    p_list = raw.get("p_list", [2.0])
    if (not isinstance(p_list, list) or not p_list
            or any(not 1.0 <= float(p) <= 8.0 for p in p_list)):
        raise ConfigError("p_list entries must lie in [1, 8]")
    cfg.update(n_list=tuple(int(n) for n in n_list), scheme=scheme,
               substeps=substeps, p_list=tuple(float(p) for p in p_list))

    if kind in ("strong-rate", "weak-compare"):
        ref = raw.get("reference",
                      {"scheme": "projected_euler", "log2_steps": log2_steps})
        if not isinstance(ref, dict) or "scheme" not in ref:
            raise ConfigError("reference must be a mapping with a 'scheme'")
        if ref["scheme"] == "projected_euler":
            extra = set(ref) - {"scheme", "log2_steps"}
            ref_log2 = int(ref.get("log2_steps", log2_steps))
            if ref_log2 < log2_steps or ref_log2 > 30:
                raise ConfigError(
                    "reference log2_steps must be >= log2_fine_steps")
            cfg.update(reference_scheme="projected_euler",
                       reference_steps=1 << ref_log2)
        elif ref["scheme"] == "halfline_map":
            extra = set(ref) - {"scheme"}
            if domain.dim != 1 or not hasattr(domain, "lower"):
                raise ConfigError("halfline_map reference needs a half-line")
            cfg.update(reference_scheme="halfline_map",
                       reference_steps=grid.steps)
        else:
            raise ConfigError(f"unknown reference scheme {ref['scheme']!r}")
        if extra:
            raise ConfigError(f"unknown keys in reference: {sorted(extra)}")

    if kind == "weak-compare":
        functional = raw.get("functional", "cdf")
        if functional not in ("mean", "second_moment", "cdf"):
            raise ConfigError(f"unknown functional {functional!r}")
        if functional == "cdf" and domain.dim != 1:
            raise ConfigError("the CDF functional requires dimension 1")
        cfg.update(functional=functional)
    else:
        regressor = raw.get("regressor", "ln_n_over_n")
        if regressor not in ("ln_n_over_n", "inverse_n"):
            raise ConfigError(f"unknown regressor {regressor!r}")
        band = raw.get("slope_band")
        if band is None:
            band = _default_band(kind, domain)
        else:
            if not (isinstance(band, list) and len(band) == 2):
                raise ConfigError("slope_band must be [lo, hi] with null "
                                  "for an open side")
            band = tuple(None if b is None else float(b) for b in band)
        cfg.update(regressor=regressor, slope_band=band)

    return ExperimentConfig(**cfg)


def _default_band(kind, domain):
    if kind == "dist-rate":
        return (0.40, None)
    if isinstance(domain, Ball):
        return (0.20, None)  # smooth boundary: only the slower rate is assured
    return (0.35, 0.70)


# ---------------------------------------------------------------------------
# Runner and artifact writing.
# ---------------------------------------------------------------------------

def run(config, out_dir, threads=1):
    """Execute one experiment and write its artifacts. Returns a summary."""
    os.makedirs(out_dir, exist_ok=True)
    if config.kind == "validate":
        summary = _run_validate(config)
        artifacts = {
            "validation_report.json": _json_bytes(summary),
        }
    elif config.kind == "dist-rate":
        tables = boundary_distance_sweep(
            config.domain, config.coefficients, config.x0, config.grid,
            config.n_list, config.num_paths, config.master_seed,
            p_list=config.p_list, scheme=config.scheme,
            substeps=config.substeps, threads=threads)
        summary = _rate_summary(config, tables)
        artifacts = {
            "errors.csv": _rate_csv(tables),
            "rate_report.json": _json_bytes(summary),
        }
    elif config.kind == "strong-rate":
        tables = strong_error_sweep(
            config.domain, config.coefficients, config.x0, config.grid,
            config.n_list, config.num_paths, config.master_seed,
            p_list=config.p_list, scheme=config.scheme,
            substeps=config.substeps,
            reference_steps=config.reference_steps, threads=threads,
            reference_scheme=config.reference_scheme)
        summary = _rate_summary(config, tables)
        artifacts = {
            "errors.csv": _rate_csv(tables),
            "rate_report.json": _json_bytes(summary),
        }
    else:
        rows = weak_compare(
            config.domain, config.coefficients, config.n_list, config.grid,
            config.num_paths, config.functional, config.x0,
            config.master_seed, scheme=config.scheme,
            substeps=config.substeps,
            reference_steps=config.reference_steps, threads=threads,
            reference_scheme=config.reference_scheme)
        first, last = rows[0].value, rows[-1].value
        summary = {
            "functional": config.functional,
            "values": {str(r.level): r.value for r in rows},
            "first_level_value": first,
            "last_level_value": last,
            "decrease_factor": (first / last) if last > 0 else None,
        }
        artifacts = {
            "errors.csv": _weak_csv(rows),
            "weak_report.json": _json_bytes(summary),
        }

    manifest = _manifest(config, artifacts)
    artifacts["manifest.json"] = _json_bytes(manifest)
    for name, data in artifacts.items():
        with open(os.path.join(out_dir, name), "wb") as fh:
            fh.write(data)
    return summary


def _run_validate(config):
    checks = []
    domain, coeffs = config.domain, config.coefficients
    checks.append({"name": "domain_construction", "passed": True,
                   "detail": type(domain).__name__})
    checks.append({"name": "x0_in_domain", "passed": True,
                   "detail": f"dist = {float(domain.distance(config.x0)):.3e}"})

    if coeffs.growth_constant is not None:
        rep = check_linear_growth(coeffs, coeffs.growth_constant,
                                  samples=10_000, box_radius=10.0,
                                  rng_seed=config.master_seed)
        checks.append({"name": "linear_growth", "passed": bool(rep.passed),
                       "detail": f"max ratio {rep.max_ratio:.6g} vs "
                                 f"C = {rep.constant:.6g}"})
    if coeffs.lipschitz_constant is not None:
        rep = check_lipschitz(coeffs, coeffs.lipschitz_constant,
                              samples=10_000, box_radius=10.0,
                              rng_seed=config.master_seed)
        checks.append({"name": "lipschitz", "passed": bool(rep.passed),
                       "detail": f"max quotient {rep.max_quotient:.6g} vs "
                                 f"L = {rep.constant:.6g}"})

    pts = sample_points(domain, 2000, seed=config.master_seed, spread=3.0)
    twice = domain.project(pts)
    idem = float(np.max(np.linalg.norm(domain.project(twice) - twice,
                                       axis=-1)))
    checks.append({"name": "projection_idempotent", "passed": idem <= 1e-10,
                   "detail": f"max drift {idem:.3e}"})
    rng = np.random.default_rng(config.master_seed)
    z = rng.standard_normal((2000, domain.dim)) * 3.0
    gap_out = np.linalg.norm(domain.project(z) - domain.project(pts), axis=-1)
    gap_in = np.linalg.norm(z - pts, axis=-1)
    nonexp = float(np.max(gap_out - gap_in))
    checks.append({"name": "projection_nonexpansive",
                   "passed": nonexp <= 1e-10,
                   "detail": f"max excess {nonexp:.3e}"})

    return {"checks": checks,
            "passed": all(c["passed"] for c in checks)}


def _rate_summary(config, tables):
    reports = {}
    for p, table in tables.items():
        fits = {}
        for reg in ("ln_n_over_n", "inverse_n"):
            band = config.slope_band if reg == config.regressor else None
            fit = fit_rate(table, regressor=reg, band=band)
            fits[reg] = {"slope": fit.slope, "intercept": fit.intercept,
                         "residual_rms": fit.residual_rms,
                         "band": fit.band, "passed": fit.passed}
        reports[_fmt(p)] = {
            "fits": fits,
            "primary_regressor": config.regressor,
            "monotone_decreasing": bool(
                np.all(np.diff(table.errors) < 0.0)),
            "monotone_decreasing_2se": monotone_decreasing(table),
        }
    return {"per_p": reports, "n_list": list(config.n_list),
            "num_paths": config.num_paths, "scheme": config.scheme}


def _fmt(value):
    return format(float(value), ".17g")


def _rate_csv(tables):
    lines = ["n,num_paths,p,error,stderr"]
    for p in sorted(tables):
        for row in tables[p].rows:
            lines.append(",".join([
                str(row.level), str(row.num_paths), _fmt(row.p),
                _fmt(row.error), _fmt(row.stderr),
            ]))
    return ("\n".join(lines) + "\n").encode()


def _weak_csv(rows):
    lines = ["n,num_paths,functional,value"]
    for row in rows:
        lines.append(",".join([
            str(row.level), str(row.num_paths), row.functional,
            _fmt(row.value),
        ]))
    return ("\n".join(lines) + "\n").encode()


def _json_bytes(obj):
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode()


def _manifest(config, artifacts):
    canonical = json.dumps(config.raw, sort_keys=True,
                           separators=(",", ":")).encode()
    return {
        "kind": config.kind,
        "config": config.raw,
        "config_sha256": hashlib.sha256(canonical).hexdigest(),
        "master_seed": config.master_seed,
        "package": "refsde",
        "version": __version__,
        "artifacts": {name: hashlib.sha256(data).hexdigest()
                      for name, data in sorted(artifacts.items())},
    }


# ---------------------------------------------------------------------------
# Entry point.
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="refsde",
        description="Penalized approximation of reflected diffusions: "
                    "batch experiments with deterministic artifacts.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", required=True, help="JSON config file")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = auto)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)
    try:
        config = load_config(args.config, args.kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        summary = run(config, args.out, threads=threads)
    except (IntegrationError, ProjectionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    if config.kind == "validate" and not summary["passed"]:
        failed = [c["name"] for c in summary["checks"] if not c["passed"]]
        print(f"validation failed: {failed}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
