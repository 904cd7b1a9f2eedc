"""Monte Carlo error aggregation across penalization levels and rate fits.

The sweep drivers integrate every requested penalization level, and the
projected-Euler reference where one is needed, in lockstep along shared
Brownian paths (common random numbers). Work is chunked over paths; chunk
layout depends only on the problem size, never on the thread count, and
results are merged in chunk order, so outputs are bitwise reproducible for
a given configuration regardless of parallelism.

Errors are pooled as ``(mean over paths of sup^p)^(1/p)``; the bias of the
root is accepted and the reported standard error is propagated to the same
scale. Rate fits regress ``log(error)`` on the log of a regressor of the
penalization level; both the ``log(n)/n`` scale and the plain ``1/n``
scale are available because the two are empirically hard to distinguish at
desk scale.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .brownian import TimeGrid, halve_increments, sample_increments
from .errors import IntegrationError
from .geometry import HalfLine
from .penalized import euler_step, splitting_step
from .reflected import projected_euler_step
from . import tolerances as tol

__all__ = [
    "ErrorRow",
    "ErrorTable",
    "RateReport",
    "WeakRow",
    "lp_sup_error",
    "fit_rate",
    "monotone_decreasing",
    "modulus_of_continuity",
    "boundary_distance_sweep",
    "strong_error_sweep",
    "weak_compare",
    "brownian_modulus_table",
    "REGRESSORS",
]


# ---------------------------------------------------------------------------
# Tables and fits.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ErrorRow:
    level: int
    num_paths: int
    h_fine: float
    error: float
    stderr: float
    p: float


@dataclass(frozen=True)
class ErrorTable:
    rows: tuple

    def __post_init__(self):
        levels = [r.level for r in self.rows]
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError("levels must be strictly increasing")
        if any(r.error < 0 for r in self.rows):
            raise ValueError("errors must be nonnegative")
        if any(not np.isfinite(r.stderr) for r in self.rows):
            raise ValueError("standard errors must be finite")

    @property
    def levels(self):
        return np.array([r.level for r in self.rows], dtype=float)

    @property
    def errors(self):
        return np.array([r.error for r in self.rows])

    @property
    def stderrs(self):
        return np.array([r.stderr for r in self.rows])


REGRESSORS = {
    "ln_n_over_n": lambda n: np.log(n) / n,
    "inverse_n": lambda n: 1.0 / n,
}


@dataclass(frozen=True)
class RateReport:
    table: ErrorTable
    regressor: str
    slope: float
    intercept: float
    residual_rms: float
    band: Optional[tuple] = None
    passed: Optional[bool] = None


def fit_rate(table, regressor="ln_n_over_n", band=None):
    """Least-squares fit of log(error) against log(regressor(n)).

    Requires at least four rows and strictly positive errors (the log is
    degenerate otherwise). ``band = (lo, hi)`` with ``None`` for an open
    side attaches a pass/fail verdict for the slope.
    """
    if regressor not in REGRESSORS:
        raise ValueError(f"unknown regressor {regressor!r}")
    if len(table.rows) < 4:
        raise ValueError("rate fit needs at least 4 rows")
    errors = table.errors
    if np.any(errors <= 0):
        raise ValueError("rate fit needs strictly positive errors")
    r = np.log(REGRESSORS[regressor](table.levels))
    e = np.log(errors)
    slope, intercept = np.polyfit(r, e, 1)
    resid = e - (slope * r + intercept)
    report_band = None if band is None else tuple(band)
    passed = None
    if report_band is not None:
        lo, hi = report_band
        passed = bool((lo is None or slope >= lo)
                      and (hi is None or slope <= hi))
    return RateReport(
        table=table, regressor=regressor, slope=float(slope),
        intercept=float(intercept),
        residual_rms=float(np.sqrt(np.mean(resid ** 2))),
        band=report_band, passed=passed,
    )


def monotone_decreasing(table, sigmas=2.0):
    """True when errors decrease across rows, net of ``sigmas`` standard errors.

    Each consecutive pair may violate strict decrease by at most
    ``sigmas * (se_i + se_{i+1})``.
    """
    e, s = table.errors, table.stderrs
    slack = sigmas * (s[:-1] + s[1:])
    return bool(np.all(e[1:] - e[:-1] < slack))


def lp_sup_error(ref, approx, p):
    """p-th power of the sup distance between two trajectories on one grid."""
    if p < 1:
        raise ValueError("moment order p must be >= 1")
    if ref.grid != approx.grid or ref.states.shape != approx.states.shape:
        raise ValueError("trajectories must share a grid; coarsen first")
    gap = np.linalg.norm(ref.states - approx.states, axis=-1)
    return float(np.max(gap)) ** p


# ---------------------------------------------------------------------------
# Modulus of continuity.
# ---------------------------------------------------------------------------

def modulus_of_continuity(values, delta, horizon, step):
    """Largest oscillation over grid pairs closer than ``delta`` in time.

    ``values`` is a single path sampled on a uniform grid of spacing
    ``step``: shape ``(n_times,)`` for scalar paths or ``(n_times, d)``.
    Pairs are restricted to times at most ``horizon``.
    """
    if not 0 < delta <= horizon:
        raise ValueError("need 0 < delta <= horizon")
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] < 1:
        raise ValueError("empty grid")
    last = int(np.floor(horizon / step * (1 + 1e-12)))
    last = min(last, vals.shape[0] - 1)
    vals = vals[:last + 1]
    w = int(np.floor(delta / step * (1 + 1e-12)))
    w = min(w, vals.shape[0] - 1)
    if w == 0:
        return 0.0
    if vals.ndim == 1:
        return float(_window_ranges(vals[None, :], [w])[0][0])
    if vals.ndim == 2:
        if w * vals.shape[0] > 2 ** 24:
            raise ValueError("vector path too large for the pairwise scan")
        best = 0.0
        for off in range(1, w + 1):
            gap = np.linalg.norm(vals[off:] - vals[:-off], axis=-1)
            best = max(best, float(np.max(gap)))
        return best
    raise ValueError("values must be (n_times,) or (n_times, d)")


def _window_ranges(vals, windows):
    """Max minus min over sliding windows of ``w + 1`` samples, per path.

    ``vals`` has shape (paths, n_times); ``windows`` is an ascending list
    of span sizes ``w``. Returns one (paths,) array of sup ranges per
    window. Uses doubling sparse tables, built once and harvested as each
    requested window size is reached.
    """
    out = []
    tmax = vals
    tmin = vals
    size = 1
    for w in windows:
        length = w + 1
        while size * 2 <= length:
            tmax = np.maximum(tmax[:, :-size], tmax[:, size:])
            tmin = np.minimum(tmin[:, :-size], tmin[:, size:])
            size *= 2
        rem = length - size
        if rem == 0:
            rng = tmax - tmin
        else:
            n_out = vals.shape[1] - w
            rng = (np.maximum(tmax[:, :n_out], tmax[:, rem:rem + n_out])
                   - np.minimum(tmin[:, :n_out], tmin[:, rem:rem + n_out]))
        out.append(np.max(rng, axis=1))
    return out


def brownian_modulus_table(grid, levels, num_paths, master_seed, p=2.0,
                           chunk_paths=64):
    """Pooled L^p norm of the Brownian modulus at scales 1/n, per level."""
    levels = [int(n) for n in levels]
    windows = []
    for n in levels:
        w = int(np.floor(1.0 / (n * grid.step) * (1 + 1e-12)))
        if w < 1:
            raise ValueError(f"grid too coarse for level {n}")
        windows.append(w)
    order = np.argsort(windows)  # ascending windows for the shared tables
    sups = np.empty((len(levels), num_paths))
    for lo in range(0, num_paths, chunk_paths):
        hi = min(lo + chunk_paths, num_paths)
        inc = sample_increments(grid, master_seed, range(lo, hi), 1)[..., 0]
        w_vals = np.concatenate(
            [np.zeros((hi - lo, 1)), np.cumsum(inc, axis=1)], axis=1)
        ranges = _window_ranges(w_vals, [windows[i] for i in order])
        for pos, i in enumerate(order):
            sups[i, lo:hi] = ranges[pos]
    rows = []
    for i, n in enumerate(levels):
        err, se = _pooled_norm(sups[i], p)
        rows.append(ErrorRow(level=n, num_paths=num_paths, h_fine=grid.step,
                             error=err, stderr=se, p=p))
    return ErrorTable(rows=tuple(rows))


# ---------------------------------------------------------------------------
# Lockstep sweep engine.
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WeakRow:
    level: int
    num_paths: int
    functional: str
    value: float


def _default_chunk(num_paths):
    # One chunk by default: increments stream in time blocks, so resident
    # memory does not grow with the chunk, and fewer chunks means less
    # interpreter overhead in the step loop.
    return num_paths


def _sweep_paths(domain, coeffs, x0, grid, levels, num_paths, master_seed,
                 scheme, substeps, ref_steps, want_err, want_dist,
                 want_terminal, threads, chunk_paths,
                 ref_scheme="projected_euler"):
    """Integrate all levels (and the reference) along shared paths.

    Returns per-path sup errors, sup boundary distances and terminal states
    as requested; arrays are ordered by path index.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (domain.dim,):
        raise ValueError(f"x0 must have shape ({domain.dim},)")
    if not domain.contains(x0, tol.MEMBERSHIP_TOL):
        raise ValueError("x0 must lie in the domain closure")
    if coeffs.dim != domain.dim:
        raise ValueError("coefficient and domain dimensions differ")
    levels = [float(n) for n in levels]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be nonempty and strictly increasing")
    h = grid.step
    if scheme == "euler":
        bad = [n for n in levels if n * h > 1.0 + 1e-12]
        if bad:
            raise ValueError(
                f"explicit scheme is unstable for n*h > 1 at levels {bad}; "
                "use the splitting scheme or refine the grid"
            )
    elif scheme != "splitting":
        raise ValueError(f"unknown scheme {scheme!r}")
    if ref_scheme not in ("projected_euler", "halfline_map"):
        raise ValueError(f"unknown reference scheme {ref_scheme!r}")
    if ref_scheme == "halfline_map" and not isinstance(domain, HalfLine):
        raise ValueError("the half-line map reference needs a half-line domain")
    if ref_steps is not None:
        ref_steps = int(ref_steps)
        if ref_steps < grid.steps or ref_steps % grid.steps != 0:
            raise ValueError("reference grid must refine the sweep grid")

    chunk = chunk_paths or _default_chunk(num_paths)
    jobs = [(lo, min(lo + chunk, num_paths))
            for lo in range(0, num_paths, chunk)]

    def run(job):
        lo, hi = job
        return _run_chunk(domain, coeffs, x0, grid, levels, master_seed,
                          lo, hi, scheme, substeps, ref_steps,
                          want_err, want_dist, want_terminal, ref_scheme)

    if threads and threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]

    def cat(key):
        chunks = [p[key] for p in parts]
        return None if chunks[0] is None else np.concatenate(chunks, axis=1)

    result = {
        "sup_err": cat("sup_err"),
        "sup_dist": cat("sup_dist"),
        "terminal": cat("terminal"),
    }
    if want_terminal and ref_steps is not None:
        result["ref_terminal"] = np.concatenate(
            [p["ref_terminal"] for p in parts], axis=0)
    return result


def _run_chunk(domain, coeffs, x0, grid, levels, master_seed, lo, hi,
               scheme, substeps, ref_steps, want_err, want_dist,
               want_terminal, ref_scheme="projected_euler"):
    n_paths = hi - lo
    n_levels = len(levels)
    d = domain.dim
    m = grid.steps
    h = grid.step

    finest_steps = max(m, ref_steps or 1)
    finest = TimeGrid(grid.horizon, finest_steps)
    pen_factor = finest_steps // m
    period = (ref_steps // m) if ref_steps is not None else 0
    h_ref = grid.horizon / ref_steps if ref_steps is not None else 0.0

    if ref_steps is not None:
        x_ref = np.broadcast_to(x0, (n_paths, d)).copy()
        if ref_scheme == "halfline_map":
            ref_driver = x_ref[:, 0].copy()
            ref_deficit = np.zeros(n_paths)
    states = [np.broadcast_to(x0, (n_paths, d)).copy() for _ in levels]
    sup_err = np.zeros((n_levels, n_paths)) if want_err else None
    sup_dist = np.zeros((n_levels, n_paths)) if want_dist else None

    # Increments arrive in time blocks so resident memory stays flat no
    # matter how many paths share the chunk. Block boundaries align with
    # the coarsening factor, so the pairwise block sums match a whole-path
    # generation bitwise.
    block = max(1, 2 ** 21 // max(1, n_paths * d * pen_factor))
    paths = range(lo, hi)
    for b0 in range(0, m, block):
        b1 = min(b0 + block, m)
        inc_f = sample_increments(finest, master_seed, paths, d,
                                  step_lo=b0 * pen_factor,
                                  step_hi=b1 * pen_factor)
        inc_pen = halve_increments(inc_f, pen_factor)
        if ref_steps is not None:
            inc_ref = halve_increments(inc_f, finest_steps // ref_steps)
        for k in range(b0, b1):
            t = k * h
            if ref_steps is not None:
                for j in range(period):
                    t_ref = t + j * h_ref
                    dw_ref = inc_ref[:, (k - b0) * period + j]
                    if ref_scheme == "projected_euler":
                        x_ref, _ = projected_euler_step(domain, coeffs, t_ref,
                                                        x_ref, dw_ref, h_ref)
                    else:
                        # Incremental running-maximum reflection.
                        dy = np.einsum("...ij,...j->...i",
                                       coeffs.diffusion(t_ref, x_ref),
                                       dw_ref) \
                            + h_ref * coeffs.drift(t_ref, x_ref)
                        ref_driver = ref_driver + dy[:, 0]
                        np.maximum(ref_deficit, domain.lower - ref_driver,
                                   out=ref_deficit)
                        x_ref = (ref_driver + ref_deficit)[:, None]
            dw = inc_pen[:, k - b0]
            for i, n in enumerate(levels):
                if want_dist:
                    np.maximum(sup_dist[i], domain.distance(states[i]),
                               out=sup_dist[i])
                if scheme == "euler":
                    x_new, _ = euler_step(domain, coeffs, t, states[i],
                                          dw, h, n)
                else:
                    x_new, _ = splitting_step(domain, coeffs, t, states[i],
                                              dw, h, n, substeps)
                finite = np.isfinite(x_new).all(axis=-1)
                if not finite.all():
                    bad = int(np.argmin(finite))
                    raise IntegrationError(
                        f"non-finite state at step {k + 1}, level n = {n:g}, "
                        f"path {lo + bad}",
                        step_index=k + 1, path_index=lo + bad, level=n,
                    )
                states[i] = x_new
                if want_err:
                    gap = np.linalg.norm(x_new - x_ref, axis=-1)
                    np.maximum(sup_err[i], gap, out=sup_err[i])
    if want_dist:
        for i in range(n_levels):
            np.maximum(sup_dist[i], domain.distance(states[i]),
                       out=sup_dist[i])

    out = {
        "sup_err": sup_err,
        "sup_dist": sup_dist,
        "terminal": np.stack(states) if want_terminal else None,
    }
    if want_terminal and ref_steps is not None:
        out["ref_terminal"] = x_ref
    return out


def _pooled_norm(sups, p):
    """(mean of sup^p)^(1/p) and its delta-method standard error."""
    v = sups ** p
    n = v.shape[0]
    mean = float(np.sum(v) / n)
    if n > 1:
        var = float(np.sum((v - mean) ** 2) / (n - 1))
        se_mean = np.sqrt(var / n)
    else:
        se_mean = 0.0
    if mean <= 0.0:
        return 0.0, 0.0
    err = mean ** (1.0 / p)
    return err, float(se_mean / (p * mean ** ((p - 1.0) / p)))


def _tables(levels, sups, num_paths, h_fine, p_list):
    tables = {}
    for p in p_list:
        rows = []
        for i, n in enumerate(levels):
            err, se = _pooled_norm(sups[i], p)
            rows.append(ErrorRow(level=int(n), num_paths=num_paths,
                                 h_fine=h_fine, error=err, stderr=se, p=p))
        tables[p] = ErrorTable(rows=tuple(rows))
    return tables


def boundary_distance_sweep(domain, coeffs, x0, grid, levels, num_paths,
                            master_seed, p_list=(2.0,), scheme="splitting",
                            substeps=1, threads=1, chunk_paths=None):
    """L^p norms of the sup boundary distance of the penalized process."""
    res = _sweep_paths(domain, coeffs, x0, grid, levels, num_paths,
                       master_seed, scheme, substeps, ref_steps=None,
                       want_err=False, want_dist=True, want_terminal=False,
                       threads=threads, chunk_paths=chunk_paths)
    return _tables(levels, res["sup_dist"], num_paths, grid.step, p_list)


def strong_error_sweep(domain, coeffs, x0, grid, levels, num_paths,
                       master_seed, p_list=(2.0,), scheme="splitting",
                       substeps=1, reference_steps=None, threads=1,
                       chunk_paths=None, reference_scheme="projected_euler"):
    """L^p norms of the pathwise sup gap to the reflected reference."""
    ref_steps = reference_steps or grid.steps
    res = _sweep_paths(domain, coeffs, x0, grid, levels, num_paths,
                       master_seed, scheme, substeps, ref_steps=ref_steps,
                       want_err=True, want_dist=False, want_terminal=False,
                       threads=threads, chunk_paths=chunk_paths,
                       ref_scheme=reference_scheme)
    return _tables(levels, res["sup_err"], num_paths, grid.step, p_list)


_WEAK_FUNCTIONALS = ("mean", "second_moment", "cdf")


def weak_compare(domain, coeffs, levels, grid, num_paths, functional, x0,
                 master_seed, scheme="splitting", substeps=1,
                 reference_steps=None, threads=1, chunk_paths=None,
                 reference_scheme="projected_euler"):
    """Distance of a terminal-value functional to the reference, per level.

    Functionals: ``mean`` (norm of the mean difference), ``second_moment``
    (absolute difference of mean squared norms) and ``cdf`` (two-sample
    sup distance of the empirical CDFs, one-dimensional only).
    """
    if functional not in _WEAK_FUNCTIONALS:
        raise ValueError(f"unknown functional {functional!r}")
    if functional == "cdf" and domain.dim != 1:
        raise ValueError("the CDF distance requires dimension 1")
    ref_steps = reference_steps or grid.steps
    res = _sweep_paths(domain, coeffs, x0, grid, levels, num_paths,
                       master_seed, scheme, substeps, ref_steps=ref_steps,
                       want_err=False, want_dist=False, want_terminal=True,
                       threads=threads, chunk_paths=chunk_paths,
                       ref_scheme=reference_scheme)
    terminal = res["terminal"]          # (L, P, d)
    ref_terminal = res["ref_terminal"]  # (P, d)
    rows = []
    for i, n in enumerate(levels):
        if functional == "mean":
            value = float(np.linalg.norm(
                terminal[i].mean(axis=0) - ref_terminal.mean(axis=0)))
        elif functional == "second_moment":
            value = float(abs(np.mean(np.sum(terminal[i] ** 2, axis=-1))
                              - np.mean(np.sum(ref_terminal ** 2, axis=-1))))
        else:
            value = _cdf_distance(terminal[i][:, 0], ref_terminal[:, 0])
        rows.append(WeakRow(level=int(n), num_paths=num_paths,
                            functional=functional, value=value))
    return tuple(rows)


def _cdf_distance(a, b):
    a = np.sort(a)
    b = np.sort(b)
    grid_pts = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid_pts, side="right") / a.shape[0]
    cdf_b = np.searchsorted(b, grid_pts, side="right") / b.shape[0]
    return float(np.max(np.abs(cdf_a - cdf_b)))
