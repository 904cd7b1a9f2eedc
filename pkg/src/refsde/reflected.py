"""Reference solutions of the reflected SDE and Skorokhod-contract checks.

The reflected process decomposes as ``X = Y + K`` where ``Y`` is the
unconstrained driver and ``K`` the regulator: ``X`` stays in the domain
closure, ``K`` has bounded variation, points along inward normals, and
grows only while ``X`` sits on the boundary.

Two constructions are provided. ``skorokhod_map_halfline`` is the exact
discrete one-sided reflection (running-maximum formula) for a half-line.
``projected_euler`` projects every Euler update back onto the domain and
records the projection displacements as the regulator; on a half-line it
coincides with the running-maximum construction applied to its own
realized driver, which is used as a cross-validation oracle.

``verify_skorokhod`` turns the contract into four nonnegative diagnostics
so that any trajectory claiming to solve the problem can be audited.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .brownian import TimeGrid
from .errors import IntegrationError
from .geometry import ConvexDomain, HalfLine, sample_points
from . import tolerances as tol

__all__ = [
    "ReflectedTrajectory",
    "SkorokhodReport",
    "skorokhod_map_halfline",
    "projected_euler",
    "verify_skorokhod",
]


@dataclass(frozen=True)
class ReflectedTrajectory:
    grid: Optional[TimeGrid]
    domain: ConvexDomain
    states: np.ndarray      # (M+1, d), inside the domain closure
    regulator: np.ndarray   # (M+1, d), cumulative K
    variation: np.ndarray   # (M+1,), cumulative |K|, nondecreasing
    driver: np.ndarray      # (M+1, d), cumulative unconstrained input Y


@dataclass(frozen=True)
class SkorokhodReport:
    """Nonnegative contract diagnostics; all near zero for a valid solution.

    containment_violation: max distance of the states to the domain closure.
    flatness_violation: regulator variation accrued while the state was
        farther than ``boundary_tol`` from the boundary.
    direction_violation: worst violation of the inward-normal inequality
        ``<y - X_k, dK_k / |dK_k|> >= 0`` over sampled domain points, for
        steps with ``|dK_k| > flat_tol`` (unit length scale).
    decomposition_residual: max of ``|X_k - driver_k - K_k|``.
    """

    containment_violation: float
    flatness_violation: float
    direction_violation: float
    decomposition_residual: float


def skorokhod_map_halfline(driver, lower_bound, grid=None):
    """Exact one-sided reflection of a discrete driver above ``lower_bound``.

    ``X_k = Y_k + max(0, max_{j<=k}(a - Y_j))`` and ``K = X - Y``; the
    regulator is the smallest nondecreasing process keeping ``X >= a``.
    The map works on any discrete driver; ``grid`` is metadata and may be
    omitted.
    """
    y = np.asarray(driver, dtype=float)
    if y.ndim != 1:
        raise ValueError("driver must be a 1-d array of path values")
    if grid is not None and y.shape[0] != grid.steps + 1:
        raise ValueError("driver length must match the grid")
    if y[0] < lower_bound:
        raise ValueError("driver must start inside the half-line")
    deficit = np.maximum.accumulate(np.maximum(lower_bound - y, 0.0))
    x = y + deficit
    return ReflectedTrajectory(
        grid=grid,
        domain=HalfLine(lower=lower_bound),
        states=x[:, None],
        regulator=deficit[:, None],
        variation=deficit.copy(),
        driver=y[:, None],
    )


def projected_euler_step(domain, coeffs, t, x, dw, h):
    """One projected Euler update; returns (next state, driver increment)."""
    dy = np.einsum("...ij,...j->...i", coeffs.diffusion(t, x), dw) \
        + h * coeffs.drift(t, x)
    return domain.project(x + dy), dy


def projected_euler(domain, coeffs, path, x0):
    """Reference reflected trajectory: project each Euler update back.

    The regulator collects the projection displacements; the realized
    driver (initial point plus accumulated unconstrained increments) is
    stored so the Skorokhod contract can be verified against it.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (domain.dim,):
        raise ValueError(f"x0 must have shape ({domain.dim},)")
    if not domain.contains(x0, tol.MEMBERSHIP_TOL):
        raise ValueError("x0 must lie in the domain closure")
    grid = path.grid
    m, d = grid.steps, domain.dim
    h = grid.step

    states = np.empty((m + 1, d))
    regulator = np.zeros((m + 1, d))
    variation = np.zeros(m + 1)
    driver = np.empty((m + 1, d))
    states[0] = x0
    driver[0] = x0
    x = x0
    for k in range(m):
        x_next, dy = projected_euler_step(domain, coeffs, k * h, x,
                                          path.increments[k], h)
        if not np.all(np.isfinite(x_next)):
            raise IntegrationError(
                f"non-finite state at step {k + 1}", step_index=k + 1,
            )
        dk = x_next - (x + dy)
        states[k + 1] = x_next
        driver[k + 1] = driver[k] + dy
        regulator[k + 1] = regulator[k] + dk
        variation[k + 1] = variation[k] + np.linalg.norm(dk)
        x = x_next
    return ReflectedTrajectory(grid=grid, domain=domain, states=states,
                               regulator=regulator, variation=variation,
                               driver=driver)


def verify_skorokhod(traj, driver=None, boundary_tol=tol.BOUNDARY_TOL,
                     flat_tol=tol.FLATNESS_TOL, num_samples=1000, seed=7):
    """Audit a trajectory against the Skorokhod-problem contract.

    ``driver`` defaults to the trajectory's stored driver. The variation
    increment over a step is attributed to the step's endpoint state (the
    point placed on the boundary by the reflection). Direction violations
    are measured against ``num_samples`` strictly interior points drawn
    deterministically from ``seed``.
    """
    domain = traj.domain
    x = traj.states
    k_proc = traj.regulator
    if driver is None:
        driver = traj.driver
    driver = np.asarray(driver, dtype=float)
    if driver.shape != x.shape:
        raise ValueError("driver and states have mismatched grids")

    containment = float(np.max(domain.distance(x)))
    decomposition = float(np.max(np.linalg.norm(x - driver - k_proc, axis=-1)))

    dk = np.diff(k_proc, axis=0)                      # (M, d)
    dk_norm = np.linalg.norm(dk, axis=-1)
    dvar = np.diff(traj.variation)
    off_boundary = domain.boundary_distance(x[1:]) > boundary_tol
    flatness = float(np.sum(dvar[off_boundary]))

    moving = dk_norm > flat_tol
    direction = 0.0
    if np.any(moving):
        pts = sample_points(domain, num_samples, seed, interior=True)
        anchors = x[1:][moving]
        dirs = dk[moving] / dk_norm[moving][:, None]
        chunk = max(1, 2 ** 22 // num_samples)
        for lo in range(0, anchors.shape[0], chunk):
            a = anchors[lo:lo + chunk]
            u = dirs[lo:lo + chunk]
            # <y - x, u> for all sampled y: (pts @ u.T) - rowwise <x, u>
            inner = pts @ u.T - np.sum(a * u, axis=-1)
            worst = -float(np.min(inner))
            direction = max(direction, worst)
        direction = max(0.0, direction)

    return SkorokhodReport(
        containment_violation=containment,
        flatness_violation=flatness,
        direction_violation=direction,
        decomposition_residual=decomposition,
    )
