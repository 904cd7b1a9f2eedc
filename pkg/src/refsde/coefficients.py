"""Drift/diffusion coefficient pairs, a small named catalog, and
sampling-based diagnostics for linear growth and Lipschitz continuity.

A coefficient field packages two pure callables: ``diffusion(t, x)``
returning a d x d matrix and ``drift(t, x)`` returning a d-vector. Both
must broadcast over leading batch axes of ``x`` (shape ``(..., d)``); a
state-independent diffusion may return a constant ``(d, d)`` array. Matrix
size is measured in the Frobenius norm throughout.

The growth/Lipschitz checks certify declared constants on a sampled box
only; the hypotheses themselves are global and the coefficients are opaque
callables, so the reports record the box that was probed.
"""

from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np

from . import tolerances as tol

__all__ = [
    "CoefficientField",
    "CatalogEntry",
    "CATALOG",
    "GrowthReport",
    "LipschitzReport",
    "make_coefficients",
    "check_linear_growth",
    "check_lipschitz",
]


@dataclass(frozen=True)
class CoefficientField:
    name: str
    dim: int
    diffusion: Callable[[float, np.ndarray], np.ndarray]
    drift: Callable[[float, np.ndarray], np.ndarray]
    growth_constant: Optional[float] = None
    lipschitz_constant: Optional[float] = None


@dataclass(frozen=True)
class GrowthReport:
    """Outcome of a sampled linear-growth check."""

    passed: bool
    max_ratio: float
    constant: float
    box_radius: float
    samples: int
    violating_point: Optional[tuple] = None  # (t, x)


@dataclass(frozen=True)
class LipschitzReport:
    """Outcome of a sampled Lipschitz check."""

    passed: bool
    max_quotient: float
    constant: float
    box_radius: float
    samples: int
    violating_pair: Optional[tuple] = None  # (t, x, y)


# ---------------------------------------------------------------------------
# Catalog entries. All are autonomous; t is threaded through regardless.
# ---------------------------------------------------------------------------

def _ou_diffusion(sigma0, t, x):
    return np.array([[sigma0]])


def _ou_drift(kappa, t, x):
    return -kappa * x


def _clipped_diag_diffusion(sigma0, cap, t, x):
    d = x.shape[-1]
    out = np.zeros(x.shape + (d,))
    rng = np.arange(d)
    out[..., rng, rng] = sigma0 * np.clip(x, -cap, cap)
    return out


def _linear_drift(mu, t, x):
    return mu * x


def _sin_coupled_diffusion(amplitude, t, x):
    out = np.zeros(x.shape + (2,))
    out[..., 0, 0] = 1.0
    out[..., 1, 1] = 1.0
    out[..., 0, 1] = amplitude * np.sin(x[..., 1])
    out[..., 1, 0] = amplitude * np.sin(x[..., 0])
    return out


def _cos_drift(scale, t, x):
    out = np.empty_like(x)
    out[..., 0] = scale * np.cos(x[..., 1])
    out[..., 1] = scale * np.cos(x[..., 0])
    return out


def _two_level_diffusion(low, high, threshold, t, x):
    return np.where(x < threshold, low, high)[..., None]


def _zero_drift(t, x):
    return np.zeros_like(x)


def _build_ou1d(kappa=1.0, sigma0=1.0):
    return CoefficientField(
        name="ou1d",
        dim=1,
        diffusion=partial(_ou_diffusion, float(sigma0)),
        drift=partial(_ou_drift, float(kappa)),
        growth_constant=max(sigma0 ** 2, kappa ** 2),
        lipschitz_constant=kappa ** 2,
    )


def _build_gbm_box(mu=0.05, sigma0=0.3, cap=10.0):
    return CoefficientField(
        name="gbm-box",
        dim=2,
        diffusion=partial(_clipped_diag_diffusion, float(sigma0), float(cap)),
        drift=partial(_linear_drift, float(mu)),
        growth_constant=sigma0 ** 2 + mu ** 2,
        lipschitz_constant=sigma0 ** 2 + mu ** 2,
    )


def _build_quadrant2d(amplitude=0.1, drift_scale=0.5):
    # Frobenius bound: |sigma|^2 <= 2 + 2*amplitude^2, |b|^2 <= 2*drift_scale^2.
    growth = 2.0 + 2.0 * amplitude ** 2 + 2.0 * drift_scale ** 2
    return CoefficientField(
        name="quadrant2d",
        dim=2,
        diffusion=partial(_sin_coupled_diffusion, float(amplitude)),
        drift=partial(_cos_drift, float(drift_scale)),
        growth_constant=growth,
        lipschitz_constant=amplitude ** 2 + drift_scale ** 2,
    )


def _build_schmidt1d(sigma_low=1.0, sigma_high=2.0, threshold=1.0):
    return CoefficientField(
        name="schmidt1d",
        dim=1,
        diffusion=partial(_two_level_diffusion, float(sigma_low),
                          float(sigma_high), float(threshold)),
        drift=_zero_drift,
        growth_constant=max(sigma_low, sigma_high) ** 2,
        lipschitz_constant=None,
    )


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    dim: int
    tags: frozenset
    build: Callable[..., CoefficientField]
    defaults: dict = field(default_factory=dict)


CATALOG = {
    "ou1d": CatalogEntry(
        name="ou1d", dim=1, tags=frozenset({"lipschitz"}),
        build=_build_ou1d, defaults={"kappa": 1.0, "sigma0": 1.0},
    ),
    "gbm-box": CatalogEntry(
        name="gbm-box", dim=2, tags=frozenset({"lipschitz", "degenerate"}),
        build=_build_gbm_box, defaults={"mu": 0.05, "sigma0": 0.3, "cap": 10.0},
    ),
    "quadrant2d": CatalogEntry(
        name="quadrant2d", dim=2, tags=frozenset({"lipschitz"}),
        build=_build_quadrant2d, defaults={"amplitude": 0.1, "drift_scale": 0.5},
    ),
    "schmidt1d": CatalogEntry(
        name="schmidt1d", dim=1, tags=frozenset({"discontinuous"}),
        build=_build_schmidt1d,
        defaults={"sigma_low": 1.0, "sigma_high": 2.0, "threshold": 1.0},
    ),
}


def make_coefficients(name, **params):
    """Instantiate a catalog entry by name with optional parameter overrides."""
    if name not in CATALOG:
        raise ValueError(f"unknown coefficient catalog entry {name!r}")
    entry = CATALOG[name]
    unknown = set(params) - set(entry.defaults)
    if unknown:
        raise ValueError(
            f"unknown parameters for {name!r}: {sorted(unknown)}"
        )
    merged = {**entry.defaults, **params}
    return entry.build(**merged)


# ---------------------------------------------------------------------------
# Sampled-hypothesis diagnostics.
# ---------------------------------------------------------------------------

def _eval_field(field_, t, x):
    sig = np.asarray(field_.diffusion(t, x), dtype=float)
    b = np.asarray(field_.drift(t, x), dtype=float)
    d = field_.dim
    sig = np.broadcast_to(sig, x.shape + (d,))
    b = np.broadcast_to(b, x.shape)
    if not np.all(np.isfinite(sig)) or not np.all(np.isfinite(b)):
        bad = np.argmax(~(np.all(np.isfinite(sig), axis=(-2, -1))
                          & np.all(np.isfinite(b), axis=-1)))
        raise ValueError(
            f"non-finite coefficient output at t={t}, x={x.reshape(-1, d)[bad]}"
        )
    return sig, b


def check_linear_growth(field_, constant, samples=10_000, box_radius=10.0,
                        rng_seed=0):
    """Probe (|sigma|^2 + |b|^2) / (1 + |x|^2) on a sampled box.

    Passes when the sampled maximum is at most ``constant`` (with relative
    slack 1e-9). Time is sampled from a small set of values in [0, 1].
    """
    if constant <= 0:
        raise ValueError("growth constant must be positive")
    samples = int(samples)
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng_seed)
    t_values = rng.uniform(0.0, 1.0, size=16)
    per_t = -(-samples // len(t_values))

    max_ratio = -np.inf
    worst = None
    for t in t_values:
        x = rng.uniform(-box_radius, box_radius, size=(per_t, field_.dim))
        sig, b = _eval_field(field_, float(t), x)
        ratio = (np.sum(sig ** 2, axis=(-2, -1)) + np.sum(b ** 2, axis=-1)) \
            / (1.0 + np.sum(x ** 2, axis=-1))
        k = int(np.argmax(ratio))
        if ratio[k] > max_ratio:
            max_ratio = float(ratio[k])
            worst = (float(t), x[k].copy())
    passed = max_ratio <= constant * (1.0 + tol.COEFFICIENT_SLACK)
    return GrowthReport(
        passed=passed, max_ratio=max_ratio, constant=float(constant),
        box_radius=float(box_radius), samples=samples,
        violating_point=None if passed else worst,
    )


def check_lipschitz(field_, constant, samples=10_000, box_radius=10.0,
                    rng_seed=0):
    """Probe the squared-difference quotient on sampled point pairs.

    A third of the pairs are independent uniforms; the rest are small
    perturbations at two scales, so straddling pairs around a
    discontinuity are found. Pairs closer than ``1e-6 * box_radius`` are
    discarded: below that the quotient is dominated by floating-point
    cancellation rather than the coefficients. As a consequence a declared
    constant far above the sampling resolution can pass spuriously; the
    report records the box and sample count that were actually probed.
    """
    if constant <= 0:
        raise ValueError("Lipschitz constant must be positive")
    samples = int(samples)
    if samples < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng_seed)
    t_values = rng.uniform(0.0, 1.0, size=16)
    per_t = -(-samples // len(t_values))
    floor_sq = (1e-6 * box_radius) ** 2

    max_quotient = -np.inf
    worst = None
    for t in t_values:
        x = rng.uniform(-box_radius, box_radius, size=(per_t, field_.dim))
        y = np.empty_like(x)
        third = per_t // 3
        y[:third] = rng.uniform(-box_radius, box_radius, size=(third, field_.dim))
        y[third:2 * third] = x[third:2 * third] \
            + 1e-3 * box_radius * rng.standard_normal((third, field_.dim))
        y[2 * third:] = x[2 * third:] \
            + 1e-5 * box_radius * rng.standard_normal((per_t - 2 * third, field_.dim))
        gap = np.sum((x - y) ** 2, axis=-1)
        keep = gap > floor_sq
        x, y, gap = x[keep], y[keep], gap[keep]
        sig_x, b_x = _eval_field(field_, float(t), x)
        sig_y, b_y = _eval_field(field_, float(t), y)
        quot = (np.sum((sig_x - sig_y) ** 2, axis=(-2, -1))
                + np.sum((b_x - b_y) ** 2, axis=-1)) / gap
        k = int(np.argmax(quot))
        if quot[k] > max_quotient:
            max_quotient = float(quot[k])
            worst = (float(t), x[k].copy(), y[k].copy())
    passed = max_quotient <= constant * (1.0 + tol.COEFFICIENT_SLACK)
    return LipschitzReport(
        passed=passed, max_quotient=max_quotient, constant=float(constant),
        box_radius=float(box_radius), samples=samples,
        violating_pair=None if passed else worst,
    )
