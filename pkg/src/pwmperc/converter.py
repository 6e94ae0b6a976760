"""Behavioral voltage-to-PWM conversion.

Two models of the ring-oscillator output stage:

* raw: the uncompensated oscillator. Affine-ish decreasing duty over the
  linear input region (fractions of vdd); outside that region the oscillator
  stalls and the result is the distinguishable NO_OSCILLATION value, never a
  silent 0 or 1.
* compensated: the cubic stage model fitted to the full perceptron
  (duty-in -> duty-out at max weights), with the output capped at 98%.

Also the cubic least-squares fit used to recover stage models from response
data, and fixed-point analysis of the stage map (which explains where chained
stages contract and where they saturate).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NO_OSCILLATION",
    "is_no_oscillation",
    "ConverterModel",
    "FitResult",
    "FixedPoint",
    "FixedPointScan",
    "stage_map",
    "stage_map_deriv",
    "v_to_dc",
    "fit_cubic",
    "find_fixed_points",
]

# Default compensated-stage cubic, percent output vs normalized input.
DEFAULT_COEFFS = (107.27, -53.25, 52.92, 13.44)
DEFAULT_OUTPUT_CAP = 98.0
# Raw-oscillator linear region as fractions of vdd (0.7 V and 2.3 V at 2.5 V).
DEFAULT_LINEAR_REGION = (0.28, 0.92)
# Synthetic calibration duties at the edges of the linear region.
RAW_EDGE_DUTIES = (0.9, 0.1)


class _NoOscillation:
    """Marker for a stalled oscillator (constant output, no duty cycle)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "NO_OSCILLATION"

    def __bool__(self):
        return False


NO_OSCILLATION = _NoOscillation()


def is_no_oscillation(value) -> bool:
    return value is NO_OSCILLATION


@dataclass(frozen=True)
class ConverterModel:
    """Voltage -> duty-cycle transfer model of the output stage."""

    mode: str = "compensated"                       # "raw" | "compensated"
    coefficients: tuple[float, float, float, float] = DEFAULT_COEFFS  # percent
    output_cap: float = DEFAULT_OUTPUT_CAP          # percent
    linear_region: tuple[float, float] = DEFAULT_LINEAR_REGION  # fractions of vdd

    def __post_init__(self):
        if self.mode not in ("raw", "compensated"):
            raise ValueError(f"unknown converter mode {self.mode!r}")
        lo, hi = self.linear_region
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError(f"bad linear region {self.linear_region}")

    @classmethod
    def compensated(cls) -> "ConverterModel":
        return cls(mode="compensated")

    @classmethod
    def raw(cls) -> "ConverterModel":
        return cls(mode="raw")

    @classmethod
    def identity(cls) -> "ConverterModel":
        """Ideal stage (out == in), used as a degenerate reference."""
        return cls(mode="compensated", coefficients=(0.0, 0.0, 100.0, 0.0),
                   output_cap=100.0)

    def cubic_percent(self, x):
        """Raw cubic in percent, no capping. Accepts scalars or arrays."""
        c3, c2, c1, c0 = self.coefficients
        return ((c3 * x + c2) * x + c1) * x + c0

    def cap_entry(self) -> float:
        """Smallest x in [0, 1] where the cubic reaches the output cap.

        Returns 1.0 if the cubic stays below the cap on the whole interval.
        Bisection on the (continuous) cubic; cached per model.
        """
        cached = _CAP_ENTRY_CACHE.get((self.coefficients, self.output_cap))
        if cached is not None:
            return cached
        f = lambda x: self.cubic_percent(x) - self.output_cap
        entry = 1.0
        if f(1.0) > 0.0:
            xs = np.linspace(0.0, 1.0, 1001)
            vals = f(xs)
            idx = np.nonzero(vals > 0.0)[0]
            if len(idx) and idx[0] > 0:
                lo, hi = xs[idx[0] - 1], xs[idx[0]]
                for _ in range(60):
                    mid = 0.5 * (lo + hi)
                    if f(mid) > 0.0:
                        hi = mid
                    else:
                        lo = mid
                entry = 0.5 * (lo + hi)
            elif len(idx):
                entry = 0.0
        _CAP_ENTRY_CACHE[(self.coefficients, self.output_cap)] = entry
        return entry


_CAP_ENTRY_CACHE: dict = {}


def stage_map(x: float, model: ConverterModel | None = None) -> float:
    """Duty-in -> duty-out of one compensated stage, as a fraction.

    min(cubic(x), cap)/100, clamped below at 0. Vectorized over arrays.
    """
    model = model or ConverterModel.compensated()
    if model.mode != "compensated":
        raise ValueError("stage_map is defined for compensated models")
    y = np.minimum(model.cubic_percent(x), model.output_cap)
    y = np.maximum(y, 0.0) / 100.0
    return float(y) if np.isscalar(x) else y


def stage_map_deriv(x: float, model: ConverterModel | None = None) -> float:
    """d(stage_map)/dx; zero inside the capped or floored regions."""
    model = model or ConverterModel.compensated()
    c3, c2, c1, _ = model.coefficients
    raw = ((3.0 * c3 * x + 2.0 * c2) * x + c1) / 100.0
    uncapped = model.cubic_percent(x)
    inside = (uncapped < model.output_cap) & (uncapped > 0.0)
    y = np.where(inside, raw, 0.0)
    return float(y) if np.isscalar(x) else y


def v_to_dc(v: float, vdd: float, model: ConverterModel):
    """Capacitor voltage -> output duty cycle.

    compensated: recovers the normalized weighted sum as 1 - v/vdd and applies
    the cubic stage map. raw: piecewise-linear decreasing map over the linear
    region, calibrated at (0.28*vdd -> 0.9), (0.5*vdd -> 0.5), (0.92*vdd ->
    0.1); outside the region the oscillator stalls and NO_OSCILLATION is
    returned.
    """
    if vdd <= 0:
        raise ValueError(f"vdd must be > 0, got {vdd}")
    if model.mode == "compensated":
        x = 1.0 - v / vdd
        return stage_map(min(max(x, 0.0), 1.0), model)
    lo, hi = model.linear_region
    frac = v / vdd
    if frac < lo - 1e-12 or frac > hi + 1e-12:
        return NO_OSCILLATION
    frac = min(max(frac, lo), hi)
    d_lo, d_hi = RAW_EDGE_DUTIES
    # two-segment monotone map hitting the midpoint calibration exactly
    if frac <= 0.5:
        return d_lo + (0.5 - d_lo) * (frac - lo) / (0.5 - lo)
    return 0.5 + (d_hi - 0.5) * (frac - 0.5) / (hi - 0.5)


@dataclass(frozen=True)
class FitResult:
    coefficients: tuple[float, float, float, float]  # (c3, c2, c1, c0), y units
    r_squared: float


def fit_cubic(xs, ys) -> FitResult:
    """Least-squares cubic through (xs, ys) plus R^2 on the same data.

    R^2 = 1 - SS_res/SS_tot; defined as 0 when ys is constant (SS_tot == 0).
    Needs at least 4 distinct xs for a well-posed design matrix.
    """
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if len(np.unique(xs)) < 4:
        raise ValueError(f"need >= 4 distinct xs, got {len(np.unique(xs))}")
    design = np.vander(xs, 4)  # columns x^3, x^2, x, 1
    coeffs, *_ = np.linalg.lstsq(design, ys, rcond=None)
    fitted = design @ coeffs
    ss_res = float(np.sum((ys - fitted) ** 2))
    ss_tot = float(np.sum((ys - np.mean(ys)) ** 2))
    r2 = 0.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(tuple(float(c) for c in coeffs), r2)


@dataclass(frozen=True)
class FixedPoint:
    x: float
    stability: str  # "stable" | "unstable"


@dataclass(frozen=True)
class FixedPointScan:
    points: tuple[FixedPoint, ...]
    degenerate_interval: tuple[float, float] | None = None

    @property
    def degenerate(self) -> bool:
        return self.degenerate_interval is not None


def find_fixed_points(model: ConverterModel | None = None,
                      grid_step: float = 1e-4,
                      tol: float = 1e-6) -> FixedPointScan:
    """Roots of stage_map(x) == x in [0, 1] with local stability.

    Sign-change bisection on a grid_step grid, refined to tol. Stability from
    |stage_map'| at the root (< 1 means iterates converge locally). An
    identity-like model (map == x over a stretch of the grid) has no isolated
    roots; the whole interval is reported as degenerate instead.
    """
    model = model or ConverterModel.compensated()
    xs = np.arange(0.0, 1.0 + grid_step / 2, grid_step)
    resid = stage_map(xs, model) - xs

    on_grid = np.abs(resid) <= 1e-12
    if np.count_nonzero(on_grid) > len(xs) // 2:
        idx = np.nonzero(on_grid)[0]
        interval = (float(xs[idx[0]]), float(xs[idx[-1]]))
        return FixedPointScan(points=(), degenerate_interval=interval)

    points: list[FixedPoint] = []

    def add(root: float):
        deriv = abs(stage_map_deriv(root, model))
        stability = "stable" if deriv < 1.0 else "unstable"
        if not any(abs(p.x - root) <= 10 * tol for p in points):
            points.append(FixedPoint(float(root), stability))

    for i in range(len(xs) - 1):
        a, b = float(xs[i]), float(xs[i + 1])
        fa, fb = float(resid[i]), float(resid[i + 1])
        if fa == 0.0:
            add(a)
            continue
        if fa * fb < 0.0:
            f = lambda x: stage_map(x, model) - x
            while b - a > tol:
                mid = 0.5 * (a + b)
                if f(a) * f(mid) <= 0.0:
                    b = mid
                else:
                    a = mid
            add(0.5 * (a + b))
    if len(resid) and abs(resid[-1]) == 0.0:
        add(float(xs[-1]))
    return FixedPointScan(points=tuple(points))
