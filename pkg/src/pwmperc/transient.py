"""Event-driven piecewise-exponential RC solver for the weighted VAC.

Between input edges the cell bank is a fixed resistive network: every unit
cell is a resistor to the supply (input low, or cell disabled) or to ground
(input high), so the capacitor follows the exact exponential toward the
instantaneous divider equilibrium. Segments are solved analytically - there is
no global timestep and no integration error for constant supplies. A
time-varying supply is zero-order-held over sub-steps of at most 1/200 of its
period.

The optional compensation clamp floors the capacitor voltage at the PMOS
threshold: a segment whose exponential would cross below the threshold is
split at the crossing and held flat afterwards.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import WeightVector
from .signals import ConstantSupply, PwmSignal, SupplyProfile

__all__ = [
    "VacConfig",
    "TransientTrace",
    "TraceMetrics",
    "VacStimulus",
    "SweepPoint",
    "FloatingNodeError",
    "simulate_vac",
    "trace_metrics",
    "sweep",
    "default_horizon",
]


class FloatingNodeError(ValueError):
    """All cells disabled with the clamp off: the output node floats."""


@dataclass(frozen=True)
class VacConfig:
    """Circuit parameters of one weighted-addition voltage accumulator."""

    n: int                              # input count
    k: int                              # weight bits per input
    r_unit: float                       # ohms, output resistor of a x1 cell
    c_out: float                        # farads
    compensation_threshold: float = 0.0  # volts; 0 disables the clamp

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError(f"need n >= 1 and k >= 1, got n={self.n} k={self.k}")
        if self.r_unit <= 0 or self.c_out <= 0:
            raise ValueError("r_unit and c_out must be > 0")
        if self.compensation_threshold < 0:
            raise ValueError("compensation_threshold must be >= 0")

    @classmethod
    def small(cls, n: int = 3, k: int = 3, compensation_threshold: float = 0.0) -> "VacConfig":
        return cls(n=n, k=k, r_unit=100e3, c_out=10e-12,
                   compensation_threshold=compensation_threshold)

    @classmethod
    def large(cls, n: int = 3, k: int = 3, compensation_threshold: float = 0.0) -> "VacConfig":
        return cls(n=n, k=k, r_unit=1e6, c_out=100e-12,
                   compensation_threshold=compensation_threshold)

    @property
    def total_units(self) -> int:
        return self.n * (2 ** self.k - 1)

    @property
    def tau(self) -> float:
        """RC time constant of the full bank (all unit cells conducting)."""
        return self.c_out * self.r_unit / self.total_units


@dataclass
class TransientTrace:
    """Per-segment exact solution plus sampled waveform.

    seg_* arrays describe half-open segments [t0, t1) on which the capacitor
    voltage is either the exponential from seg_v0 toward seg_veq with the
    config's tau, or (seg_clamped) the constant threshold voltage.
    """

    times: np.ndarray          # event boundaries plus uniform samples
    v_cap: np.ndarray
    vdd: np.ndarray            # supply value at `times`
    events: np.ndarray         # merged input-edge timestamps
    tau: float
    g_unit: float              # conductance of one unit cell, 1/r_unit
    seg_t0: np.ndarray
    seg_t1: np.ndarray
    seg_v0: np.ndarray
    seg_v1: np.ndarray
    seg_veq: np.ndarray
    seg_vdd: np.ndarray
    seg_up: np.ndarray         # unit cells pulling up
    seg_dn: np.ndarray         # unit cells pulling down
    seg_clamped: np.ndarray    # bool

    @property
    def horizon(self) -> float:
        return float(self.seg_t1[-1])

    def value_at(self, t: float) -> float:
        """Exact capacitor voltage at any time inside the horizon."""
        if not 0.0 <= t <= self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        i = int(np.searchsorted(self.seg_t0, t, side="right") - 1)
        i = max(i, 0)
        if self.seg_clamped[i]:
            return float(self.seg_v0[i])
        dt = t - self.seg_t0[i]
        veq = self.seg_veq[i]
        return float(veq + (self.seg_v0[i] - veq) * math.exp(-dt / self.tau))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("time_s,v_cap_V,vdd_V\n")
            for t, v, s in zip(self.times, self.v_cap, self.vdd):
                fh.write(f"{float(t)!r},{float(v)!r},{float(s)!r}\n")


@dataclass(frozen=True)
class TraceMetrics:
    """Steady-state cycle metrics of a transient run."""

    average_v: float
    swing: float               # steady-state max - min
    charge_time: float | None  # first crossing of average_v from v0; None if never
    avg_power: float           # mean supply-delivered power over the window
    reliable: bool             # steady-state drift criterion satisfied
    drift: float = 0.0


def simulate_vac(cfg: VacConfig,
                 inputs: list[PwmSignal],
                 w: WeightVector,
                 supply: SupplyProfile,
                 horizon: float,
                 v0: float = 0.0,
                 n_uniform_samples: int = 512) -> TransientTrace:
    """Solve the capacitor voltage over [0, horizon].

    Fails fast on a floating node (all weights zero, clamp off) and on an
    input-count mismatch. v0 must sit inside [0, max supply].
    """
    if len(inputs) != cfg.n:
        raise ValueError(f"config expects {cfg.n} inputs, got {len(inputs)}")
    if w.n != cfg.n or w.k != cfg.k:
        raise ValueError(f"weight vector ({w.n} inputs, k={w.k}) does not match "
                         f"config (n={cfg.n}, k={cfg.k})")
    if horizon <= 0:
        raise ValueError(f"horizon must be > 0, got {horizon}")
    if not 0.0 <= v0 <= supply.max_value():
        raise ValueError(f"v0={v0} outside [0, {supply.max_value()}]")
    if cfg.compensation_threshold >= supply.min_value():
        raise ValueError(
            f"compensation threshold {cfg.compensation_threshold} V must stay "
            f"below the supply (min {supply.min_value()} V)")
    if all(wi == 0 for wi in w.weights) and cfg.compensation_threshold == 0.0:
        raise FloatingNodeError(
            "all weights are zero and the compensation clamp is off; "
            "the capacitor node floats")

    n_units = cfg.total_units
    g = 1.0 / cfg.r_unit
    tau = cfg.tau
    v_th = cfg.compensation_threshold

    # --- timeline: input edges + supply sub-steps/breakpoints ---
    parts = [np.array([0.0, horizon])]
    for sig in inputs:
        parts.append(sig.edges_in(0.0, horizon))
    step = supply.substep()
    if step is not None:
        parts.append(np.arange(0.0, horizon, step))
        parts.append(supply.breakpoints_in(0.0, horizon))
    boundaries = np.unique(np.concatenate(parts))
    boundaries = boundaries[(boundaries >= 0.0) & (boundaries <= horizon)]

    input_events = np.unique(np.concatenate(
        [sig.edges_in(0.0, horizon) for sig in inputs])) if inputs else np.empty(0)

    # per-segment pull-down unit counts, from input states at segment midpoints
    t0s = boundaries[:-1]
    t1s = boundaries[1:]
    mids = 0.5 * (t0s + t1s)
    dn_units = np.zeros(len(mids), dtype=np.int64)
    for sig, wi in zip(inputs, w.weights):
        if wi == 0:
            continue
        if sig.duty == 1.0:
            dn_units += wi
        elif sig.duty > 0.0:
            period = sig.period
            local = np.mod(mids - sig.phase, period)
            dn_units += wi * (local < sig.duty * period)
    up_units = n_units - dn_units

    if isinstance(supply, ConstantSupply):
        vdd_seg = np.full(len(mids), supply.vdd)
    else:
        vdd_seg = np.array([supply.value_at(float(t)) for t in t0s])

    veq_seg = vdd_seg * (up_units / n_units)

    # --- walk segments, splitting where the clamp engages ---
    out_t0: list[float] = []
    out_t1: list[float] = []
    out_v0: list[float] = []
    out_v1: list[float] = []
    out_veq: list[float] = []
    out_vdd: list[float] = []
    out_up: list[int] = []
    out_dn: list[int] = []
    out_clamped: list[bool] = []

    v = max(float(v0), v_th) if v_th > 0.0 else float(v0)
    t0_l = t0s.tolist()
    t1_l = t1s.tolist()
    veq_l = veq_seg.tolist()
    vdd_l = vdd_seg.tolist()
    up_l = up_units.tolist()
    dn_l = dn_units.tolist()
    exp = math.exp
    log = math.log

    for i in range(len(t0_l)):
        a = t0_l[i]
        b = t1_l[i]
        veq = veq_l[i]
        vs = vdd_l[i]
        up = up_l[i]
        dn = dn_l[i]
        dt = b - a
        if v_th > 0.0 and veq < v_th:
            if v <= v_th:
                # pinned at the threshold for the whole segment
                out_t0.append(a); out_t1.append(b)
                out_v0.append(v_th); out_v1.append(v_th)
                out_veq.append(veq); out_vdd.append(vs)
                out_up.append(up); out_dn.append(dn)
                out_clamped.append(True)
                v = v_th
                continue
            t_cross = tau * log((v - veq) / (v_th - veq))
            if t_cross < dt:
                out_t0.append(a); out_t1.append(a + t_cross)
                out_v0.append(v); out_v1.append(v_th)
                out_veq.append(veq); out_vdd.append(vs)
                out_up.append(up); out_dn.append(dn)
                out_clamped.append(False)
                out_t0.append(a + t_cross); out_t1.append(b)
                out_v0.append(v_th); out_v1.append(v_th)
                out_veq.append(veq); out_vdd.append(vs)
                out_up.append(up); out_dn.append(dn)
                out_clamped.append(True)
                v = v_th
                continue
        v_end = veq + (v - veq) * exp(-dt / tau)
        out_t0.append(a); out_t1.append(b)
        out_v0.append(v); out_v1.append(v_end)
        out_veq.append(veq); out_vdd.append(vs)
        out_up.append(up); out_dn.append(dn)
        out_clamped.append(False)
        v = v_end

    seg_t0 = np.array(out_t0)
    seg_t1 = np.array(out_t1)
    seg_v0 = np.array(out_v0)
    seg_v1 = np.array(out_v1)
    seg_veq = np.array(out_veq)
    seg_vdd = np.array(out_vdd)
    seg_up = np.array(out_up, dtype=np.int64)
    seg_dn = np.array(out_dn, dtype=np.int64)
    seg_clamped = np.array(out_clamped, dtype=bool)

    trace = TransientTrace(
        times=np.empty(0), v_cap=np.empty(0), vdd=np.empty(0),
        events=input_events, tau=tau, g_unit=g,
        seg_t0=seg_t0, seg_t1=seg_t1, seg_v0=seg_v0, seg_v1=seg_v1,
        seg_veq=seg_veq, seg_vdd=seg_vdd, seg_up=seg_up, seg_dn=seg_dn,
        seg_clamped=seg_clamped,
    )

    # sampled waveform: all segment boundaries, densified with uniform samples
    boundary_ts = np.append(seg_t0, horizon)
    boundary_vs = np.append(seg_v0, seg_v1[-1])
    uniform_ts = np.linspace(0.0, horizon, n_uniform_samples)
    extra_ts = uniform_ts[~np.isin(uniform_ts, boundary_ts)]
    extra_vs = np.array([trace.value_at(float(t)) for t in extra_ts])
    order = np.argsort(np.concatenate([boundary_ts, extra_ts]), kind="stable")
    trace.times = np.concatenate([boundary_ts, extra_ts])[order]
    trace.v_cap = np.concatenate([boundary_vs, extra_vs])[order]
    if isinstance(supply, ConstantSupply):
        trace.vdd = np.full(len(trace.times), supply.vdd)
    else:
        trace.vdd = np.array([supply.value_at(float(t)) for t in trace.times])
    return trace


def _window_integrals(trace: TransientTrace, w_lo: float, w_hi: float):
    """Exact integral of v, of supply power, and extremes over [w_lo, w_hi]."""
    tau = trace.tau
    g = trace.g_unit
    lo_i = int(np.searchsorted(trace.seg_t1, w_lo, side="right"))
    hi_i = int(np.searchsorted(trace.seg_t0, w_hi, side="left"))
    v_int = 0.0
    p_int = 0.0
    vmin = math.inf
    vmax = -math.inf
    for i in range(lo_i, hi_i):
        a = max(float(trace.seg_t0[i]), w_lo)
        b = min(float(trace.seg_t1[i]), w_hi)
        if b <= a:
            continue
        vdd = float(trace.seg_vdd[i])
        if trace.seg_clamped[i]:
            v_th = float(trace.seg_v0[i])
            v_int += v_th * (b - a)
            # clamp + pull-up current together equal the pull-down current
            p_int += vdd * float(trace.seg_dn[i]) * g * v_th * (b - a)
            vmin = min(vmin, v_th)
            vmax = max(vmax, v_th)
            continue
        veq = float(trace.seg_veq[i])
        va = veq + (float(trace.seg_v0[i]) - veq) * math.exp(-(a - float(trace.seg_t0[i])) / tau)
        decay = 1.0 - math.exp(-(b - a) / tau)
        v_int += veq * (b - a) + tau * (va - veq) * decay
        # supply current flows through the pull-up cells: up * g * (vdd - v)
        up = float(trace.seg_up[i])
        int_vdd_minus_v = (vdd - veq) * (b - a) - tau * (va - veq) * decay
        p_int += vdd * up * g * int_vdd_minus_v
        vb = veq + (va - veq) * (1.0 - decay)
        vmin = min(vmin, va, vb)
        vmax = max(vmax, va, vb)
    return v_int, p_int, vmin, vmax


def trace_metrics(trace: TransientTrace, cfg: VacConfig,
                  supply: SupplyProfile,
                  steady_fraction: float = 0.25,
                  drift_limit: float = 1e-3,
                  cycle_period: float | None = None) -> TraceMetrics:
    """Steady-state average, ripple swing, charge time, and supply power.

    The steady-state window is the last `steady_fraction` of the horizon.
    Drift is checked chunk-to-chunk inside the window (chunks follow
    `cycle_period` when at least two whole cycles fit, else window quarters);
    metrics are flagged unreliable when drift exceeds `drift_limit`.
    """
    horizon = trace.horizon
    w_lo = horizon * (1.0 - steady_fraction)
    w_hi = horizon
    window = w_hi - w_lo

    v_int, p_int, vmin, vmax = _window_integrals(trace, w_lo, w_hi)
    average_v = v_int / window
    avg_power = p_int / window
    swing = max(vmax - vmin, 0.0)

    # steady-state (cycle-to-cycle drift) check; chunks are whole cycles,
    # coalesced so the check stays O(window) for very fast inputs
    if cycle_period is not None and cycle_period > 0 and window / cycle_period >= 2.0:
        n_cycles = int(window / cycle_period)
        per_chunk = max(1, -(-n_cycles // 64))
        chunk = per_chunk * cycle_period
        n_chunks = int(window / chunk)
        start = w_hi - n_chunks * chunk
    else:
        n_chunks = 4
        chunk = window / 4.0
        start = w_lo
    averages = []
    for i in range(n_chunks):
        a = start + i * chunk
        vi, _, _, _ = _window_integrals(trace, a, a + chunk)
        averages.append(vi / chunk)
    scale = max(abs(average_v), 1e-30)
    drift = max(
        (abs(b - a) / scale for a, b in zip(averages, averages[1:])), default=0.0)
    reliable = drift < drift_limit

    charge_time = _first_crossing(trace, average_v)
    return TraceMetrics(average_v=average_v, swing=swing, charge_time=charge_time,
                        avg_power=avg_power, reliable=reliable, drift=drift)


def _first_crossing(trace: TransientTrace, level: float) -> float | None:
    """First time v_cap reaches `level` starting from the initial condition."""
    tau = trace.tau
    v_start = float(trace.seg_v0[0])
    if v_start == level:
        return 0.0
    for i in range(len(trace.seg_t0)):
        v0 = float(trace.seg_v0[i])
        v1 = float(trace.seg_v1[i])
        if (v0 - level) * (v1 - level) > 0.0:
            continue
        if trace.seg_clamped[i]:
            return float(trace.seg_t0[i])  # flat at the level itself
        veq = float(trace.seg_veq[i])
        if veq == level == v0:
            return float(trace.seg_t0[i])
        ratio = (v0 - veq) / (level - veq)
        if ratio < 1.0:
            continue
        return float(trace.seg_t0[i]) + tau * math.log(ratio)
    return None


def default_horizon(cfg: VacConfig, frequencies: list[float]) -> float:
    """Simulation horizon: whole periods of the slowest input, long enough
    that the last-quarter window sits past ~18 time constants."""
    t_slow = 1.0 / min(frequencies)
    n_periods = max(20, math.ceil(24.0 * cfg.tau / t_slow))
    n_periods = ((n_periods + 3) // 4) * 4
    return n_periods * t_slow


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VacStimulus:
    """One VAC stimulus: duties, frequencies (scalar or per-input), weights."""

    duties: tuple[float, ...]
    frequency: float | tuple[float, ...]
    w: WeightVector
    vdd: float = 2.5
    v0: float = 0.0
    phases: tuple[float, ...] | None = None

    def frequencies(self) -> list[float]:
        if isinstance(self.frequency, (int, float)):
            return [float(self.frequency)] * len(self.duties)
        return [float(f) for f in self.frequency]

    def signals(self) -> list[PwmSignal]:
        freqs = self.frequencies()
        phases = self.phases or (0.0,) * len(self.duties)
        return [PwmSignal(f, d, p) for f, d, p in zip(freqs, self.duties, phases)]


@dataclass(frozen=True)
class SweepPoint:
    axis_value: float
    metrics: TraceMetrics | None
    ratio: float | None            # average_v / vdd
    error: str | None = None


def _sweep_one(args) -> SweepPoint:
    cfg, stim, axis, value = args
    try:
        if axis == "vdd":
            stim = VacStimulus(stim.duties, stim.frequency, stim.w,
                               vdd=float(value), v0=stim.v0, phases=stim.phases)
        elif axis == "frequency":
            stim = VacStimulus(stim.duties, float(value), stim.w,
                               vdd=stim.vdd, v0=stim.v0, phases=stim.phases)
        else:
            raise ValueError(f"unknown sweep axis {axis!r}")
        supply = ConstantSupply(stim.vdd)
        sigs = stim.signals()
        horizon = default_horizon(cfg, stim.frequencies())
        trace = simulate_vac(cfg, sigs, stim.w, supply, horizon, v0=stim.v0)
        metrics = trace_metrics(trace, cfg, supply,
                                cycle_period=1.0 / min(stim.frequencies()))
        return SweepPoint(float(value), metrics, metrics.average_v / stim.vdd)
    except Exception as exc:  # recorded, not fatal
        return SweepPoint(float(value), None, None,
                          error=f"{type(exc).__name__}: {exc}")


def sweep(cfg: VacConfig, stimulus: VacStimulus, axis: str,
          grid: list[float], jobs: int = 1) -> list[SweepPoint]:
    """One simulate+metrics per grid point; failures are recorded per point.

    Results are ordered by grid index whatever the worker count, so output is
    parallelism-invariant.
    """
    if len(grid) == 0:
        raise ValueError("sweep grid must be nonempty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("sweep grid must be ascending")
    tasks = [(cfg, stimulus, axis, v) for v in grid]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_sweep_one, tasks))
    return [_sweep_one(t) for t in tasks]
