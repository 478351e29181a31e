"""Closed-loop scenario runs, repeated noisy runs and error statistics."""

from __future__ import annotations

import io
import json
import logging
import math
import os
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal

import numpy as np
import scipy.signal

from . import _kernel
from .controller import (
    ControllerConfig,
    ControllerState,
    ForceSegment,
    HysteresisConfig,
    PositionSegment,
    ReferenceSpec,
    ReturnRule,
    gain_matrix,
    param_array,
)
from .errors import IntegrationError, ValidationError
from .linear_system import DESIGN_OPERATING_POINTS, NOMINAL_GAINS_FORCE, NOMINAL_GAINS_POSITION
from .lyapunov import LyapunovWeights, SwitchEvent, index_activations
from .plant import (
    FORCE,
    POSITION,
    DynamicLoad,
    Environment,
    FrictionModel,
    HardStop,
    PlantParams,
    PlantState,
    env_arrays,
)
from .synthesis import verify_gains

log = logging.getLogger(__name__)

COLUMNS = ("t", "x", "v", "P_L", "F_L", "e", "h", "r", "u_raw", "u_valve", "L")


@dataclass(frozen=True)
class NoiseConfig:
    """Gaussian measurement noise standard deviations per channel."""

    enabled: bool = False
    position: float = 1e-5
    pressure: float = 1e4
    force: float = 5.0

    def __post_init__(self):
        for name in ("position", "pressure", "force"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValidationError(f"must be finite and >= 0, got {v}", f"noise.{name}")

    def stds(self) -> np.ndarray:
        return np.array([self.position, self.pressure, self.force])


def _default_weights() -> dict:
    return {POSITION: LyapunovWeights(), FORCE: LyapunovWeights()}


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    variant: Literal["hard_stop", "dynamic_env"] = "hard_stop"
    duration: float = 10.0
    dt: float = 1e-5
    plant: PlantParams = field(default_factory=PlantParams)
    friction: FrictionModel = field(default_factory=FrictionModel)
    environment: Environment = field(default_factory=HardStop)
    gains: dict = field(default_factory=lambda: {POSITION: NOMINAL_GAINS_POSITION, FORCE: NOMINAL_GAINS_FORCE})
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    hysteresis: HysteresisConfig = field(default_factory=HysteresisConfig)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    initial: PlantState = field(default_factory=PlantState)
    weights: dict = field(default_factory=_default_weights)
    operating_points: dict = field(default_factory=lambda: dict(DESIGN_OPERATING_POINTS))
    seed: int = 0
    run_count: int = 1
    decimation: int = 100
    # recorded only; the reduced model has no supply-flow limit
    supply_flow_lpm: float = 40.0

    def __post_init__(self):
        if self.variant not in ("hard_stop", "dynamic_env"):
            raise ValidationError(f"unknown variant {self.variant!r}", "scenario.variant")
        want = HardStop if self.variant == "hard_stop" else DynamicLoad
        if not isinstance(self.environment, want):
            raise ValidationError(f"variant {self.variant} needs a {want.__name__} environment",
                                  "environment.kind")
        if not (math.isfinite(self.duration) and self.duration > 0):
            raise ValidationError("must be finite and > 0", "scenario.duration")
        if not self.dt > 0:
            raise ValidationError("must be > 0", "scenario.dt")
        if not (isinstance(self.run_count, int) and self.run_count >= 1):
            raise ValidationError("must be an integer >= 1", "scenario.run_count")
        if not (isinstance(self.decimation, int) and self.decimation >= 1):
            raise ValidationError("must be an integer >= 1", "scenario.decimation")
        for h in (POSITION, FORCE):
            if h not in self.gains or h not in self.weights:
                raise ValidationError("gains and weights need both modes", "gains")
            self.gains[h].check_mode(h)
        self.controller.check_step(self.dt)

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


def scenario_a(**overrides) -> ScenarioConfig:
    """Approach a hard stop at 5 cm, press it, release, return to zero."""
    ref = ReferenceSpec(
        position=(PositionSegment("ramp", math.inf, slope=0.03),),
        force=(ForceSegment("const", 2.0, 3500.0), ForceSegment("cosine", 4.0, 0.0),
               ForceSegment("const", math.inf, 0.0)),
        position_return=ReturnRule("ramp", slope=0.03, target=0.0),
    )
    cfg = ScenarioConfig(name="A", variant="hard_stop", duration=10.0,
                         environment=HardStop(x_c=0.05), reference=ref,
                         hysteresis=HysteresisConfig(T_hi=3300.0, T_lo=500.0, min_dwell=0.05))
    return replace(cfg, **overrides)


def scenario_b(**overrides) -> ScenarioConfig:
    """Push against a pressure-limited counter cylinder with a pulsed set force."""
    env = DynamicLoad()
    ref = ReferenceSpec(
        position=(PositionSegment("ramp", 1.5, slope=0.02),
                  PositionSegment("sine", math.inf, amplitude=0.02, frequency=0.1)),
        force=(ForceSegment("const", 2.0, 3375.0), ForceSegment("const", 2.0, 4500.0),
               ForceSegment("const", math.inf, 3150.0)),
        position_return=ReturnRule("offset"),
    )
    F0 = env.low
    cfg = ScenarioConfig(name="B", variant="dynamic_env", duration=12.0, environment=env,
                         reference=ref,
                         hysteresis=HysteresisConfig(T_hi=3300.0, T_lo=2000.0, min_dwell=0.05),
                         initial=PlantState(x=0.0, v=0.0, P_L=F0 / PlantParams().A_bar, F_L=F0))
    return replace(cfg, **overrides)


PRESETS = {"A": scenario_a, "B": scenario_b}


@dataclass
class TrajectoryLog:
    """Sampled rows with columns :data:`COLUMNS` plus switch events."""

    data: np.ndarray
    events: list[SwitchEvent]
    dt: float
    decimation: int
    status: str = "complete"
    pressure_clamps: int = 0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=float).reshape(-1, len(COLUMNS))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[:, COLUMNS.index(name)]

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def t(self) -> np.ndarray:
        return self["t"]

    def at(self, t: float) -> dict:
        """Row closest to time ``t``."""
        i = int(np.argmin(np.abs(self.t - t)))
        return dict(zip(COLUMNS, self.data[i]))

    def window(self, t0: float, t1: float) -> np.ndarray:
        return (self.t >= t0) & (self.t <= t1)

    def regular_mask(self) -> np.ndarray:
        """Rows on the output grid (drops the extra rows logged at switches)."""
        k = np.rint(self.t / self.dt).astype(np.int64)
        mask = (k % self.decimation) == 0
        # a switch on a grid step logs a single row; drop repeated times anyway
        dup = np.zeros_like(mask)
        dup[1:] = self.t[1:] == self.t[:-1]
        return mask & ~dup

    def tracking_error(self) -> np.ndarray:
        h = self["h"]
        y = np.where(h < 0, self["x"], self["F_L"])
        return self["r"] - y

    def summary(self) -> dict:
        return {
            "status": self.status,
            "rows": len(self),
            "switch_events": len(self.events),
            "switch_times": [ev.t for ev in self.events],
            "pressure_clamps": self.pressure_clamps,
            "final": dict(zip(COLUMNS, self.data[-1].tolist())) if len(self) else {},
        }


def _noise_array(cfg: ScenarioConfig, seed) -> np.ndarray:
    if not cfg.noise.enabled:
        return np.zeros((0, 3))
    n_ticks = cfg.n_steps // cfg.controller.control_decimation + 1
    return np.random.default_rng(seed).standard_normal((n_ticks, 3))


def run_scenario(cfg: ScenarioConfig, seed=None, check_gains: bool = True) -> TrajectoryLog:
    """Integrate plant and controller in lockstep with fixed-step RK4.

    ``seed`` (int or ``SeedSequence``) drives the measurement noise and
    defaults to ``cfg.seed``. Raises :class:`IntegrationError` carrying the
    partial log when the state becomes non-finite or the mode chatters.
    """
    if check_gains:
        for h in (POSITION, FORCE):
            rep = verify_gains(cfg.gains[h], h, cfg.plant, cfg.operating_points[h])
            if not rep.all_stable:
                raise ValidationError(f"gains for mode {h} do not give a stable closed loop", "gains")
    seed = cfg.seed if seed is None else seed
    p = cfg.plant
    kind, ep = env_arrays(cfg.environment)
    cp = param_array(cfg.controller, cfg.hysteresis, p.delta, p.u_max, cfg.reference.position_start)
    cs = ControllerState(h=POSITION).as_array()
    pos, frc, ret = cfg.reference.arrays()
    W = np.vstack([cfg.weights[POSITION].as_array(), cfg.weights[FORCE].as_array()])
    rows, n_rows, _, ev, n_ev, status, fail_step, n_clamp = _kernel.simulate(
        cfg.initial.as_array(), cfg.n_steps, cfg.dt, p.as_array(), cfg.friction.as_array(),
        kind, ep, gain_matrix(cfg.gains), cp, cs, pos, ret, frc,
        cfg.controller.control_decimation, cfg.decimation, _noise_array(cfg, seed),
        cfg.noise.stds(), W)

    events = [SwitchEvent(t=float(e[0]), from_mode=int(e[1]), to_mode=int(e[2]), L_value=float(e[9]),
                          state=PlantState(*map(float, e[3:7])), r=float(e[7]))
              for e in ev[:n_ev]]
    out = TrajectoryLog(rows[:n_rows].copy(), index_activations(events), cfg.dt, cfg.decimation,
                        status="complete" if status == _kernel.OK else "partial",
                        pressure_clamps=int(n_clamp))
    if n_clamp:
        log.warning("scenario %s: load pressure clamped on %d steps", cfg.name, n_clamp)
    if status != _kernel.OK:
        t_fail = fail_step * cfg.dt
        what = "non-finite state" if status == _kernel.NONFINITE else "too many switch events"
        raise IntegrationError(f"{what} at t = {t_fail:.6g} s", t_fail, fail_step, log=out)
    return out


@dataclass
class ErrorStats:
    """Per-sample mean absolute error and standard deviation across runs."""

    t: np.ndarray
    position_mean_abs: np.ndarray
    position_std: np.ndarray
    force_mean_abs: np.ndarray
    force_std: np.ndarray
    n_runs: int
    filtered: bool = True
    partial: bool = False
    failures: list = field(default_factory=list)


def _filter_segments(err: np.ndarray, ba) -> np.ndarray:
    """Causal filtering of each finite run of samples separately."""
    out = np.full_like(err, np.nan)
    finite = np.isfinite(err)
    if not finite.any():
        return out
    edges = np.flatnonzero(np.diff(np.concatenate(([0], finite.astype(np.int8), [0]))))
    b, a = ba
    zi = scipy.signal.lfilter_zi(b, a)
    for s, e in zip(edges[::2], edges[1::2]):
        seg = err[s:e]
        out[s:e], _ = scipy.signal.lfilter(b, a, seg, zi=zi * seg[0])
    return out


def _stat_arrays(E: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean_abs = np.nanmean(np.abs(E), axis=0)
        # spread about the first run: identical runs give exactly zero
        std = np.nanstd(E - E[0], axis=0)
    return mean_abs, std


def compute_error_stats(logs: list[TrajectoryLog], filtered: bool = True,
                        cutoff_hz: float = 100.0, order: int = 2) -> ErrorStats:
    """Error statistics for a set of runs on a common output grid.

    Control errors ``r - y`` are split by mode, and each contiguous segment
    passes through a Butterworth low-pass before aggregation when
    ``filtered`` is set.
    """
    if not logs:
        raise ValidationError("need at least one log", "logs")
    grids = [lg.data[lg.regular_mask()] for lg in logs]
    n = min(g.shape[0] for g in grids)
    t = grids[0][:n, 0]
    fs = 1.0 / (logs[0].dt * logs[0].decimation)
    if filtered and not cutoff_hz < fs / 2:
        raise ValidationError(f"cutoff {cutoff_hz} Hz above Nyquist of the {fs:g} Hz log", "cutoff_hz")
    ba = scipy.signal.butter(order, cutoff_hz, fs=fs) if filtered else None

    pos, frc = [], []
    for g in grids:
        g = g[:n]
        h = g[:, COLUMNS.index("h")]
        r = g[:, COLUMNS.index("r")]
        ep = np.where(h < 0, r - g[:, COLUMNS.index("x")], np.nan)
        ef = np.where(h > 0, r - g[:, COLUMNS.index("F_L")], np.nan)
        if filtered:
            ep, ef = _filter_segments(ep, ba), _filter_segments(ef, ba)
        pos.append(ep)
        frc.append(ef)
    pm, ps = _stat_arrays(np.array(pos))
    fm, fsd = _stat_arrays(np.array(frc))
    return ErrorStats(t=t, position_mean_abs=pm, position_std=ps, force_mean_abs=fm, force_std=fsd,
                      n_runs=len(logs), filtered=filtered)


def run_seeds(cfg: ScenarioConfig, runs: int | None = None) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(cfg.seed).spawn(runs or cfg.run_count)


def repeat_runs(cfg: ScenarioConfig, runs: int | None = None, filtered: bool = True,
                return_logs: bool = False):
    """Run the scenario ``runs`` times (default ``cfg.run_count``) with
    independent noise sub-seeds and aggregate the error statistics."""
    logs, failures = [], []
    for i, ss in enumerate(run_seeds(cfg, runs)):
        try:
            logs.append(run_scenario(cfg, seed=ss, check_gains=(i == 0)))
        except IntegrationError as exc:
            failures.append({"run": i, "error": str(exc)})
    if not logs:
        raise IntegrationError("every run failed", math.nan, -1)
    stats = compute_error_stats(logs, filtered=filtered)
    stats.partial = bool(failures)
    stats.failures = failures
    stats.n_runs = len(logs)
    return (stats, logs) if return_logs else stats


# --- file formats -------------------------------------------------------------------

def events_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.stem + ".events.json")


def export_log(log_: TrajectoryLog, path) -> Path:
    """CSV with header ``t,x,v,P_L,F_L,e,h,r,u_raw,u_valve,L`` plus a sibling
    ``<stem>.events.json`` with switch events and run metadata."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(COLUMNS) + "\n")
        if len(log_):
            np.savetxt(fh, log_.data, delimiter=",", fmt="%.17g")
    meta = {"dt": log_.dt, "decimation": log_.decimation, "status": log_.status,
            "pressure_clamps": log_.pressure_clamps,
            "events": [ev.to_dict() for ev in log_.events]}
    with open(events_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
    return path


def load_log(path) -> TrajectoryLog:
    path = Path(path)
    with open(path) as fh:
        header = fh.readline().strip()
        if header != ",".join(COLUMNS):
            raise ValidationError(f"unexpected CSV header {header!r}", "log")
        body = fh.read()
    if body.strip():
        data = np.loadtxt(io.StringIO(body), delimiter=",", ndmin=2)
    else:
        data = np.zeros((0, len(COLUMNS)))
    if data.shape[1] != len(COLUMNS):
        raise ValidationError(f"expected {len(COLUMNS)} columns, got {data.shape[1]}", "log")
    meta = {}
    ep = events_path(path)
    if ep.exists():
        with open(ep) as fh:
            meta = json.load(fh)
    events = [SwitchEvent.from_dict(d) for d in meta.get("events", [])]
    if not ep.exists():
        events = events_from_rows(data)
    return TrajectoryLog(data, events, float(meta.get("dt", 1e-5)), int(meta.get("decimation", 1)),
                         status=meta.get("status", "complete"),
                         pressure_clamps=int(meta.get("pressure_clamps", 0)))


def events_from_rows(data: np.ndarray) -> list[SwitchEvent]:
    """Switch events recovered from mode changes between consecutive rows."""
    data = np.asarray(data, dtype=float).reshape(-1, len(COLUMNS))
    h = data[:, COLUMNS.index("h")]
    events = []
    for i in np.flatnonzero(h[1:] != h[:-1]) + 1:
        row = dict(zip(COLUMNS, data[i]))
        events.append(SwitchEvent(t=row["t"], from_mode=int(h[i - 1]), to_mode=int(h[i]),
                                  L_value=row["L"],
                                  state=PlantState(row["x"], row["v"], row["P_L"], row["F_L"]),
                                  r=row["r"]))
    return index_activations(events)


def export_stats(stats: ErrorStats, out_dir) -> tuple[Path, Path]:
    """``position_stats.csv`` and ``force_stats.csv`` with columns ``t,mean_abs,std``."""
    out_dir = Path(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, m, s in (("position", stats.position_mean_abs, stats.position_std),
                       ("force", stats.force_mean_abs, stats.force_std)):
        p = out_dir / f"{name}_stats.csv"
        np.savetxt(p, np.column_stack([stats.t, m, s]), delimiter=",", fmt="%.17g",
                   header="t,mean_abs,std", comments="")
        paths.append(p)
    return paths[0], paths[1]
