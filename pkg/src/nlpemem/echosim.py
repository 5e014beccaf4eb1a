"""Monte Carlo noiseless photon echo with dynamical decoupling.

Level labels: g1 = |1/2>g (input ground), g3 = |3/2>g (spin storage),
e5 = |5/2>e (input excited level) and e3 = |3/2>e.  The four optical pulses
act in the order pi35, pi13, pi35, pi13 and carry the stored coherence along

    (e5,g1) -> (g3,g1) -> (g3,e3) -> (e5,e3) -> (e5,g1).

With optical detuning D, spin detuning ds and excited-state detuning de, the
accumulated phase is D (t1 - t32 + t - t4) + ds t31 + de t42.  The optical
term cancels at ``t = t4 + t32 - t1`` which fixes the echo time; the spin
and excited-state spreads dephase over t31 and t42.  A DD block between the
first two pulses undoes the static spin phase picked up inside it.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import spectral
from ._parallel import block_slices, ordered_sum, parallel_map
from .errors import EmptyEnsembleError, ParameterError, SchedulingError
from .model import absorption_factor
from .spectral import Pulse, SpectralDistribution

DETECTION_WINDOW = 1.1e-6
DEFAULT_DD_PULSE = Pulse.square_pi(math.pi / 60e-6)  # 60 us RF pi pulse
MIN_IONS = 1000

_AXIS_PHASE = {"X": 0.0, "Y": 0.5 * math.pi, "-X": math.pi, "-Y": 1.5 * math.pi}


# ---------------------------------------------------------------------------
# schedule


@dataclass(frozen=True)
class DDSequence:
    """Spin-echo pulse train.  ``offsets`` are pulse centres from the block start."""

    axes: tuple[str, ...]
    offsets: tuple[float, ...]
    duration: float
    pulse_template: Pulse = DEFAULT_DD_PULSE
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "offsets", tuple(float(t) for t in self.offsets))
        if not self.axes:
            raise ParameterError("DD sequence needs at least one pulse")
        if len(self.axes) != len(self.offsets):
            raise ParameterError("one offset per DD pulse required")
        for a in self.axes:
            if a not in _AXIS_PHASE:
                raise ParameterError(f"unknown DD axis {a!r}")
        half = 0.5 * self.pulse_template.duration
        tol = 1e-12 * max(self.duration, 1e-30)
        if self.offsets[0] - half < -tol or self.offsets[-1] + half > self.duration + tol:
            raise SchedulingError("DD pulses extend outside the block")
        gaps = np.diff(self.offsets)
        if np.any(gaps < self.pulse_template.duration - tol):
            raise SchedulingError("DD pulses overlap")

    @classmethod
    def equally_spaced(cls, axes: Sequence[str], *, storage: float | None = None, tau: float | None = None,
                       template: Pulse = DEFAULT_DD_PULSE, repeats: int = 1, name: str = "custom") -> "DDSequence":
        """tau - pi - 2tau - pi - ... - tau layout.

        Give either the block length ``storage`` or the half spacing ``tau``.
        """
        axes = tuple(axes) * int(repeats)
        n = len(axes)
        if n == 0:
            raise ParameterError("DD sequence needs at least one pulse")
        tp = template.duration
        if (storage is None) == (tau is None):
            raise ParameterError("give exactly one of storage or tau")
        if storage is not None:
            tau = (storage - n * tp) / (2 * n)
            if tau < -1e-12 * storage:
                raise SchedulingError(f"{n} pulses of {tp:g} s do not fit in {storage:g} s")
            tau = max(tau, 0.0)
        elif tau < 0:
            raise ParameterError("tau must be non-negative")
        offsets = tau + 0.5 * tp + (2 * tau + tp) * np.arange(n)
        return cls(axes, tuple(offsets), n * (2 * tau + tp), template, name)

    @classmethod
    def xx(cls, **kw) -> "DDSequence":
        return cls.equally_spaced(("X", "X"), name="XX", **kw)

    @classmethod
    def xxxx(cls, **kw) -> "DDSequence":
        return cls.equally_spaced(("X", "X", "X", "X"), name="XXXX", **kw)

    @classmethod
    def xy4(cls, **kw) -> "DDSequence":
        return cls.equally_spaced(("X", "Y", "X", "Y"), name="XY4", **kw)

    @classmethod
    def named(cls, name: str, **kw) -> "DDSequence":
        makers = {"XX": cls.xx, "XXXX": cls.xxxx, "XY4": cls.xy4}
        if name.upper() not in makers:
            raise ParameterError(f"unknown DD sequence {name!r}")
        return makers[name.upper()](**kw)

    @property
    def phases(self) -> np.ndarray:
        return np.array([_AXIS_PHASE[a] for a in self.axes])

    def to_dict(self) -> dict:
        return {"name": self.name, "axes": list(self.axes), "offsets": list(self.offsets),
                "duration": self.duration, "pulse_template": self.pulse_template.to_dict()}


@dataclass(frozen=True)
class PulseErrorModel:
    angle_error: float = 0.0
    detuning_spread: SpectralDistribution = SpectralDistribution.delta()
    per_ion_angle_scale: SpectralDistribution = SpectralDistribution.delta(1.0)

    def __post_init__(self):
        if not -math.pi < self.angle_error < math.pi:
            raise ParameterError("angle_error must lie in (-pi, pi)")

    @classmethod
    def ideal(cls) -> "PulseErrorModel":
        return cls()


@dataclass(frozen=True)
class OpticalPulse:
    time: float
    transition: str
    split: bool = False  # replaced by a pi/2 pair for interferometric readout


@dataclass(frozen=True)
class ProtocolSchedule:
    input_time: float
    optical_pulses: tuple[OpticalPulse, ...]
    t31: float
    t42: float
    spin_storage: float
    echo_time: float
    dd_block: DDSequence | None = None
    dd_start: float = 0.0
    detection_window: float = DETECTION_WINDOW

    def __post_init__(self):
        times = [self.input_time] + [p.time for p in self.optical_pulses] + [self.echo_time]
        if len(self.optical_pulses) != 4:
            raise SchedulingError("NLPE needs exactly four optical pulses")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise SchedulingError("schedule events are not strictly ordered")
        t1, t2, t3, t4 = (p.time for p in self.optical_pulses)
        if not math.isclose(t3 - t1, self.t31, rel_tol=1e-12, abs_tol=1e-18):
            raise SchedulingError("t31 inconsistent with pulse times")
        if not math.isclose(t4 - t2, self.t42, rel_tol=1e-12, abs_tol=1e-18):
            raise SchedulingError("t42 inconsistent with pulse times")
        if self.dd_block is not None:
            if self.dd_start < t1 - 1e-15 or self.dd_start + self.dd_block.duration > t2 + 1e-12 * t2:
                raise SchedulingError("DD block does not fit between the first two pulses")

    @property
    def pulse_times(self) -> tuple[float, float, float, float]:
        return tuple(p.time for p in self.optical_pulses)

    @property
    def t32(self) -> float:
        return self.t31 - self.spin_storage

    def to_dict(self) -> dict:
        return {"input_time": self.input_time,
                "optical_pulses": [{"time": p.time, "transition": p.transition, "split": p.split}
                                   for p in self.optical_pulses],
                "t31": self.t31, "t42": self.t42, "spin_storage": self.spin_storage,
                "echo_time": self.echo_time, "detection_window": self.detection_window,
                "dd_start": self.dd_start,
                "dd_block": None if self.dd_block is None else self.dd_block.to_dict()}


def build_nlpe_schedule(t31: float, t42: float, spin_storage: float, dd: DDSequence | None = None, *,
                        input_delay: float = 2e-6, split_readout: bool = False,
                        detection_window: float = DETECTION_WINDOW) -> ProtocolSchedule:
    """Lay out input, four optical pulses and the echo.

    Pulses sit at t1 = input_delay, t2 = t1 + spin_storage, t3 = t1 + t31 and
    t4 = t2 + t42; the echo follows at t4 + (t3 - t2) - t1.  A DD block is
    centred in the spin-storage interval.
    """
    for name, v in (("t31", t31), ("t42", t42), ("spin_storage", spin_storage), ("input_delay", input_delay)):
        if not math.isfinite(v) or v <= 0:
            raise ParameterError(f"{name} must be positive and finite")
    if dd is not None and dd.duration > spin_storage * (1 + 1e-12):
        raise SchedulingError(f"DD block ({dd.duration:g} s) longer than spin storage ({spin_storage:g} s)")
    t32 = t31 - spin_storage
    if t32 <= 0:
        raise SchedulingError("t31 must exceed the spin storage time")
    if t42 <= t32:
        raise SchedulingError("t42 must exceed t31 - spin_storage")
    if t32 <= input_delay:
        raise SchedulingError("t31 - spin_storage must exceed the input delay for the echo to follow the last pulse")
    t1 = input_delay
    t2 = t1 + spin_storage
    t3 = t1 + t31
    t4 = t2 + t42
    pulses = (OpticalPulse(t1, "pi35"), OpticalPulse(t2, "pi13"),
              OpticalPulse(t3, "pi35"), OpticalPulse(t4, "pi13", split_readout))
    dd_start = t1 + 0.5 * (spin_storage - dd.duration) if dd is not None else t1
    return ProtocolSchedule(0.0, pulses, t31, t42, spin_storage, t4 + t32 - t1, dd, dd_start, detection_window)


# ---------------------------------------------------------------------------
# spin-transition propagation


def _free(ds: np.ndarray, t: float) -> np.ndarray:
    """Free precession for time ``t`` in the (g1, g3) rotating frame."""
    ph = math.pi * ds * t
    u = np.zeros(ds.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = np.exp(1j * ph)
    u[..., 1, 1] = np.exp(-1j * ph)
    return u


def _kick(theta: np.ndarray, phase: float) -> np.ndarray:
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    u = np.empty(theta.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c
    u[..., 1, 1] = c
    u[..., 0, 1] = -1j * s * np.exp(-1j * phase)
    u[..., 1, 0] = -1j * s * np.exp(1j * phase)
    return u


def dd_propagator(dd: DDSequence, ds: np.ndarray, scale: np.ndarray, angle_error: float,
                  total_time: float | None = None, start: float = 0.0, finite: bool = False) -> np.ndarray:
    """Per-ion SU(2) over ``[0, total_time]`` with the block starting at ``start``.

    Pulses are instantaneous rotations by ``(pi + angle_error) * scale`` unless
    ``finite`` is set, in which case the template pulse is propagated with the
    ion's detuning and a Rabi scale of ``scale * (1 + angle_error / pi)``.
    """
    ds = np.asarray(ds, dtype=float)
    scale = np.broadcast_to(np.asarray(scale, dtype=float), ds.shape)
    total = dd.duration if total_time is None else total_time
    tp = dd.pulse_template.duration
    u = np.broadcast_to(np.eye(2, dtype=complex), ds.shape + (2, 2)).copy()
    now = 0.0
    for ax_phase, off in zip(dd.phases, dd.offsets):
        centre = start + off
        if finite:
            u = _free(ds, centre - 0.5 * tp - now) @ u
            p = Pulse(dd.pulse_template.shape, dd.pulse_template.peak_rabi, tp,
                      dd.pulse_template.carrier_detuning, dd.pulse_template.phase + ax_phase,
                      dd.pulse_template.chs_bandwidth, dd.pulse_template.chs_truncation)
            u = spectral.propagator(p, ds, scale * (1.0 + angle_error / math.pi)) @ u
            now = centre + 0.5 * tp
        else:
            u = _free(ds, centre - now) @ u
            u = _kick((math.pi + angle_error) * scale, ax_phase) @ u
            now = centre
    return _free(ds, total - now) @ u


def _dd_terms(u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Phase-matched coherence amplitude U33 U11* and g1 -> g3 population."""
    return u[..., 1, 1] * np.conj(u[..., 0, 0]), np.abs(u[..., 1, 0]) ** 2


def _check_ions(n_ions: int) -> int:
    n = int(n_ions)
    if n < 1:
        raise EmptyEnsembleError("ensemble is empty")
    if n < MIN_IONS:
        raise ParameterError(f"at least {MIN_IONS} ions required, got {n}")
    return n


class RephasingResult(NamedTuple):
    rephasing_efficiency: float
    residual_population: float


def spin_rephasing_efficiency(dd: DDSequence, errors: PulseErrorModel, n_ions: int = 10_000, seed: int = 0,
                              *, workers: int = 1, finite: bool = False) -> RephasingResult:
    """Fraction of stored spin coherence surviving ``dd`` and the population it strands in g3."""
    n = _check_ions(n_ions)
    ds = spectral.sample(errors.detuning_spread, seed, n, stream=11, workers=workers)
    sc = spectral.sample(errors.per_ion_angle_scale, seed, n, stream=12, workers=workers)
    slices = block_slices(n)

    def run(k):
        lo, hi = slices[k]
        a, pop = _dd_terms(dd_propagator(dd, ds[lo:hi], sc[lo:hi], errors.angle_error, finite=finite))
        return np.array([np.sum(a), np.sum(pop)])

    tot = ordered_sum(parallel_map(run, len(slices), workers)) / n
    return RephasingResult(float(min(abs(tot[0]) ** 2, 1.0)), float(np.clip(tot[1].real, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# echo simulation


@dataclass
class EchoResult:
    efficiency: float
    times: np.ndarray
    amplitude_trace: np.ndarray
    residual_spin_population: float
    echo_time: float
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ParameterError("efficiency out of [0, 1]")

    def trace_efficiency(self) -> np.ndarray:
        return np.abs(self.amplitude_trace) ** 2

    def to_dict(self) -> dict:
        return {"efficiency": self.efficiency, "echo_time": self.echo_time,
                "residual_spin_population": self.residual_spin_population,
                "diagnostics": self.diagnostics}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["time_s", "re", "im", "abs2"])
            for t, a in zip(self.times, self.amplitude_trace):
                w.writerow([repr(float(t)), repr(float(a.real)), repr(float(a.imag)), repr(float(abs(a) ** 2))])


def _trace_times(schedule: ProtocolSchedule, n: int) -> np.ndarray:
    half = 1.5 * schedule.detection_window
    return schedule.echo_time + np.linspace(-half, half, n)


def simulate_echo(schedule: ProtocolSchedule, optical_dist: SpectralDistribution, spin_dist: SpectralDistribution,
                  errors: PulseErrorModel | None = None, d: float = 2.09, n_ions: int = 100_000, seed: int = 0,
                  *, absorption_dist: SpectralDistribution | None = None, gamma_hom: float = 0.0,
                  eta_control: float = 1.0, trace_points: int = 101, workers: int = 1,
                  finite_dd: bool = False) -> EchoResult:
    """Ensemble-averaged echo efficiency for ``schedule``.

    ``optical_dist`` is the excited-state hyperfine spread (dephases over
    t42), ``spin_dist`` the ground-state spin spread (dephases over t31) and
    ``absorption_dist`` the optical line that shapes the echo in time.  The
    homogeneous optical rate ``gamma_hom`` enters as exp(-2 gamma t42).
    """
    n = _check_ions(n_ions)
    errors = errors or PulseErrorModel()
    if d < 0:
        raise ParameterError("optical depth must be non-negative")
    if not 0.0 <= eta_control <= 1.0:
        raise ParameterError("eta_control must lie in [0, 1]")
    if gamma_hom < 0:
        raise ParameterError("gamma_hom must be non-negative")
    if trace_points < 1:
        raise ParameterError("trace_points must be at least 1")
    absorption_dist = absorption_dist or SpectralDistribution.gaussian(1.8e6)

    big_d = spectral.sample(absorption_dist, seed, n, stream=0, workers=workers)
    ds = spectral.sample(spin_dist, seed, n, stream=1, workers=workers)
    de = spectral.sample(optical_dist, seed, n, stream=2, workers=workers)
    sc = spectral.sample(errors.per_ion_angle_scale, seed, n, stream=3, workers=workers)

    t1, t2, _, _ = schedule.pulse_times
    t32 = schedule.t32
    times = _trace_times(schedule, trace_points)
    tau = times - schedule.echo_time
    dd = schedule.dd_block
    slices = block_slices(n)

    def run(k):
        lo, hi = slices[k]
        s, e, o = ds[lo:hi], de[lo:hi], big_d[lo:hi]
        if dd is None:
            a_spin = np.exp(-2j * math.pi * s * schedule.spin_storage)
            pop = np.zeros(hi - lo)
        else:
            u = dd_propagator(dd, s, sc[lo:hi], errors.angle_error, total_time=schedule.spin_storage,
                              start=schedule.dd_start - t1, finite=finite_dd)
            a_spin, pop = _dd_terms(u)
        rest_spin = np.exp(-2j * math.pi * s * t32)
        exc = np.exp(-2j * math.pi * e * schedule.t42)
        amp = a_spin * rest_spin * exc
        trace = np.exp(-2j * math.pi * np.outer(o, tau)).T @ amp
        return np.concatenate([[np.sum(amp), np.sum(pop), np.sum(a_spin), np.sum(rest_spin),
                                np.sum(exc)], trace])

    tot = ordered_sum(parallel_map(run, len(slices), workers)) / n
    mean_amp, residual = tot[0], float(tot[1].real)
    a0 = absorption_factor(d)
    ctrl = eta_control ** 4
    hom = math.exp(-2.0 * gamma_hom * schedule.t42)
    scale = a0 * ctrl * hom
    eff = float(min(abs(mean_amp) ** 2 * scale, a0))
    diagnostics = {
        "absorption_factor": a0,
        "control_factor": ctrl,
        "homogeneous_factor": hom,
        "spin_storage_factor": float(abs(tot[2]) ** 2),
        "spin_optical_interval_factor": float(abs(tot[3]) ** 2),
        "excited_state_factor": float(abs(tot[4]) ** 2),
        "ensemble_coherence": float(abs(mean_amp) ** 2),
        "n_ions": n,
        "seed": int(seed),
    }
    return EchoResult(eff, times, tot[5:] * math.sqrt(scale), float(np.clip(residual, 0.0, 1.0)),
                      schedule.echo_time, diagnostics)


# ---------------------------------------------------------------------------
# calibration helpers


class RephasingEstimate(NamedTuple):
    efficiency: float
    residual_bound: float


def estimate_rephasing_from_intercepts(eff_dd_zero: float, eff_nodd_zero: float) -> RephasingEstimate:
    """Rephasing efficiency from zero-storage intercepts with and without DD."""
    for v in (eff_dd_zero, eff_nodd_zero):
        if not 0.0 <= v <= 1.0:
            raise ParameterError("intercept efficiencies must lie in [0, 1]")
    if eff_nodd_zero == 0:
        raise ParameterError("reference intercept is zero")
    r = min(max(eff_dd_zero / eff_nodd_zero, 0.0), 1.0)
    return RephasingEstimate(r, 1.0 - r)


def noise_from_residual(residual_population: float, noise_calibration: float, noise_floor: float = 0.0) -> float:
    """Unconditional noise per temporal mode, affine in the stranded population."""
    if not 0.0 <= residual_population <= 1.0:
        raise ParameterError("residual population must lie in [0, 1]")
    if noise_calibration < 0 or not 0.0 <= noise_floor <= 1.0:
        raise ParameterError("calibration must be non-negative and floor in [0, 1]")
    return noise_floor + noise_calibration * residual_population


def noise_calibration(p_n_with: float, p_n_floor: float, residual_population: float) -> float:
    """Slope of the affine noise model through two measured points."""
    if residual_population <= 0:
        raise ParameterError("residual population must be positive")
    return (p_n_with - p_n_floor) / residual_population
