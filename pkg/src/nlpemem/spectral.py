"""Spectral distributions, pulse envelopes and two-level propagation.

Conventions used throughout the package:

* frequencies and detunings are ordinary frequencies in Hz,
* Rabi frequencies carried by :class:`Pulse` are angular (rad/s),
* the two-level basis is ordered (ground, excited) and the rotating-frame
  Hamiltonian is ``H = 1/2 [[-D, W e^{-i phi}], [W e^{i phi}, D]]`` with
  ``D = 2 pi (detuning - carrier - sweep(t))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special
from scipy.optimize import brentq

from ._parallel import BLOCK_SIZE, block_rng, block_slices, parallel_map
from .errors import EmptyEnsembleError, NumericDomainError, ParameterError

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


class Kind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LORENTZIAN = "lorentzian"
    VOIGT = "voigt"


@dataclass(frozen=True)
class SpectralDistribution:
    """Inhomogeneous line: Gaussian, Lorentzian or their convolution (Voigt).

    Widths are full widths at half maximum in Hz.  A distribution with all
    widths zero is a delta line; it can be sampled but has no density.
    """

    kind: Kind
    gauss_fwhm: float = 0.0
    lorentz_fwhm: float = 0.0
    center: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        for name in ("gauss_fwhm", "lorentz_fwhm", "center"):
            v = getattr(self, name)
            if not np.isfinite(v):
                raise ParameterError(f"{name} must be finite, got {v}")
        if self.gauss_fwhm < 0 or self.lorentz_fwhm < 0:
            raise ParameterError("FWHM values must be non-negative")
        if self.kind is Kind.GAUSSIAN and self.lorentz_fwhm != 0:
            raise ParameterError("a Gaussian distribution has no Lorentzian width")
        if self.kind is Kind.LORENTZIAN and self.gauss_fwhm != 0:
            raise ParameterError("a Lorentzian distribution has no Gaussian width")

    @classmethod
    def gaussian(cls, fwhm: float, center: float = 0.0) -> "SpectralDistribution":
        return cls(Kind.GAUSSIAN, gauss_fwhm=fwhm, center=center)

    @classmethod
    def lorentzian(cls, fwhm: float, center: float = 0.0) -> "SpectralDistribution":
        return cls(Kind.LORENTZIAN, lorentz_fwhm=fwhm, center=center)

    @classmethod
    def voigt(cls, gauss_fwhm: float, lorentz_fwhm: float, center: float = 0.0) -> "SpectralDistribution":
        return cls(Kind.VOIGT, gauss_fwhm=gauss_fwhm, lorentz_fwhm=lorentz_fwhm, center=center)

    @classmethod
    def delta(cls, center: float = 0.0) -> "SpectralDistribution":
        return cls(Kind.GAUSSIAN, gauss_fwhm=0.0, center=center)

    @property
    def sigma(self) -> float:
        return self.gauss_fwhm * FWHM_TO_SIGMA

    @property
    def hwhm(self) -> float:
        """Lorentzian half width (the Cauchy scale parameter)."""
        return 0.5 * self.lorentz_fwhm

    @property
    def is_degenerate(self) -> bool:
        return self.gauss_fwhm == 0 and self.lorentz_fwhm == 0

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "gauss_fwhm": self.gauss_fwhm,
                "lorentz_fwhm": self.lorentz_fwhm, "center": self.center}

    @classmethod
    def from_dict(cls, d: dict) -> "SpectralDistribution":
        return cls(Kind(d["kind"]), float(d.get("gauss_fwhm", 0.0)),
                   float(d.get("lorentz_fwhm", 0.0)), float(d.get("center", 0.0)))


def _require_density(dist: SpectralDistribution) -> None:
    if dist.is_degenerate:
        raise ParameterError("distribution has zero width; density undefined")


def pdf(dist: SpectralDistribution, detuning) -> np.ndarray:
    """Probability density (1/Hz) at ``detuning`` (Hz)."""
    _require_density(dist)
    x = np.asarray(detuning, dtype=float) - dist.center
    if dist.lorentz_fwhm == 0:
        s = dist.sigma
        return np.exp(-0.5 * (x / s) ** 2) / (s * math.sqrt(2 * math.pi))
    if dist.gauss_fwhm == 0:
        g = dist.hwhm
        return g / (math.pi * (x * x + g * g))
    return special.voigt_profile(x, dist.sigma, dist.hwhm)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(2000)


def cdf(dist: SpectralDistribution, detuning) -> np.ndarray:
    """Cumulative distribution function.

    For the Voigt case the Gaussian cdf is averaged over the Lorentzian
    component with the substitution ``y = hwhm * tan(theta)``, which turns the
    heavy-tailed integral into a smooth one on a finite interval.
    """
    _require_density(dist)
    x = np.asarray(detuning, dtype=float) - dist.center
    if dist.lorentz_fwhm == 0:
        return special.ndtr(x / dist.sigma)
    if dist.gauss_fwhm == 0:
        return 0.5 + np.arctan(x / dist.hwhm) / math.pi
    theta = 0.5 * math.pi * _GL_NODES
    shift = dist.hwhm * np.tan(theta)
    vals = special.ndtr((x[..., None] - shift) / dist.sigma)
    return 0.5 * vals @ _GL_WEIGHTS


def total_fwhm(dist: SpectralDistribution) -> float:
    """Full width at half maximum of the whole profile, found numerically."""
    if dist.is_degenerate:
        return 0.0
    if dist.lorentz_fwhm == 0:
        return dist.gauss_fwhm
    if dist.gauss_fwhm == 0:
        return dist.lorentz_fwhm
    half = 0.5 * float(pdf(dist, dist.center))
    hi = dist.gauss_fwhm + dist.lorentz_fwhm
    x = brentq(lambda u: float(pdf(dist, dist.center + u)) - half, 0.0, hi, xtol=1e-12 * hi, rtol=1e-14)
    return 2.0 * x


def _sample_block(dist: SpectralDistribution, rng: np.random.Generator, n: int) -> np.ndarray:
    out = np.full(n, dist.center, dtype=float)
    if dist.gauss_fwhm > 0:
        out += dist.sigma * rng.standard_normal(n)
    if dist.lorentz_fwhm > 0:
        out += dist.hwhm * rng.standard_cauchy(n)
    return out


def sample(dist: SpectralDistribution, seed: int, n: int, *, stream: int = 0, workers: int = 1) -> np.ndarray:
    """Draw ``n`` detunings.

    Ion ``i`` always receives the same value for a given ``(seed, stream)``,
    whatever ``workers`` is.  Voigt draws are the sum of independent Gaussian
    and Cauchy draws.
    """
    n = int(n)
    if n < 1:
        raise EmptyEnsembleError("sample size must be at least 1")
    slices = block_slices(n, BLOCK_SIZE)

    def run(k):
        lo, hi = slices[k]
        return _sample_block(dist, block_rng(seed, k, stream), hi - lo)

    return np.concatenate(parallel_map(run, len(slices), workers))


# ---------------------------------------------------------------------------
# pulses


class PulseShape(str, enum.Enum):
    SQUARE = "square"
    CHS = "chs"


@dataclass(frozen=True)
class Pulse:
    """A driving-field segment.

    ``peak_rabi`` is angular (rad/s).  For CHS pulses the envelope is
    ``peak_rabi * sech(beta (t - T/2))`` and the carrier sweeps as
    ``(chs_bandwidth / 2) * tanh(beta (t - T/2))`` (Hz); ``beta`` is fixed by
    requiring the envelope to fall to ``chs_truncation`` of its peak at the
    pulse edges.
    """

    shape: PulseShape
    peak_rabi: float
    duration: float
    carrier_detuning: float = 0.0
    phase: float = 0.0
    chs_bandwidth: float = 0.0
    chs_truncation: float = 0.03

    def __post_init__(self):
        object.__setattr__(self, "shape", PulseShape(self.shape))
        for name in ("peak_rabi", "duration", "carrier_detuning", "phase", "chs_bandwidth", "chs_truncation"):
            if not np.isfinite(getattr(self, name)):
                raise NumericDomainError(f"{name} must be finite")
        if self.duration <= 0:
            raise ParameterError("pulse duration must be positive")
        if self.peak_rabi < 0:
            raise ParameterError("peak_rabi must be non-negative")
        if self.shape is PulseShape.CHS:
            if not 0 < self.chs_truncation < 1:
                raise ParameterError("chs_truncation must lie in (0, 1)")
            if self.chs_bandwidth < 0:
                raise ParameterError("chs_bandwidth must be non-negative")

    @classmethod
    def square(cls, peak_rabi: float, duration: float, **kw) -> "Pulse":
        return cls(PulseShape.SQUARE, peak_rabi, duration, **kw)

    @classmethod
    def square_pi(cls, peak_rabi: float, **kw) -> "Pulse":
        return cls(PulseShape.SQUARE, peak_rabi, math.pi / peak_rabi, **kw)

    @classmethod
    def chs(cls, peak_rabi: float, duration: float, bandwidth: float, truncation: float = 0.03, **kw) -> "Pulse":
        return cls(PulseShape.CHS, peak_rabi, duration, chs_bandwidth=bandwidth, chs_truncation=truncation, **kw)

    @property
    def beta(self) -> float:
        return 2.0 * math.acosh(1.0 / self.chs_truncation) / self.duration

    def envelope(self, t) -> np.ndarray:
        """Instantaneous Rabi frequency (rad/s) at time ``t`` in [0, duration]."""
        t = np.asarray(t, dtype=float)
        if self.shape is PulseShape.SQUARE:
            return np.full_like(t, self.peak_rabi)
        return self.peak_rabi / np.cosh(self.beta * (t - 0.5 * self.duration))

    def sweep(self, t) -> np.ndarray:
        """Carrier frequency offset (Hz) relative to ``carrier_detuning``."""
        t = np.asarray(t, dtype=float)
        if self.shape is PulseShape.SQUARE:
            return np.zeros_like(t)
        return 0.5 * self.chs_bandwidth * np.tanh(self.beta * (t - 0.5 * self.duration))

    def area(self) -> float:
        """Pulse area (rad), i.e. the time integral of the envelope."""
        if self.shape is PulseShape.SQUARE:
            return self.peak_rabi * self.duration
        b = self.beta
        return self.peak_rabi * 4.0 * math.atan(math.tanh(0.25 * b * self.duration)) / b

    def max_rate(self, detuning) -> float:
        """Upper bound on the instantaneous generalised Rabi frequency (rad/s)."""
        off = np.max(np.abs(np.asarray(detuning, dtype=float) - self.carrier_detuning)) if np.size(detuning) else 0.0
        return max(self.peak_rabi, 2 * math.pi * (0.5 * self.chs_bandwidth + off), 1e-300)

    def to_dict(self) -> dict:
        return {"shape": self.shape.value, "peak_rabi": self.peak_rabi, "duration": self.duration,
                "carrier_detuning": self.carrier_detuning, "phase": self.phase,
                "chs_bandwidth": self.chs_bandwidth, "chs_truncation": self.chs_truncation}

    @classmethod
    def from_dict(cls, d: dict) -> "Pulse":
        return cls(PulseShape(d["shape"]), float(d["peak_rabi"]), float(d["duration"]),
                   float(d.get("carrier_detuning", 0.0)), float(d.get("phase", 0.0)),
                   float(d.get("chs_bandwidth", 0.0)), float(d.get("chs_truncation", 0.03)))


# ---------------------------------------------------------------------------
# two-level propagation


@dataclass(frozen=True)
class TwoLevelState:
    """Two-level density matrix in population/coherence form.

    ``coherence`` is the excited-ground element rho_eg.
    """

    population_excited: float = 0.0
    coherence: complex = 0j

    @classmethod
    def ground(cls) -> "TwoLevelState":
        return cls(0.0, 0j)

    @classmethod
    def from_density(cls, rho: np.ndarray) -> "TwoLevelState":
        return cls(float(np.real(rho[1, 1])), complex(rho[1, 0]))

    def density(self) -> np.ndarray:
        p, c = self.population_excited, self.coherence
        return np.array([[1 - p, np.conj(c)], [c, p]], dtype=complex)

    def bloch(self) -> np.ndarray:
        c = self.coherence
        return np.array([2 * c.real, 2 * c.imag, 1 - 2 * self.population_excited])

    @property
    def bloch_norm(self) -> float:
        return float(np.linalg.norm(self.bloch()))


def _hamiltonian(rabi, phase, delta) -> np.ndarray:
    """Rotating-frame Hamiltonian stack; all inputs broadcast to shape (m,)."""
    rabi, delta = np.broadcast_arrays(np.asarray(rabi, float), np.asarray(delta, float))
    h = np.empty(rabi.shape + (2, 2), dtype=complex)
    off = 0.5 * rabi * np.exp(-1j * phase)
    h[..., 0, 0] = -0.5 * delta
    h[..., 1, 1] = 0.5 * delta
    h[..., 0, 1] = off
    h[..., 1, 0] = np.conj(off)
    return h


def square_propagator(pulse: Pulse, detuning, rabi_scale=1.0) -> np.ndarray:
    """Closed-form SU(2) propagator of a square pulse, shape ``(..., 2, 2)``."""
    det = np.asarray(detuning, dtype=float)
    rabi = pulse.peak_rabi * np.asarray(rabi_scale, dtype=float)
    rabi, det = np.broadcast_arrays(rabi, det)
    delta = 2 * math.pi * (det - pulse.carrier_detuning)
    gen = np.hypot(rabi, delta)
    half = 0.5 * gen * pulse.duration
    c = np.cos(half)
    # sin(x)/x form keeps gen = 0 finite
    s_over = np.where(gen > 0, np.sin(half) / np.where(gen > 0, gen, 1.0), 0.5 * pulse.duration)
    nx = rabi * math.cos(pulse.phase)
    ny = rabi * math.sin(pulse.phase)
    u = np.empty(rabi.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = c + 1j * s_over * delta
    u[..., 1, 1] = c - 1j * s_over * delta
    u[..., 0, 1] = -1j * s_over * (nx - 1j * ny)
    u[..., 1, 0] = -1j * s_over * (nx + 1j * ny)
    return u


def integrate_propagator(pulse: Pulse, detuning, rabi_scale=1.0, steps_per_radian: int = 200) -> np.ndarray:
    """Fixed-step RK4 propagator for any pulse shape.

    The step obeys ``dt <= 1 / (steps_per_radian * max_rate)`` where
    ``max_rate`` bounds the generalised Rabi frequency over the pulse.
    """
    det = np.atleast_1d(np.asarray(detuning, dtype=float))
    scale = np.asarray(rabi_scale, dtype=float)
    scale, det = np.broadcast_arrays(scale, det)
    shape = det.shape
    det = det.ravel()
    scale = scale.ravel()
    if not (np.all(np.isfinite(det)) and np.all(np.isfinite(scale))):
        raise NumericDomainError("non-finite detuning or Rabi scale")
    rate = pulse.max_rate(det) * max(1.0, float(np.max(scale)) if scale.size else 1.0)
    n = max(1, int(math.ceil(pulse.duration * steps_per_radian * rate)))
    dt = pulse.duration / n
    base = 2 * math.pi * (det - pulse.carrier_detuning)

    def gen(t):
        rabi = scale * float(pulse.envelope(t))
        delta = base - 2 * math.pi * float(pulse.sweep(t))
        return -1j * _hamiltonian(rabi, pulse.phase, delta)

    u = np.broadcast_to(np.eye(2, dtype=complex), det.shape + (2, 2)).copy()
    for k in range(n):
        t = k * dt
        a = gen(t)
        m = gen(t + 0.5 * dt)
        b = gen(t + dt)
        k1 = a @ u
        k2 = m @ (u + 0.5 * dt * k1)
        k3 = m @ (u + 0.5 * dt * k2)
        k4 = b @ (u + dt * k3)
        u = u + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return u.reshape(shape + (2, 2))


def propagator(pulse: Pulse, detuning, rabi_scale=1.0, *, numeric: bool = False) -> np.ndarray:
    """Propagator for ``pulse`` at each detuning (Hz)."""
    if not np.all(np.isfinite(np.asarray(detuning, dtype=float))):
        raise NumericDomainError("non-finite detuning")
    if pulse.shape is PulseShape.SQUARE and not numeric:
        return square_propagator(pulse, detuning, rabi_scale)
    return integrate_propagator(pulse, detuning, rabi_scale)


def propagate_two_level(pulse: Pulse, detuning: float, initial: TwoLevelState | None = None,
                        *, numeric: bool = False) -> TwoLevelState:
    """Evolve a single two-level state through ``pulse``."""
    if initial is None:
        initial = TwoLevelState.ground()
    if not (np.isfinite(detuning) and np.isfinite(initial.population_excited) and np.isfinite(initial.coherence)):
        raise NumericDomainError("non-finite input")
    u = propagator(pulse, detuning, numeric=numeric)
    u = np.asarray(u).reshape(2, 2)
    rho = u @ initial.density() @ u.conj().T
    return TwoLevelState.from_density(rho)


def transfer_probability(pulse: Pulse, detuning, rabi_scale=1.0, *, numeric: bool = False) -> np.ndarray:
    """Ground-to-excited transfer |U_eg|^2 for each detuning."""
    u = propagator(pulse, detuning, rabi_scale, numeric=numeric)
    return np.abs(u[..., 1, 0]) ** 2


def gaussian_mode_scales(n: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Rabi scale factors and weights for ions across a Gaussian optical mode.

    With intensity ``I = exp(-2 r^2 / w^2)`` and ions weighted by the
    intensity they couple with, ``u = I/I0`` is uniformly distributed on
    (0, 1] and the Rabi frequency scales as ``sqrt(u)``.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    return np.sqrt(u), 0.5 * w


def transfer_efficiency(pulse: Pulse, dist: SpectralDistribution | None, band: Sequence[float],
                        n_points: int = 201, rabi_scales=None, rabi_weights=None) -> float:
    """Density-weighted mean transfer over the detuning interval ``band``.

    ``dist=None`` weights the band uniformly.  Optional ``rabi_scales`` /
    ``rabi_weights`` additionally average over a spread of drive strengths.
    """
    lo, hi = float(band[0]), float(band[1])
    if not (np.isfinite(lo) and np.isfinite(hi)) or hi < lo:
        raise ParameterError("band must be a finite interval with lo <= hi")
    if rabi_scales is None:
        scales, sw = np.array([1.0]), np.array([1.0])
    else:
        scales = np.asarray(rabi_scales, dtype=float)
        sw = np.ones_like(scales) if rabi_weights is None else np.asarray(rabi_weights, dtype=float)
    sw = sw / sw.sum()
    if hi == lo:
        grid = np.array([lo])
        w = np.array([1.0])
    else:
        grid = np.linspace(lo, hi, n_points)
        w = np.ones_like(grid) if dist is None else pdf(dist, grid)
        w = w * np.r_[0.5, np.ones(n_points - 2), 0.5]
        if w.sum() <= 0:
            raise ParameterError("distribution has no weight inside band")
    w = w / w.sum()
    p = transfer_probability(pulse, grid[None, :], scales[:, None])
    return float(np.clip(sw @ p @ w, 0.0, 1.0))


# ---------------------------------------------------------------------------
# RF drive calibration


def rabi_from_power(power: float, calibration: float) -> float:
    """Rabi frequency (Hz) for an RF power (W); ``calibration`` in Hz/sqrt(W)."""
    if power < 0:
        raise ParameterError("power must be non-negative")
    return calibration * math.sqrt(power)


def calibration_from_anchor(rabi: float, power: float) -> float:
    if power <= 0:
        raise ParameterError("anchor power must be positive")
    return rabi / math.sqrt(power)


def power_for_rabi(rabi: float, calibration: float) -> float:
    if calibration <= 0:
        raise ParameterError("calibration must be positive")
    return (rabi / calibration) ** 2
