"""Spectral hole burning by optical pumping between hyperfine levels.

Each ion has three ground levels (|1/2>, |3/2>, |5/2>) and three excited
levels.  An ion is labelled by ``nu0``, the frequency of its |1/2>g ->
|5/2>e transition relative to the laser reference; transition (k, l) then
sits at ``nu0 + offset[k, l]``.  Excited states are eliminated: a pump
moves population out of ground level k at a rate proportional to its
overlap with the swept laser and returns it through the branching ratios.

Only ions able to absorb inside the probe range are simulated.  They form
nine shifted windows (one per transition) on a common frequency lattice.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.signal import fftconvolve

from .errors import ParameterError, SchemeError, ShapeError

GROUND = ("1/2g", "3/2g", "5/2g")
EXCITED = ("1/2e", "3/2e", "5/2e")


def _uniform3() -> np.ndarray:
    return np.full((3, 3), 1.0 / 3.0)


@dataclass(frozen=True)
class LevelScheme:
    """Hyperfine structure.  Splittings are between successive levels (Hz)."""

    ground_splittings: tuple[float, float] = (34.5e6, 46.2e6)
    excited_splittings: tuple[float, float] = (75.0e6, 102.0e6)
    relative_oscillator_strengths: np.ndarray = field(default_factory=_uniform3)
    branching: np.ndarray = field(default_factory=_uniform3)
    homogeneous_fwhm: float = 10e3

    def __post_init__(self):
        for name in ("relative_oscillator_strengths", "branching"):
            m = np.array(getattr(self, name), dtype=float)
            if m.shape != (3, 3):
                raise ShapeError(f"{name} must be 3x3")
            if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
                raise ParameterError(f"{name} rows must be non-negative and sum to 1")
            m.setflags(write=False)
            object.__setattr__(self, name, m)
        if len(self.ground_splittings) != 2 or len(self.excited_splittings) != 2:
            raise ShapeError("two ground and two excited splittings required")
        if min(self.ground_splittings) <= 0 or min(self.excited_splittings) <= 0:
            raise ParameterError("splittings must be positive")
        if not self.homogeneous_fwhm > 0:
            raise ParameterError("homogeneous linewidth must be positive")

    @property
    def ground_energies(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.ground_splittings)])

    @property
    def excited_energies(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.excited_splittings)])

    @property
    def offsets(self) -> np.ndarray:
        """offset[k, l]: frequency of g_k -> e_l minus that of 1/2g -> 5/2e."""
        eg, ee = self.ground_energies, self.excited_energies
        return (ee[None, :] - ee[2]) - (eg[:, None] - eg[0])

    def to_dict(self) -> dict:
        return {"ground_splittings": list(self.ground_splittings),
                "excited_splittings": list(self.excited_splittings),
                "relative_oscillator_strengths": self.relative_oscillator_strengths.tolist(),
                "branching": self.branching.tolist(),
                "homogeneous_fwhm": self.homogeneous_fwhm}

    @classmethod
    def from_dict(cls, d: dict) -> "LevelScheme":
        kw = dict(d)
        for k in ("ground_splittings", "excited_splittings"):
            if k in kw:
                kw[k] = tuple(kw[k])
        for k in ("relative_oscillator_strengths", "branching"):
            if k in kw:
                kw[k] = np.asarray(kw[k], dtype=float)
        return cls(**kw)


@dataclass(frozen=True)
class PumpStep:
    """Laser swept over ``sweep_band`` (ion frequencies ``nu0``) on g_k -> e_l."""

    ground_level: int
    excited_level: int
    sweep_band: tuple[float, float]
    duration: float
    rate: float
    linewidth: float = 10e3  # FWHM of the pump's Lorentzian reach

    def __post_init__(self):
        object.__setattr__(self, "sweep_band", (float(self.sweep_band[0]), float(self.sweep_band[1])))
        if not self.duration > 0:
            raise ParameterError("pump duration must be positive")
        if self.rate < 0:
            raise ParameterError("pump rate must be non-negative")
        if self.sweep_band[1] < self.sweep_band[0]:
            raise ParameterError("sweep band must satisfy lo <= hi")
        if not self.linewidth > 0:
            raise ParameterError("pump linewidth must be positive")

    def to_dict(self) -> dict:
        return {"ground_level": self.ground_level, "excited_level": self.excited_level,
                "sweep_band": list(self.sweep_band), "duration": self.duration, "rate": self.rate,
                "linewidth": self.linewidth}


@dataclass
class Populations:
    """Ground-level populations (3, n_cells) on the lattice ``nu0`` (Hz)."""

    nu0: np.ndarray
    pop: np.ndarray
    step: float
    probe_half_range: float

    def __post_init__(self):
        if self.pop.shape != (3, len(self.nu0)):
            raise ShapeError("population array must be (3, n_cells)")

    def class_view(self, scheme: LevelScheme, x: np.ndarray | None = None) -> np.ndarray:
        """Populations as (transition class, ground level, x) with nu0 = x - offset."""
        x = probe_grid(self.step, self.probe_half_range) if x is None else np.asarray(x, dtype=float)
        off = scheme.offsets.ravel()
        out = np.empty((9, 3, len(x)))
        for c, o in enumerate(off):
            for k in range(3):
                out[c, k] = np.interp(x - o, self.nu0, self.pop[k], left=1 / 3, right=1 / 3)
        return out


def probe_grid(step: float, half_range: float) -> np.ndarray:
    n = int(round(half_range / step))
    return step * np.arange(-n, n + 1)


def _lattice_cells(scheme: LevelScheme, step: float, half_range: float) -> np.ndarray:
    n = int(round(half_range / step))
    rel = np.arange(-n, n + 1)
    idx = [np.round(-o / step).astype(np.int64) + rel for o in scheme.offsets.ravel()]
    return np.unique(np.concatenate(idx))


def initial_populations(scheme: LevelScheme, step: float = 5e3, probe_half_range: float = 4e6) -> Populations:
    if not (step > 0 and probe_half_range > 0):
        raise ParameterError("lattice step and probe range must be positive")
    cells = _lattice_cells(scheme, step, probe_half_range)
    return Populations(step * cells.astype(float), np.full((3, len(cells)), 1.0 / 3.0), step, probe_half_range)


def _coverage(u: np.ndarray, lo: float, hi: float, hwhm: float) -> np.ndarray:
    """Box [lo, hi] convolved with a unit-area Lorentzian, evaluated at u."""
    return (np.arctan((hi - u) / hwhm) - np.arctan((lo - u) / hwhm)) / math.pi


def rate_matrices(scheme: LevelScheme, step: PumpStep, nu0: np.ndarray) -> np.ndarray:
    """Ground-level rate matrices (n_cells, 3, 3); columns sum to zero."""
    k0, l0 = step.ground_level, step.excited_level
    if not (0 <= k0 < 3 and 0 <= l0 < 3):
        raise SchemeError(f"pump addresses undefined levels ({k0}, {l0})")
    s = scheme.relative_oscillator_strengths
    if s[k0, l0] <= 0:
        raise SchemeError("pumped transition has zero oscillator strength")
    off = scheme.offsets
    lo, hi = step.sweep_band
    laser_lo, laser_hi = off[k0, l0] + lo, off[k0, l0] + hi
    hw = 0.5 * step.linewidth
    # r[n, k, l]: excitation rate of cell n from g_k to e_l
    res = nu0[:, None, None] + off[None]
    r = step.rate * (s / s[k0, l0])[None] * _coverage(res, laser_lo, laser_hi, hw)
    b = scheme.branching
    m = np.einsum("nkl,lm->nmk", r, b)
    out = r.sum(axis=2)
    idx = np.arange(3)
    m[:, idx, idx] -= out
    return m


def burn(scheme: LevelScheme, background_depth: float, steps: Sequence[PumpStep], *,
         step: float = 5e3, probe_half_range: float = 4e6,
         initial: Populations | None = None) -> Populations:
    """Apply pump steps in order; each is solved exactly with a matrix exponential."""
    if background_depth < 0:
        raise ParameterError("background depth must be non-negative")
    pops = initial or initial_populations(scheme, step, probe_half_range)
    lim = pops.probe_half_range
    p = pops.pop.T.copy()  # (n, 3)
    for st in steps:
        lo, hi = st.sweep_band
        if lo < -lim or hi > lim:
            raise ParameterError(f"sweep band {st.sweep_band} outside the simulated range +-{lim:g} Hz")
        m = rate_matrices(scheme, st, pops.nu0)
        act = np.abs(m).max(axis=(1, 2)) * st.duration > 1e-14
        if np.any(act):
            prop = expm(m[act] * st.duration)
            p[act] = np.einsum("nmk,nk->nm", prop, p[act])
    return Populations(pops.nu0, p.T.copy(), pops.step, pops.probe_half_range)


@dataclass
class AbsorptionProfile:
    grid: np.ndarray
    alpha: np.ndarray
    background_depth: float

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.alpha = np.asarray(self.alpha, dtype=float)
        if self.grid.shape != self.alpha.shape:
            raise ShapeError("grid and alpha differ in shape")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["freq_hz", "alpha"])
            for f, a in zip(self.grid, self.alpha):
                w.writerow([repr(float(f)), repr(float(a))])


def _cell_lorentz(u: np.ndarray, h: float, hwhm: float) -> np.ndarray:
    return (np.arctan((u + 0.5 * h) / hwhm) - np.arctan((u - 0.5 * h) / hwhm)) / math.pi


def absorption_spectrum(pops: Populations, scheme: LevelScheme, background_depth: float,
                        grid: np.ndarray | None = None) -> AbsorptionProfile:
    """alpha(f) = background * (1 + sum_kl s_kl (pop_k - 1/3) * L)(f - offset_kl).

    Unburned ions contribute exactly the background, so only deviations
    from 1/3 need convolving.
    """
    if background_depth < 0:
        raise ParameterError("background depth must be non-negative")
    h = pops.step
    cells = np.round(pops.nu0 / h).astype(np.int64)
    if pops.pop.shape != (3, len(cells)):
        raise ShapeError("populations do not match their lattice")
    grid = probe_grid(h, pops.probe_half_range) if grid is None else np.asarray(grid, dtype=float)
    lo, hi = int(cells.min()), int(cells.max())
    n = hi - lo + 1
    lattice = h * np.arange(lo, hi + 1)
    kern = _cell_lorentz(h * np.arange(-(n - 1), n), h, 0.5 * scheme.homogeneous_fwhm)
    s = scheme.relative_oscillator_strengths
    off = scheme.offsets
    total = np.zeros_like(grid)
    for k in range(3):
        dev = np.zeros(n)
        dev[cells - lo] = pops.pop[k] - 1.0 / 3.0
        if not np.any(dev):
            continue
        # a (2n-1)-point kernel against n samples: 'valid' leaves the n lattice-aligned points
        g = fftconvolve(dev, kern, mode="valid")
        for l in range(3):
            total += s[k, l] * np.interp(grid - off[k, l], lattice, g, left=0.0, right=0.0)
    alpha = background_depth * np.maximum(1.0 + total, 0.0)
    return AbsorptionProfile(grid, alpha, background_depth)


# ---------------------------------------------------------------------------
# preparation recipe and profile metrics


def default_preparation(window: float = 4.5e6, feature: float = 1.8e6, guard: float = 0.1e6,
                        cycles: int = 6, burn_rate: float = 1e4, burn_time: float = 10e-3,
                        rate: float = 2e4, step_time: float = 1e-3) -> list[PumpStep]:
    """Burn a wide hole on 1/2g -> 5/2e, then build the feature.

    Each cycle cleans the window flanks on 1/2g -> 5/2e and pumps the
    feature ions out of 3/2g (via 5/2e) and 5/2g (via 3/2e) so that they
    collect in 1/2g.
    """
    w, f = 0.5 * window, 0.5 * feature
    steps = [PumpStep(0, 2, (-w, w), burn_time, burn_rate)]
    for _ in range(cycles):
        steps += [PumpStep(2, 1, (-f, f), step_time, rate),
                  PumpStep(1, 2, (-f, f), step_time, rate),
                  PumpStep(0, 2, (-w, -f - guard), step_time, rate),
                  PumpStep(0, 2, (f + guard, w), step_time, rate)]
    return steps


def prepare_profile(scheme: LevelScheme | None = None, background_depth: float = 2.09,
                    steps: Sequence[PumpStep] | None = None, **lattice) -> AbsorptionProfile:
    scheme = scheme or LevelScheme()
    steps = default_preparation() if steps is None else steps
    pops = burn(scheme, background_depth, steps, **lattice)
    return absorption_spectrum(pops, scheme, background_depth)


def _crossing(x0, y0, x1, y1, level):
    return x0 + (level - y0) * (x1 - x0) / (y1 - y0)


def feature_fwhm(profile: AbsorptionProfile, search: float = 1.5e6) -> tuple[float, float, float]:
    """(fwhm, left edge, right edge) of the central absorption feature."""
    f, a = profile.grid, profile.alpha
    inner = np.flatnonzero(np.abs(f) <= search)
    if inner.size == 0:
        raise ParameterError("profile does not cover the search region")
    ip = inner[np.argmax(a[inner])]
    half = 0.5 * a[ip]
    if half <= 0:
        raise ParameterError("no central feature")
    i = ip
    while i > 0 and a[i] >= half:
        i -= 1
    j = ip
    while j < len(a) - 1 and a[j] >= half:
        j += 1
    if a[i] >= half or a[j] >= half:
        raise ParameterError("feature half-maximum not bracketed")
    left = _crossing(f[i], a[i], f[i + 1], a[i + 1], half)
    right = _crossing(f[j - 1], a[j - 1], f[j], a[j], half)
    return right - left, left, right


def transparent_width(profile: AbsorptionProfile, threshold: float = 0.05) -> float:
    """Width between the first points outside the feature where alpha reaches
    ``threshold`` of the background."""
    _, left, right = feature_fwhm(profile)
    f, a = profile.grid, profile.alpha
    level = threshold * profile.background_depth
    # walk out of the feature first, then to the window edge
    i = int(np.searchsorted(f, left)) - 1
    while i > 0 and a[i] >= level:
        i -= 1
    while i > 0 and a[i] < level:
        i -= 1
    j = int(np.searchsorted(f, right))
    while j < len(a) - 1 and a[j] >= level:
        j += 1
    while j < len(a) - 1 and a[j] < level:
        j += 1
    if a[i] < level or a[j] < level:
        raise ParameterError("window edges not inside the profile")
    return _crossing(f[j - 1], a[j - 1], f[j], a[j], level) - _crossing(f[i], a[i], f[i + 1], a[i + 1], level)


def window_residual(profile: AbsorptionProfile, window: float = 4e6, feature: float = 1.8e6,
                    guard: float = 0.1e6) -> float:
    """Mean alpha / background over the window with the feature (plus guard) removed."""
    f = profile.grid
    sel = (np.abs(f) <= 0.5 * window) & (np.abs(f) >= 0.5 * feature + guard)
    if not np.any(sel):
        raise ParameterError("empty evaluation region")
    return float(np.mean(profile.alpha[sel]) / profile.background_depth)
