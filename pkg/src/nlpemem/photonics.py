"""Photon statistics and time-bin qubit analysis.

The memory is used as its own unbalanced interferometer: splitting the last
readout pulse into two pi/2 pulses maps an (early, late) input onto three
output bins.  Expected counts per detection window are
``mu_q * eta_m * |b_k|^2 + p_n``.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from ._parallel import block_rng, block_slices, parallel_map
from .errors import ConfigurationError, ParameterError

DETECTION_WINDOW = 1.1e-6
BIN_SEPARATION = 2.0e-6


def poisson_pmf(mu: float, n) -> np.ndarray | float:
    """exp(-mu) mu^n / n!, evaluated in log space."""
    if mu < 0 or not np.isfinite(mu):
        raise ParameterError("mean photon number must be finite and non-negative")
    n_arr = np.asarray(n)
    if np.any(n_arr < 0):
        raise ParameterError("photon number must be non-negative")
    if mu == 0:
        out = (n_arr == 0).astype(float)
    else:
        out = np.exp(-mu + n_arr * math.log(mu) - gammaln(n_arr + 1.0))
    return float(out) if out.ndim == 0 else out


def snr(mu: float, eta_m: float, p_n: float) -> float:
    """Signal-to-noise ratio ``mu * eta_m / p_n``; ``inf`` when noise is zero."""
    if p_n < 0:
        raise ParameterError("noise probability must be non-negative")
    if p_n == 0:
        return math.inf
    return mu * eta_m / p_n


@dataclass(frozen=True)
class MemoryChannel:
    eta_m: float
    p_n: float
    f_c: float = 1.0

    def __post_init__(self):
        for k in ("eta_m", "p_n", "f_c"):
            v = getattr(self, k)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{k} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class TimeBinQubit:
    amp_early: complex
    amp_late: complex
    mean_photons_mu_q: float = 1.0

    def __post_init__(self):
        norm = abs(self.amp_early) ** 2 + abs(self.amp_late) ** 2
        if abs(norm - 1.0) > 1e-12:
            raise ParameterError(f"qubit amplitudes not normalised (|a_e|^2+|a_l|^2 = {norm})")
        if self.mean_photons_mu_q < 0:
            raise ParameterError("mean photon number must be non-negative")

    @classmethod
    def named(cls, label: str, mu_q: float = 1.0) -> "TimeBinQubit":
        """One of ``e``, ``l``, ``e+l``, ``e+il`` (and their orthogonal partners)."""
        r = 1 / math.sqrt(2)
        table = {"e": (1, 0), "l": (0, 1), "e+l": (r, r), "e-l": (r, -r),
                 "e+il": (r, 1j * r), "e-il": (r, -1j * r)}
        if label not in table:
            raise ParameterError(f"unknown qubit label {label!r}")
        a, b = table[label]
        return cls(complex(a), complex(b), mu_q)


class Analysis(str, enum.Enum):
    FULL_PI = "full_pi"
    HALF_PI_PAIR = "half_pi_pair"


def output_amplitudes(qubit: TimeBinQubit, analysis: Analysis | str, phase: float = 0.0) -> np.ndarray:
    """Retrieved amplitude in each output bin.

    FULL_PI keeps the early/late bins; HALF_PI_PAIR gives three bins
    ``(a_e/2, (a_e e^{i phase} + a_l)/2, a_l e^{i phase}/2)``.
    """
    a, b = qubit.amp_early, qubit.amp_late
    if Analysis(analysis) is Analysis.FULL_PI:
        return np.array([a, b], dtype=complex)
    ph = np.exp(1j * phase)
    return 0.5 * np.array([a, a * ph + b, b * ph], dtype=complex)


def expected_counts(channel: MemoryChannel, qubit: TimeBinQubit, analysis, phase: float = 0.0) -> np.ndarray:
    """Mean clicks per repetition in each output window."""
    b = output_amplitudes(qubit, analysis, phase)
    return qubit.mean_photons_mu_q * channel.eta_m * np.abs(b) ** 2 + channel.p_n


def port_efficiency(analysis) -> float:
    """Fraction of the retrieved signal landing in the analysed window for an
    ideal-interference input: 1 for FULL_PI, 1/2 for the central HALF_PI_PAIR bin."""
    return 1.0 if Analysis(analysis) is Analysis.FULL_PI else 0.5


@dataclass
class CountHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    repetitions: int
    detection_window: float = DETECTION_WINDOW

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.bin_edges.shape != (len(self.counts), 2):
            raise ParameterError("bin_edges must hold one (start, end) pair per count")
        if self.repetitions < 1:
            raise ParameterError("repetitions must be at least 1")
        if np.any(self.counts < 0):
            raise ParameterError("counts must be non-negative")

    def rates(self) -> np.ndarray:
        return self.counts / self.repetitions

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_start_s", "bin_end_s", "counts"])
            for (a, b), c in zip(self.bin_edges, self.counts):
                w.writerow([repr(float(a)), repr(float(b)), int(c)])


def window_edges(n_bins: int, echo_time: float = 0.0, separation: float = BIN_SEPARATION,
                 window: float = DETECTION_WINDOW) -> np.ndarray:
    centers = echo_time + separation * np.arange(n_bins)
    return np.column_stack([centers - 0.5 * window, centers + 0.5 * window])


def simulate_counts(channel: MemoryChannel, qubit: TimeBinQubit, analysis, repetitions: int,
                    seed: int, phase: float = 0.0, *, block_size: int = 100_000, workers: int = 1,
                    echo_time: float = 0.0, detection_window: float = DETECTION_WINDOW) -> CountHistogram:
    """Poisson-sample click counts over ``repetitions`` runs.

    Repetitions are grouped in fixed blocks, each with its own derived seed,
    so the histogram does not depend on ``workers``.
    """
    repetitions = int(repetitions)
    if repetitions < 1:
        raise ParameterError("repetitions must be at least 1")
    lam = expected_counts(channel, qubit, analysis, phase)
    slices = block_slices(repetitions, block_size)

    def run(k):
        lo, hi = slices[k]
        return block_rng(seed, k, stream=7).poisson(lam * (hi - lo))

    parts = parallel_map(run, len(slices), workers)
    counts = np.sum(np.vstack(parts), axis=0)
    return CountHistogram(window_edges(len(lam), echo_time, window=detection_window), counts,
                          repetitions, detection_window)


def fidelity_from_counts(n_plus: float, n_minus: float) -> float:
    """Fidelity from counts projected on the ideal and orthogonal states."""
    if n_plus < 0 or n_minus < 0:
        raise ParameterError("counts must be non-negative")
    if n_plus + n_minus == 0:
        raise ParameterError("fidelity undefined without any counts")
    return n_plus / (n_plus + n_minus)


def measure_fidelity(channel: MemoryChannel, label: str, mu_q: float, repetitions: int, seed: int,
                     workers: int = 1) -> tuple[float, int, int]:
    """Monte Carlo fidelity for one of the four benchmark inputs.

    Basis states use FULL_PI readout (N+ in the input bin, N- in the other);
    superpositions use the central HALF_PI_PAIR bin at the constructive and
    destructive analysis phases.
    """
    q = TimeBinQubit.named(label, mu_q)
    if label in ("e", "l"):
        h = simulate_counts(channel, q, Analysis.FULL_PI, repetitions, seed, workers=workers)
        k = 0 if label == "e" else 1
        n_plus, n_minus = int(h.counts[k]), int(h.counts[1 - k])
    else:
        # the analysis phase compensates the input's relative phase
        ph = 0.0 if label == "e+l" else 0.5 * math.pi
        hp = simulate_counts(channel, q, Analysis.HALF_PI_PAIR, repetitions, seed, ph, workers=workers)
        hm = simulate_counts(channel, q, Analysis.HALF_PI_PAIR, repetitions, seed + 1, ph + math.pi, workers=workers)
        n_plus, n_minus = int(hp.counts[1]), int(hm.counts[1])
    return fidelity_from_counts(n_plus, n_minus), n_plus, n_minus


def theoretical_fidelity(mu_q: float, channel: MemoryChannel, port: float = 1.0) -> float:
    """Predicted fidelity from efficiency and unconditional noise.

    ``port`` scales the efficiency seen by the analysing window (1/2 for the
    central bin of the split-readout interferometer).
    """
    signal = mu_q * channel.eta_m * port
    if signal <= 0:
        raise ParameterError("mu_q * eta_m must be positive")
    r = channel.p_n / signal
    return (channel.f_c + r) / (1.0 + 2.0 * r)


def total_fidelity(f_e: float, f_l: float, f_plus: float, f_plusi: float) -> float:
    """Average over the six-state set: basis states weigh 1/3, superpositions 2/3."""
    for v in (f_e, f_l, f_plus, f_plusi):
        if not 0.0 <= v <= 1.0:
            raise ParameterError("fidelities must lie in [0, 1]")
    return (f_e + f_l) / 6.0 + (f_plus + f_plusi) / 3.0


def _tail(p: np.ndarray, start: int) -> float:
    return float(np.sum(p[start:]))


def classical_bound(mu_q: float, eta_m: float, cutoff: int = 500) -> tuple[float, int]:
    """Best intercept-resend fidelity for Poissonian inputs and efficiency ``eta_m``.

    The attacker resends on every event with more than ``n_min`` photons and
    on a fraction of the ``n_min``-photon events, just enough to reproduce
    the observed efficiency.  Returns ``(bound, n_min)``.
    """
    if not mu_q > 0:
        raise ParameterError("mu_q must be positive")
    if not 0 < eta_m <= 1:
        raise ParameterError("eta_m must lie in (0, 1]")
    n_max = cutoff
    p = poisson_pmf(mu_q, np.arange(n_max + 2))
    # drop the tail once it is negligible; keeps sums exact to ~1e-15
    while n_max > 10 and p[n_max] < 1e-300:
        n_max -= 1
    p = p[: n_max + 2]
    sent = (1.0 - p[0]) * eta_m
    tails = np.cumsum(p[::-1])[::-1]  # tails[k] = sum_{n >= k} p[n]
    tails = np.append(tails, 0.0)
    n_min = None
    for i in range(0, n_max + 1):
        gamma = sent - tails[i + 1]
        if gamma >= 0:
            n_min = i
            break
    if n_min is None:
        raise ConfigurationError(f"no n_min below cutoff {cutoff}")
    gamma = sent - tails[n_min + 1]
    n = np.arange(n_min + 1, len(p))
    w = (n + 1.0) / (n + 2.0)
    num = (n_min + 1.0) / (n_min + 2.0) * gamma + float(np.sum(w * p[n_min + 1:]))
    den = gamma + tails[n_min + 1]
    return num / den, n_min


@dataclass
class FidelityReport:
    mu_q: float
    f_e: float
    f_l: float
    f_plus: float
    f_plusi: float
    f_total: float
    theoretical: float
    classical_bound: float
    n_min: int
    verdict: str = field(init=False)

    def __post_init__(self):
        for k in ("f_e", "f_l", "f_plus", "f_plusi", "f_total", "theoretical", "classical_bound"):
            v = getattr(self, k)
            if not 0.0 <= v <= 1.0:
                raise ParameterError(f"{k} out of [0, 1]")
        self.verdict = "quantum" if self.f_total > self.classical_bound else "classical"

    @classmethod
    def build(cls, mu_q: float, channel: MemoryChannel, f_e, f_l, f_plus, f_plusi) -> "FidelityReport":
        bound, n_min = classical_bound(mu_q, channel.eta_m)
        return cls(mu_q, f_e, f_l, f_plus, f_plusi, total_fidelity(f_e, f_l, f_plus, f_plusi),
                   theoretical_fidelity(mu_q, channel), bound, n_min)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)
