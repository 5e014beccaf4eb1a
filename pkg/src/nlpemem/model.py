"""Closed-form NLPE efficiency and weighted least-squares fits.

All fit families carry analytic Jacobians.  The optimiser is scipy's
trust-region reflective solver; covariances come from ``(J^T J)^-1`` at the
optimum scaled by the reduced chi-square.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import signal, special
from scipy.optimize import brentq, least_squares

from .errors import AmbiguityError, FitError, NoRootError, ParameterError
from .spectral import FWHM_TO_SIGMA, SpectralDistribution, total_fwhm

GAUSS_NORM = 2.0 * math.log(2.0) / math.pi**2
"""Denominator of the Gaussian dephasing exponent: exp(-g^2 t^2 / GAUSS_NORM)."""


@dataclass(frozen=True)
class NlpeParams:
    d: float
    eta_control: float
    gamma13: float
    gamma35: float
    gamma: float

    def __post_init__(self):
        if self.d < 0:
            raise ParameterError("optical depth must be non-negative")
        if not 0 <= self.eta_control <= 1:
            raise ParameterError("eta_control must lie in [0, 1]")
        if min(self.gamma13, self.gamma35, self.gamma) < 0:
            raise ParameterError("decoherence rates must be non-negative")

    @classmethod
    def device_fit(cls, d: float = 2.09) -> "NlpeParams":
        """Fitted values for the waveguide device (rates in Hz)."""
        return cls(d=d, eta_control=0.85, gamma13=6.0e3, gamma35=18.0e3, gamma=8.0e3)


def absorption_factor(d: float) -> float:
    return d * d * math.exp(-d)


def gaussian_decay(width, t):
    """Gaussian dephasing factor for a Gaussian line of FWHM ``width`` (Hz)."""
    return np.exp(-np.square(width) * np.square(t) / GAUSS_NORM)


def nlpe_efficiency(p: NlpeParams, t31, t42):
    """Storage efficiency of the four-pulse noiseless photon echo.

    ``t31`` and ``t42`` are the first-to-third and second-to-fourth pulse
    intervals (s).  Broadcasts over array inputs.
    """
    t31 = np.asarray(t31, dtype=float)
    t42 = np.asarray(t42, dtype=float)
    if np.any(t31 < 0) or np.any(t42 < 0):
        raise ParameterError("pulse intervals must be non-negative")
    eta = (absorption_factor(p.d) * p.eta_control**4
           * gaussian_decay(p.gamma13, t31)
           * gaussian_decay(p.gamma35, t42)
           * np.exp(-2.0 * p.gamma * t42))
    return eta if eta.ndim else float(eta)


class Axis(str, enum.Enum):
    T31 = "t31"
    T42 = "t42"


def lifetime_1e(p: NlpeParams, axis: Axis | str, dd_exponential: float | None = None) -> float:
    """1/e storage time along one interval axis (the other held at zero).

    With ``dd_exponential`` the decay is taken as a pure exponential with
    that 1/e time, which is then simply returned.
    """
    if dd_exponential is not None:
        if dd_exponential <= 0:
            raise ParameterError("exponential lifetime must be positive")
        return float(dd_exponential)
    axis = Axis(axis)
    if axis is Axis.T31:
        ratio = lambda t: float(gaussian_decay(p.gamma13, t))
    else:
        ratio = lambda t: float(gaussian_decay(p.gamma35, t) * math.exp(-2.0 * p.gamma * t))
    target = math.exp(-1.0)
    rates = [p.gamma13] if axis is Axis.T31 else [p.gamma35, p.gamma]
    if max(rates) <= 0:
        raise NoRootError(f"efficiency does not decay along {axis.value}")
    hi = 1.0 / max(rates)
    for _ in range(200):
        if ratio(hi) < target:
            break
        hi *= 2.0
    else:
        raise NoRootError("failed to bracket the 1/e point")
    return brentq(lambda t: ratio(t) - target, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


# ---------------------------------------------------------------------------
# fitting machinery


@dataclass
class FitResult:
    model: str
    params: dict
    uncertainties: dict
    residual_norm: float
    converged: bool
    iterations: int
    derived: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


@dataclass(frozen=True)
class _Family:
    name: str
    names: tuple
    f: Callable        # f(x, theta) -> y
    jac: Callable      # jac(x, theta) -> (n, p)
    lower: tuple
    upper: tuple


def _gte_f(t, th):
    a, g35, g = th
    return a * np.exp(-(g35 * t) ** 2 / GAUSS_NORM - 2.0 * g * t)


def _gte_jac(t, th):
    a, g35, g = th
    e = np.exp(-(g35 * t) ** 2 / GAUSS_NORM - 2.0 * g * t)
    return np.column_stack([e, a * e * (-2.0 * g35 * t * t / GAUSS_NORM), a * e * (-2.0 * t)])


def _go_f(t, th):
    a, g13 = th
    return a * np.exp(-(g13 * t) ** 2 / GAUSS_NORM)


def _go_jac(t, th):
    a, g13 = th
    e = np.exp(-(g13 * t) ** 2 / GAUSS_NORM)
    return np.column_stack([e, a * e * (-2.0 * g13 * t * t / GAUSS_NORM)])


def _exp_f(t, th):
    a, tau = th
    return a * np.exp(-t / tau)


def _exp_jac(t, th):
    a, tau = th
    e = np.exp(-t / tau)
    return np.column_stack([e, a * e * t / tau**2])


class DecayModel(str, enum.Enum):
    GAUSSIAN_TIMES_EXP = "gaussian_times_exp"
    GAUSSIAN_ONLY = "gaussian_only"
    EXP_ONLY = "exp_only"


_DECAY = {
    DecayModel.GAUSSIAN_TIMES_EXP: _Family("gaussian_times_exp", ("amplitude", "gamma35", "gamma"),
                                           _gte_f, _gte_jac, (-np.inf, 0.0, 0.0), (np.inf, np.inf, np.inf)),
    DecayModel.GAUSSIAN_ONLY: _Family("gaussian_only", ("amplitude", "gamma13"),
                                      _go_f, _go_jac, (-np.inf, 0.0), (np.inf, np.inf)),
    DecayModel.EXP_ONLY: _Family("exp_only", ("amplitude", "lifetime"),
                                 _exp_f, _exp_jac, (-np.inf, 1e-300), (np.inf, np.inf)),
}


def decay_family(model: DecayModel | str) -> _Family:
    return _DECAY[DecayModel(model)]


def _as_xy(data, need_sigma: bool = True):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] not in (2, 3):
        raise ParameterError("data must be an (n, 2) or (n, 3) array of (x, y[, sigma])")
    x, y = arr[:, 0], arr[:, 1]
    s = arr[:, 2] if arr.shape[1] == 3 else np.ones_like(x)
    if not np.all(np.isfinite(arr)):
        raise ParameterError("data contain non-finite values")
    if np.any(s <= 0):
        raise ParameterError("sigmas must be positive")
    return x, y, s


def _cosines(fam: _Family, x, y, s, th):
    r = (fam.f(x, th) - y) / s
    jw = fam.jac(x, th) / s[:, None]
    g = jw.T @ r
    den = np.linalg.norm(jw, axis=0) * np.linalg.norm(r)
    return np.abs(g) / np.where(den > 0, den, 1.0), g, r, jw


def _polish(fam: _Family, x, y, s, th: np.ndarray, steps: int = 8) -> np.ndarray:
    """Gauss-Newton steps on the interior parameters until the gradient stalls.

    Near the optimum the cost changes by less than its own round-off, so the
    trust-region solver stops while the gradient is still ~1e-8 of its scale.
    Steps here are accepted when they shrink the gradient and leave the cost
    unchanged to round-off.
    """
    lo, hi = np.array(fam.lower), np.array(fam.upper)
    cost = lambda p: float(np.sum(((fam.f(x, p) - y) / s) ** 2))
    c0 = cost(th)
    cos0 = _cosines(fam, x, y, s, th)[0]
    for _ in range(steps):
        free = (th > lo) & (th < hi)
        if not free.any() or cos0[free].max() <= 1e-13:
            break
        _, _, r, jw = _cosines(fam, x, y, s, th)
        trial = th.copy()
        trial[free] += np.linalg.lstsq(jw[:, free], -r, rcond=None)[0]
        if np.any(trial <= lo) or np.any(trial >= hi):
            break
        c1 = cost(trial)
        cos1 = _cosines(fam, x, y, s, trial)[0]
        if c1 > c0 * (1 + 1e-12) + 1e-300 or cos1[free].max() >= cos0[free].max():
            break
        th, c0, cos0 = trial, min(c0, c1), cos1
    return th


def _solve(fam: _Family, x, y, s, starts: Sequence[np.ndarray]) -> FitResult:
    best = None
    n_iter = 0
    for x0 in starts:
        x0 = np.clip(np.asarray(x0, float), np.array(fam.lower) + 1e-300, np.array(fam.upper))
        res = least_squares(lambda th: (fam.f(x, th) - y) / s,
                            x0, jac=lambda th: fam.jac(x, th) / s[:, None],
                            bounds=(fam.lower, fam.upper), method="trf", x_scale="jac",
                            ftol=1e-15, xtol=1e-15, gtol=1e-15, max_nfev=20000)
        n_iter += res.nfev
        if best is None or res.cost < best.cost:
            best = res
    th = _polish(fam, x, y, s, best.x)
    r = (fam.f(x, th) - y) / s
    jw = fam.jac(x, th) / s[:, None]
    grad = jw.T @ r
    chi2 = float(r @ r)
    dof = len(x) - len(th)
    red = chi2 / dof if dof > 0 else 1.0
    jtj = jw.T @ jw
    cov = np.linalg.pinv(jtj) * red
    unc = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    # scale-free stationarity: cosine between each Jacobian column and the
    # residual vector; parameters pinned at a bound with outward gradient are exempt
    rn = math.sqrt(chi2)
    cosines = _cosines(fam, x, y, s, th)[0]
    pinned = ((th <= np.array(fam.lower)) & (grad > 0)) | ((th >= np.array(fam.upper)) & (grad < 0))
    interpolates = rn <= 1e-10 * float(np.linalg.norm(y / s))
    converged = bool(best.status > 0) and (interpolates or bool(np.all(cosines[~pinned] <= 1e-10)))
    return FitResult(model=fam.name,
                     params={k: float(v) for k, v in zip(fam.names, th)},
                     uncertainties={k: float(v) for k, v in zip(fam.names, unc)},
                     residual_norm=math.sqrt(chi2), converged=converged, iterations=int(n_iter),
                     message=str(best.message))


def _restarts(x0: np.ndarray, n: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    out = [x0]
    for _ in range(max(0, n - 1)):
        out.append(x0 * np.exp(rng.normal(0.0, 0.3, size=x0.shape)))
    return out


def _decay_init(model: DecayModel, t, y) -> np.ndarray:
    order = np.argsort(t)
    t, y = t[order], y[order]
    a = y[0] if abs(y[0]) > 0 else np.max(np.abs(y))
    ratio = np.clip(y / a, 1e-12, None)
    below = np.nonzero(ratio < math.exp(-1))[0]
    t_e = t[below[0]] if below.size else 2.0 * (t[-1] - t[0] if t[-1] > t[0] else 1.0)
    t_e = t_e if t_e > 0 else (t[-1] - t[0]) or 1.0
    w = math.sqrt(GAUSS_NORM) / t_e
    if model is DecayModel.EXP_ONLY:
        return np.array([a, t_e])
    if model is DecayModel.GAUSSIAN_ONLY:
        return np.array([a, w])
    return np.array([a, 0.7 * w, 0.25 / t_e])


def fit_decay(data, model: DecayModel | str, init: dict | Sequence[float] | None = None,
              restarts: int = 5, seed: int = 0) -> FitResult:
    """Weighted fit of an efficiency-vs-time trace.

    ``data`` rows are ``(t, efficiency, sigma)``.  ``init`` may be a dict
    keyed by parameter name or a sequence in parameter order.
    """
    model = DecayModel(model)
    fam = _DECAY[model]
    t, y, s = _as_xy(data)
    if len(t) < 4:
        raise ParameterError("at least 4 points are required")
    if np.ptp(t) == 0:
        raise FitError("all samples share the same time; parameters are not identifiable")
    if init is None:
        x0 = _decay_init(model, t, y)
    elif isinstance(init, dict):
        x0 = np.array([float(init[k]) for k in fam.names])
    else:
        x0 = np.asarray(init, dtype=float)
    res = _solve(fam, t, y, s, _restarts(x0, restarts, seed))
    if model is DecayModel.EXP_ONLY:
        res.derived["lifetime_1e"] = res.params["lifetime"]
    return res


# ---------------------------------------------------------------------------
# Rabi nutation


def _rabi_f(t, th):
    a, f, k, c = th
    return a * np.cos(2 * math.pi * f * t) * np.exp(-k * t) + c


def _rabi_jac(t, th):
    a, f, k, c = th
    ph = 2 * math.pi * f * t
    e = np.exp(-k * t)
    cs = np.cos(ph)
    return np.column_stack([cs * e, -a * 2 * math.pi * t * np.sin(ph) * e, -a * t * cs * e, np.ones_like(t)])


RABI_FAMILY = _Family("rabi_nutation", ("amplitude", "rabi_frequency", "decay_rate", "offset"),
                      _rabi_f, _rabi_jac, (-np.inf, 0.0, 0.0, -np.inf), (np.inf, np.inf, np.inf, np.inf))


def fit_rabi_nutation(data, restarts: int = 5) -> FitResult:
    """Fit ``A cos(2 pi W t) exp(-t/tau) + C`` to a nutation trace.

    ``W`` is in Hz.  The starting frequency is the Lomb-Scargle periodogram
    peak, so non-uniform sampling is fine.
    """
    t, y, s = _as_xy(data)
    if len(t) < 8:
        raise ParameterError("at least 8 points are required")
    span = float(np.ptp(t))
    yc = y - y.mean()
    if span == 0 or np.allclose(yc, 0.0, atol=1e-12 * max(1.0, abs(y.mean()))):
        raise AmbiguityError("signal carries no oscillation")
    dt_min = np.min(np.diff(np.unique(t)))
    f_nyq = 0.5 / dt_min
    freqs = np.linspace(0.25 / span, f_nyq, 4000)
    power = signal.lombscargle(t, yc, 2 * math.pi * freqs)
    f0 = float(freqs[np.argmax(power)])
    if f0 * span < 1.0:
        raise AmbiguityError(f"fewer than one period visible (estimated {f0 * span:.2f})")
    a0 = float(yc[np.argmin(t)]) if abs(yc[np.argmin(t)]) > 0.3 * np.ptp(y) / 2 else 0.5 * float(np.ptp(y))
    x0 = np.array([a0, f0, 0.1 / span, float(y.mean())])
    starts = [x0] + [x0 * np.array([1.0, 1.0 + d, 1.0, 1.0]) for d in np.linspace(-0.02, 0.02, max(0, restarts - 1))]
    res = _solve(RABI_FAMILY, t, y, s, starts)
    if res.params["rabi_frequency"] * span < 1.0:
        raise AmbiguityError("fitted frequency shows less than one period")
    k = res.params["decay_rate"]
    res.derived["decay_time"] = math.inf if k == 0 else 1.0 / k
    return res


# ---------------------------------------------------------------------------
# Voigt line


_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_TWO_OVER_SQRTPI = 2.0 / math.sqrt(math.pi)


def voigt_and_grad(x, center: float, gauss_fwhm: float, lorentz_fwhm: float):
    """Unit-area Voigt profile and its derivatives w.r.t. (center, G, L)."""
    u = np.asarray(x, dtype=float) - center
    sigma = gauss_fwhm * FWHM_TO_SIGMA
    gam = 0.5 * lorentz_fwhm
    if sigma <= 1e-7 * gam:
        # Gaussian part negligible; V is even in sigma so dV/dG -> 0
        den = u * u + gam * gam
        v = gam / (math.pi * den)
        dv_dc = 2 * u * gam / (math.pi * den**2)
        dv_dgam = (u * u - gam * gam) / (math.pi * den**2)
        return v, dv_dc, np.zeros_like(u), 0.5 * dv_dgam
    z = (u + 1j * gam) / (sigma * _SQRT2)
    w = special.wofz(z)
    dw = -2.0 * z * w + 1j * _TWO_OVER_SQRTPI
    norm = sigma * _SQRT2PI
    v = w.real / norm
    dv_dc = (dw * (-1.0 / (sigma * _SQRT2))).real / norm
    dv_dgam = (dw * (1j / (sigma * _SQRT2))).real / norm
    dv_dsig = (dw * (-z / sigma)).real / norm - v / sigma
    return v, dv_dc, FWHM_TO_SIGMA * dv_dsig, 0.5 * dv_dgam


def _voigt_f(x, th):
    area, c, g, l = th[:4]
    v = voigt_and_grad(x, c, g, l)[0]
    return area * v + (th[4] if len(th) > 4 else 0.0)


def _voigt_jac(x, th):
    area, c, g, l = th[:4]
    v, dc, dg, dl = voigt_and_grad(x, c, g, l)
    cols = [v, area * dc, area * dg, area * dl]
    if len(th) > 4:
        cols.append(np.ones_like(v))
    return np.column_stack(cols)


def _voigt_family(baseline: bool) -> _Family:
    names = ("area", "center", "gauss_fwhm", "lorentz_fwhm") + (("offset",) if baseline else ())
    lower = (-np.inf, -np.inf, 0.0, 0.0) + ((-np.inf,) if baseline else ())
    upper = (np.inf,) * len(names)
    return _Family("voigt", names, _voigt_f, _voigt_jac, lower, upper)


def _count_peaks(y: np.ndarray) -> int:
    k = max(3, len(y) // 20) | 1
    ys = np.convolve(y, np.ones(k) / k, mode="same")
    half = ys.min() + 0.5 * np.ptp(ys)
    peaks, _ = signal.find_peaks(ys, height=half, prominence=0.25 * np.ptp(ys))
    return len(peaks)


def fit_voigt(spectrum, baseline: bool = False, restarts: int = 5) -> FitResult:
    """Least-squares Voigt fit of ``(freq, response[, sigma])`` rows.

    Returned parameters are the area, center and the Gaussian/Lorentzian
    FWHMs; ``derived`` adds the peak amplitude and the numerically computed
    total FWHM of the fitted profile.
    """
    x, y, s = _as_xy(spectrum)
    if len(x) < 10:
        raise ParameterError("at least 10 points are required")
    order = np.argsort(x)
    x, y, s = x[order], y[order], s[order]
    warnings = []
    if _count_peaks(y) != 1:
        warnings.append("data do not look unimodal; fit quality may be poor")
    off0 = float(min(y[0], y[-1])) if baseline else 0.0
    yb = y - off0
    i0 = int(np.argmax(yb))
    peak = float(yb[i0])
    above = np.nonzero(yb >= 0.5 * peak)[0]
    fw = float(x[above[-1]] - x[above[0]]) if above.size > 1 else float(np.ptp(x)) / 10
    fw = fw or float(np.ptp(x)) / 10
    x0 = [peak * fw * 1.06, float(x[i0]), fw / 1.6, fw / 1.6] + ([off0] if baseline else [])
    x0 = np.asarray(x0)
    fam = _voigt_family(baseline)
    starts = [x0]
    for gl in [(0.95, 0.05), (0.05, 0.95), (0.7, 0.4), (0.4, 0.7)][: max(0, restarts - 1)]:
        st = x0.copy()
        st[2], st[3] = gl[0] * fw, gl[1] * fw
        starts.append(st)
    res = _solve(fam, x, y, s, starts)
    res.warnings.extend(warnings)
    g, l = res.params["gauss_fwhm"], res.params["lorentz_fwhm"]
    dist = SpectralDistribution.voigt(g, l, res.params["center"])
    res.derived["total_fwhm"] = total_fwhm(dist) if (g > 0 or l > 0) else 0.0
    res.derived["amplitude"] = res.params["area"] * float(voigt_and_grad(res.params["center"], res.params["center"], g, l)[0])
    return res


# ---------------------------------------------------------------------------
# CSV ingest


def load_csv(path) -> np.ndarray:
    """Read ``(t_s|freq_hz, value[, sigma])`` columns from a headed CSV file."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParameterError(f"{path}: empty file")
    header = [h.strip().lower() for h in rows[0]]
    if header[0] not in ("t_s", "freq_hz"):
        raise ParameterError(f"{path}: first column must be t_s or freq_hz, got {header[0]!r}")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    return data
