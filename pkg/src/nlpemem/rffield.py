"""Quasi-static field of a planar electrode layout.

Strips lie on the crystal surface (depth 0) and run infinitely along the
waveguide axis.  Each strip carries a uniform surface current, so its field
is the line-current field integrated across the width:

    Bx = mu0 I / (2 pi w) * [atan((x - x1)/z) - atan((x - x2)/z)]
    Bz = -mu0 I / (4 pi w) * ln(((x - x1)^2 + z^2) / ((x - x2)^2 + z^2))

Real CPW currents crowd at the strip edges; the uniform-current picture is
kept on purpose since only trends with strip width are of interest here.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._parallel import parallel_map
from .errors import ConductorDomainError, ParameterError

MU0 = 4e-7 * math.pi


@dataclass(frozen=True)
class Strip:
    center_x: float
    width: float
    current: float = 1.0
    direction: int = 1

    def __post_init__(self):
        if not self.width > 0:
            raise ParameterError("strip width must be positive")
        if self.direction not in (1, -1):
            raise ParameterError("direction must be +1 or -1")

    @property
    def edges(self) -> tuple[float, float]:
        return self.center_x - 0.5 * self.width, self.center_x + 0.5 * self.width

    @property
    def signed_current(self) -> float:
        return self.direction * self.current


@dataclass(frozen=True)
class ElectrodeLayout:
    strips: tuple[Strip, ...]
    cpw: bool = False

    def __post_init__(self):
        object.__setattr__(self, "strips", tuple(self.strips))
        if not self.strips:
            raise ParameterError("layout needs at least one strip")
        edges = sorted(s.edges for s in self.strips)
        for (_, hi), (lo, _) in zip(edges, edges[1:]):
            if lo < hi:
                raise ParameterError("strips overlap")
        if self.cpw:
            net = sum(s.signed_current for s in self.strips)
            scale = max(abs(s.signed_current) for s in self.strips)
            if abs(net) > 1e-12 * scale:
                raise ParameterError(f"CPW layout must carry zero net current (net {net:g} A)")

    @classmethod
    def single(cls, width: float, current: float = 1.0, center_x: float = 0.0) -> "ElectrodeLayout":
        return cls((Strip(center_x, width, current),))

    @classmethod
    def coplanar(cls, signal_width: float = 150e-6, gap: float = 50e-6,
                 ground_width: float = 500e-6, current: float = 1.0) -> "ElectrodeLayout":
        """Signal strip centred at x=0 with two grounds each returning half the current."""
        if not gap > 0:
            raise ParameterError("gap must be positive")
        off = 0.5 * signal_width + gap + 0.5 * ground_width
        return cls((Strip(-off, ground_width, 0.5 * current, -1),
                    Strip(0.0, signal_width, current, 1),
                    Strip(off, ground_width, 0.5 * current, -1)), cpw=True)

    def scaled(self, factor: float) -> "ElectrodeLayout":
        return ElectrodeLayout(tuple(Strip(s.center_x, s.width, s.current * factor, s.direction)
                                     for s in self.strips), self.cpw)

    def to_dict(self) -> dict:
        return {"cpw": self.cpw, "strips": [asdict(s) for s in self.strips]}

    @classmethod
    def from_dict(cls, d: dict) -> "ElectrodeLayout":
        return cls(tuple(Strip(**s) for s in d["strips"]), bool(d.get("cpw", False)))


def _strip_field(strip: Strip, x: np.ndarray, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x1, x2 = strip.edges
    a, b = x - x1, x - x2
    pref = MU0 * strip.signed_current / (2 * math.pi * strip.width)
    # atan(a/z) - atan(b/z) folded into one atan2; finite on the surface outside the strip
    bx = pref * np.arctan2((a - b) * z, z * z + a * b)
    bz = -0.5 * pref * np.log((a * a + z * z) / (b * b + z * z))
    return bx, bz


def _check_points(layout: ElectrodeLayout, x: np.ndarray, z: np.ndarray) -> None:
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise ParameterError("field points must be finite")
    on_surface = z == 0
    if not np.any(on_surface):
        return
    for s in layout.strips:
        lo, hi = s.edges
        if np.any(on_surface & (x >= lo) & (x <= hi)):
            raise ConductorDomainError("field point lies on a conductor")


def field_at(layout: ElectrodeLayout, x, depth) -> np.ndarray:
    """Field (Bx, Bz) in T at points (x, depth); arrays broadcast.

    Returns an array of shape ``broadcast(x, depth).shape + (2,)``.
    """
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(depth, dtype=float))
    _check_points(layout, x, z)
    bx = np.zeros(x.shape)
    bz = np.zeros(x.shape)
    for s in layout.strips:
        dx, dz = _strip_field(s, x, z)
        bx = bx + dx
        bz = bz + dz
    return np.stack([bx, bz], axis=-1)


def biot_savart_strip(strip: Strip, x: float, depth: float, n_lines: int = 10_000) -> np.ndarray:
    """Brute-force reference: sum of ``n_lines`` line currents across the strip (midpoint rule)."""
    x1, x2 = strip.edges
    h = (x2 - x1) / n_lines
    x0 = x1 + h * (np.arange(n_lines) + 0.5)
    dx, dz = x - x0, depth
    r2 = dx * dx + dz * dz
    k = MU0 * strip.signed_current / n_lines / (2 * math.pi)
    return np.array([k * np.sum(dz / r2), -k * np.sum(dx / r2)])


@dataclass
class FieldMap:
    x: np.ndarray
    depth: np.ndarray
    bx: np.ndarray
    bz: np.ndarray
    signal_current: float = 1.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.depth = np.asarray(self.depth, dtype=float)
        shape = (len(self.depth), len(self.x))
        if np.shape(self.bx) != shape or np.shape(self.bz) != shape:
            raise ParameterError(f"field arrays must have shape {shape}")
        if not (np.all(np.isfinite(self.bx)) and np.all(np.isfinite(self.bz))):
            raise ParameterError("field map contains non-finite values")

    @property
    def abs_b(self) -> np.ndarray:
        return np.hypot(self.bx, self.bz)

    def component(self, axis: str = "magnitude") -> np.ndarray:
        if axis == "magnitude":
            return self.abs_b
        if axis == "x":
            return np.abs(self.bx)
        if axis == "z":
            return np.abs(self.bz)
        raise ParameterError(f"unknown coupling axis {axis!r}")

    def per_amp(self) -> "FieldMap":
        s = self.signal_current
        return FieldMap(self.x, self.depth, self.bx / s, self.bz / s, 1.0)

    def divergence(self) -> np.ndarray:
        """Central-difference dBx/dx + dBz/dz on the grid (one-sided at the rim)."""
        return np.gradient(self.bx, self.x, axis=1) + np.gradient(self.bz, self.depth, axis=0)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_m", "depth_m", "bx", "bz", "abs_b"])
            ab = self.abs_b
            for i, z in enumerate(self.depth):
                for j, x in enumerate(self.x):
                    w.writerow([repr(float(x)), repr(float(z)), repr(float(self.bx[i, j])),
                                repr(float(self.bz[i, j])), repr(float(ab[i, j]))])


def _signal_current(layout: ElectrodeLayout) -> float:
    return max(abs(s.signed_current) for s in layout.strips)


def compute_field_map(layout: ElectrodeLayout, x, depth, workers: int = 1) -> FieldMap:
    """Field on the grid ``x`` by ``depth``; rows are evaluated in parallel."""
    x = np.asarray(x, dtype=float)
    depth = np.asarray(depth, dtype=float)
    rows = parallel_map(lambda i: field_at(layout, x, depth[i]), len(depth), workers)
    b = np.stack(rows) if rows else np.zeros((0, len(x), 2))
    return FieldMap(x, depth, b[..., 0], b[..., 1], _signal_current(layout))


def rabi_map(fmap: FieldMap, coupling: float, power_to_current: float, power: float,
             axis: str = "magnitude") -> np.ndarray:
    """Rabi frequency (Hz) over the map: coupling * |B per A| * k * sqrt(P)."""
    if not coupling > 0:
        raise ParameterError("coupling must be positive")
    if power < 0:
        raise ParameterError("power must be non-negative")
    b = fmap.per_amp().component(axis)
    return coupling * b * power_to_current * math.sqrt(power)


def calibrate_coupling(fmap: FieldMap, rabi_hz: float, power: float, point: tuple[float, float],
                       axis: str = "magnitude") -> float:
    """Product coupling * power_to_current giving ``rabi_hz`` at ``point`` and ``power``."""
    b = field_value(fmap, point, axis)
    if b <= 0 or power <= 0:
        raise ParameterError("calibration needs a nonzero field and positive power")
    return rabi_hz / (b * math.sqrt(power))


def field_value(fmap: FieldMap, point: tuple[float, float], axis: str = "magnitude") -> float:
    """Bilinear interpolation of the per-amp field component at ``(x, depth)``."""
    from scipy.interpolate import RegularGridInterpolator

    comp = fmap.per_amp().component(axis)
    f = RegularGridInterpolator((fmap.depth, fmap.x), comp)
    return float(f([[point[1], point[0]]])[0])


def power_ratio_for_equal_rabi(field_ratio: float) -> float:
    """Power needed by a layout whose field per amp is ``field_ratio`` times another's."""
    if not field_ratio > 0:
        raise ParameterError("field ratio must be positive")
    return field_ratio ** -2


@dataclass
class Homogeneity:
    mean: float
    rel_std: float
    min: float
    max: float
    n_points: int

    def to_dict(self) -> dict:
        return asdict(self)


def homogeneity(fmap: FieldMap, center_depth: float, diameter: float, center_x: float = 0.0,
                axis: str = "magnitude") -> Homogeneity:
    """Statistics of the field over grid points inside a disk."""
    if not diameter > 0:
        raise ParameterError("diameter must be positive")
    r = 0.5 * diameter
    if (center_x - r < fmap.x.min() or center_x + r > fmap.x.max()
            or center_depth - r < fmap.depth.min() or center_depth + r > fmap.depth.max()):
        raise ParameterError("region extends outside the map")
    xx, zz = np.meshgrid(fmap.x, fmap.depth)
    inside = (xx - center_x) ** 2 + (zz - center_depth) ** 2 <= r * r
    vals = fmap.component(axis)[inside]
    if vals.size == 0:
        raise ParameterError("no grid points inside region")
    m = float(np.mean(vals))
    return Homogeneity(m, float(np.std(vals) / m) if m > 0 else 0.0, float(vals.min()),
                       float(vals.max()), int(vals.size))


def mode_grid(center_depth: float, diameter: float, step: float, center_x: float = 0.0):
    """Square grid just covering the disk, with ``step`` spacing (endpoints included)."""
    r = 0.5 * diameter
    n = int(math.ceil(diameter / step)) + 1
    return (np.linspace(center_x - r, center_x + r, n),
            np.linspace(center_depth - r, center_depth + r, n))


def layout_json(layout: ElectrodeLayout) -> str:
    return json.dumps(layout.to_dict(), sort_keys=True)
