"""Star-shaped domain boundaries and electrode layouts on them.

The boundary is a 2pi-periodic radial curve gamma(phi) = r(phi)(cos phi,
sin phi).  Electrodes are arcs given by their extremal polar angles; the
upper angle is always derived from the lower one and a fixed arc-length
width, which couples the two endpoints during optimization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq


class GeometryError(Exception):
    """Raised when a curve or electrode layout is geometrically invalid."""


@dataclass(frozen=True)
class BoundaryCurve:
    """Radial parametrization of a simple closed star-shaped boundary.

    kind is one of "disk", "ellipse", "peanut", "custom-radial".  For the
    radial kinds r(phi) is a finite Fourier series; the ellipse stores its
    semi-axes and uses the exact radial formula.  quad_tol is the absolute
    and relative tolerance used for arc-length quadrature.
    """

    kind: str
    radial_coefficients: tuple = ()   # (c0, a1, b1, a2, b2, ...)
    semi_axes: tuple = (1.0, 1.0)
    quad_tol: float = 1e-10
    _r_min: float = field(init=False, default=0.0)
    _speed_range: tuple = field(init=False, default=(1.0, 1.0))

    def __post_init__(self):
        phi = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
        r = self.radius(phi)
        if np.min(r) <= 0.0:
            raise GeometryError(f"radial profile not positive (min r = {np.min(r):.3g})")
        sp = self.speed(phi)
        object.__setattr__(self, "_r_min", float(np.min(r)))
        object.__setattr__(self, "_speed_range", (float(np.min(sp)), float(np.max(sp))))

    # -- constructors ------------------------------------------------------

    @staticmethod
    def disk(radius: float = 1.0) -> "BoundaryCurve":
        return BoundaryCurve("disk", radial_coefficients=(radius,))

    @staticmethod
    def ellipse(a: float = 1.0, b: float = 0.65) -> "BoundaryCurve":
        return BoundaryCurve("ellipse", semi_axes=(a, b))

    @staticmethod
    def peanut(amplitude: float = 0.35) -> "BoundaryCurve":
        # Stand-in for a peanut-shaped domain: r = 1 + amplitude*cos(2 phi).
        return BoundaryCurve("peanut", radial_coefficients=(1.0, 0.0, 0.0, amplitude, 0.0))

    @staticmethod
    def custom(coefficients) -> "BoundaryCurve":
        return BoundaryCurve("custom-radial", radial_coefficients=tuple(float(c) for c in coefficients))

    @staticmethod
    def complicated() -> "BoundaryCurve":
        # Stand-in "complicated" domain: fixed low-order Fourier radial profile.
        return BoundaryCurve.custom((1.0, 0.12, -0.08, 0.1, 0.14, -0.1, 0.05))

    # -- pointwise evaluation ----------------------------------------------

    def _fourier(self, phi):
        c = self.radial_coefficients
        r = np.full_like(np.asarray(phi, dtype=float), c[0])
        dr = np.zeros_like(r)
        for k in range(1, (len(c) + 1) // 2):
            a = c[2 * k - 1]
            b = c[2 * k] if 2 * k < len(c) else 0.0
            r += a * np.cos(k * phi) + b * np.sin(k * phi)
            dr += -a * k * np.sin(k * phi) + b * k * np.cos(k * phi)
        return r, dr

    def _radius_and_slope(self, phi):
        phi = np.asarray(phi, dtype=float)
        if self.kind == "ellipse":
            a, b = self.semi_axes
            s = (b * np.cos(phi)) ** 2 + (a * np.sin(phi)) ** 2
            r = a * b / np.sqrt(s)
            dr = -a * b * (a**2 - b**2) * np.sin(phi) * np.cos(phi) * s ** (-1.5)
            return r, dr
        return self._fourier(phi)

    def radius(self, phi):
        return self._radius_and_slope(phi)[0]

    def point(self, phi):
        """gamma(phi), shape (..., 2)."""
        phi = np.asarray(phi, dtype=float)
        r = self.radius(phi)
        return np.stack([r * np.cos(phi), r * np.sin(phi)], axis=-1)

    def tangent(self, phi):
        """gamma'(phi), shape (..., 2)."""
        phi = np.asarray(phi, dtype=float)
        r, dr = self._radius_and_slope(phi)
        c, s = np.cos(phi), np.sin(phi)
        return np.stack([dr * c - r * s, dr * s + r * c], axis=-1)

    def speed(self, phi):
        """|gamma'(phi)| = sqrt(r^2 + r'^2)."""
        r, dr = self._radius_and_slope(phi)
        return np.hypot(r, dr)

    def normal(self, phi):
        """Outward unit normal at gamma(phi)."""
        t = self.tangent(phi)
        n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    # -- arc length --------------------------------------------------------

    def arc_length(self, phi_a: float, phi_b: float) -> float:
        """Arc length of the boundary segment between the two polar angles."""
        if phi_b < phi_a or phi_b > phi_a + 2 * np.pi + 1e-12:
            raise GeometryError("require phi_a <= phi_b <= phi_a + 2*pi")
        if phi_b == phi_a:
            return 0.0
        val, _ = quad(lambda p: float(self.speed(p)), phi_a, phi_b,
                      epsabs=self.quad_tol, epsrel=self.quad_tol, limit=200)
        return val

    def perimeter(self) -> float:
        return self.arc_length(0.0, 2 * np.pi)

    def max_radius(self) -> float:
        phi = np.linspace(0.0, 2 * np.pi, 4096, endpoint=False)
        return float(np.max(self.radius(phi)))


def arc_length(curve: BoundaryCurve, phi_a: float, phi_b: float) -> float:
    return curve.arc_length(phi_a, phi_b)


def endpoint_from_width(curve: BoundaryCurve, theta_minus: float, width: float) -> float:
    """Angle theta_plus with arc_length(theta_minus, theta_plus) == width.

    Solved by bracketed root finding; the bracket follows from global bounds
    on the parametrization speed.
    """
    if width <= 0:
        raise GeometryError("electrode width must be positive")
    sp_min, sp_max = curve._speed_range
    lo = theta_minus + 0.5 * width / sp_max
    hi = theta_minus + min(2.0 * width / sp_min, 2 * np.pi)
    f = lambda t: curve.arc_length(theta_minus, t) - width
    # widen the bracket defensively; failure here means the geometry is broken
    while f(lo) > 0 and lo > theta_minus + 1e-15:
        lo = theta_minus + 0.5 * (lo - theta_minus)
    while f(hi) < 0:
        hi = theta_minus + 1.5 * (hi - theta_minus)
        if hi > theta_minus + 2 * np.pi:
            raise GeometryError("width exceeds the curve perimeter")
    return brentq(f, lo, hi, xtol=1e-13, rtol=8.9e-16)


def width_coupling_ratio(curve: BoundaryCurve, theta_minus: float, theta_plus: float) -> float:
    """d theta_plus / d theta_minus for a fixed-width electrode."""
    return float(curve.speed(theta_minus) / curve.speed(theta_plus))


@dataclass(frozen=True)
class ElectrodeLayout:
    """M electrode arcs with fixed arc-length widths and contact impedances.

    Angles are stored unwrapped: theta_minus is strictly increasing with the
    feeding electrode first, and may exceed 2*pi.  theta_plus is derived from
    theta_minus and the widths, never set directly.
    """

    theta_minus: np.ndarray
    theta_plus: np.ndarray
    widths: np.ndarray
    contact_impedance: np.ndarray
    feeding_index: int = 0

    @property
    def n_electrodes(self) -> int:
        return len(self.theta_minus)


def make_layout(curve: BoundaryCurve, theta_minus, widths, contact_impedance=None,
                feeding_index: int = 0) -> ElectrodeLayout:
    """Build an admissible layout, unwrapping angles to an increasing sequence."""
    theta_minus = np.asarray(theta_minus, dtype=float).copy()
    m = len(theta_minus)
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (m,)).copy()
    if contact_impedance is None:
        contact_impedance = np.ones(m)
    z = np.broadcast_to(np.asarray(contact_impedance, dtype=float), (m,)).copy()
    if np.any(z <= 0):
        raise GeometryError("contact impedances must be positive")
    # unwrap: each subsequent angle becomes the smallest lift above its predecessor
    out = theta_minus.copy()
    out[0] = np.mod(out[0], 2 * np.pi)
    for i in range(1, m):
        step = np.mod(theta_minus[i] - theta_minus[i - 1], 2 * np.pi)
        if step == 0.0:
            raise GeometryError("coincident electrode angles")
        out[i] = out[i - 1] + step
    theta_plus = np.array([endpoint_from_width(curve, out[i], widths[i]) for i in range(m)])
    layout = ElectrodeLayout(out, theta_plus, widths, z, feeding_index)
    gaps = gap_lengths(curve, layout)
    if np.any(gaps <= 0):
        raise GeometryError(f"inadmissible layout: nonpositive gap (min {np.min(gaps):.3g})")
    for arr in (layout.theta_minus, layout.theta_plus, layout.widths, layout.contact_impedance):
        arr.setflags(write=False)
    return layout


def shift_layout(curve: BoundaryCurve, layout: ElectrodeLayout, delta) -> ElectrodeLayout:
    """Layout with theta_minus += delta (per electrode or scalar), widths fixed."""
    return make_layout(curve, layout.theta_minus + delta, layout.widths,
                       layout.contact_impedance, layout.feeding_index)


def gap_lengths(curve: BoundaryCurve, layout: ElectrodeLayout) -> np.ndarray:
    """Arc lengths of the M gaps; entry m sits between electrodes m and m+1 (mod M).

    Entries can come out nonpositive for inadmissible angle tuples; callers
    treat that as the inadmissibility flag.
    """
    m = layout.n_electrodes
    gaps = np.empty(m)
    for i in range(m):
        a = layout.theta_plus[i]
        b = layout.theta_minus[(i + 1) % m] + (2 * np.pi if i == m - 1 else 0.0)
        if b >= a:
            gaps[i] = curve.arc_length(a, min(b, a + 2 * np.pi))
        else:
            gaps[i] = -curve.arc_length(b, a)  # overlapping electrodes
    return gaps


def is_admissible(curve: BoundaryCurve, layout: ElectrodeLayout, g_floor: float = 0.0) -> bool:
    return bool(np.all(gap_lengths(curve, layout) > g_floor))


def equidistant_layout(curve: BoundaryCurve, n_electrodes: int, width, contact_impedance=None,
                       phase: float = 0.0) -> ElectrodeLayout:
    """Electrodes with equal angular spacing of theta_minus (the usual initial guess)."""
    theta = phase + 2 * np.pi * np.arange(n_electrodes) / n_electrodes
    return make_layout(curve, theta, width, contact_impedance)


def cumulative_arclength_grid(curve: BoundaryCurve, phi_a: float, phi_b: float, n: int):
    """Dense (phi, s) samples of s(phi) on [phi_a, phi_b] by trapezoid quadrature."""
    phi = np.linspace(phi_a, phi_b, n)
    sp = curve.speed(phi)
    s = np.concatenate([[0.0], np.cumsum(0.5 * (sp[1:] + sp[:-1]) * np.diff(phi))])
    return phi, s


def subdivide_by_density(curve: BoundaryCurve, phi_a: float, phi_b: float, density) -> np.ndarray:
    """Split [phi_a, phi_b] into angles equidistributing integral of density ds.

    density maps boundary points (n, 2) to target inverse spacing 1/h; the
    number of subintervals is ceil of the integral, so the realized spacing
    is never larger than the local target.  Returns the interior + endpoint
    angles (len >= 2).
    """
    n_dense = max(32, int(64 * (phi_b - phi_a)))
    phi = np.linspace(phi_a, phi_b, n_dense)
    w = curve.speed(phi) * np.maximum(density(curve.point(phi)), 1e-12)
    g = np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * np.diff(phi))])
    total = g[-1]
    n_seg = max(1, int(np.ceil(total * (1.0 - 1e-12))))
    targets = np.linspace(0.0, total, n_seg + 1)
    out = np.interp(targets, g, phi)
    out[0], out[-1] = phi_a, phi_b
    return out
