"""Geometric exchange integrals between radiators.

All angular operators act on closed-form kernels analytically.  With
``x = omega r / c`` the operator

    D[d/d omega] = (1 + cos^2 xi) + (3 cos^2 xi - 1) (c/r)^2 d^2/d omega^2

becomes ``a + b d^2/dx^2``.  The phase kernels ``(exp(i n x) - 1)/(i x)`` are
handled through the moments ``I_n(x) = int_0^1 t^n exp(i x t) dt``, whose
x-derivatives are ``d^k I_0/dx^k = i^k I_k``.  Small arguments use Taylor
series so the near-cancelling closed forms are never evaluated there.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    GeometryDomainError,
    InvalidParameterError,
    NearFieldDomainError,
    PoleInDomainError,
)
from .numerics import QuadratureConfig, quad_adaptive
from .params import PhysicalSystem

# below this |x| the sinc-type combinations switch to their Taylor series
SERIES_THRESHOLD = 0.1
# below this |x| the phase moments use their power series
MOMENT_SERIES_THRESHOLD = 2.0
# compact two-photon exchange is guarded below this r / lambda_0
NEAR_FIELD_RATIO = 0.5
TRIANGLE_TOL = 1e-9


def _check_cos(value: float, name: str) -> None:
    if not (math.isfinite(value) and abs(value) <= 1.0):
        raise InvalidParameterError(f"{name} must lie in [-1, 1], got {value!r}")


@dataclass(frozen=True)
class PairGeometry:
    r: float
    cos_xi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.r) and self.r >= 0):
            raise InvalidParameterError(f"separation must be >= 0, got {self.r!r}")
        _check_cos(self.cos_xi, "cos_xi")


@dataclass(frozen=True)
class TripletGeometry:
    """Separations of a D atom m, an R atom j and an S atom l."""

    r_mj: float
    r_ml: float
    r_jl: float
    cos_xi_r: float = 0.0
    cos_xi_s: float = 0.0

    def __post_init__(self):
        sides = (self.r_mj, self.r_ml, self.r_jl)
        for name, value in zip(("r_mj", "r_ml", "r_jl"), sides):
            if not (math.isfinite(value) and value >= 0):
                raise InvalidParameterError(f"{name} must be >= 0, got {value!r}")
        longest = max(sides)
        slack = TRIANGLE_TOL * max(longest, 1e-300)
        if 2 * longest > sum(sides) + slack:
            raise GeometryDomainError(f"separations {sides} violate the triangle inequality")
        _check_cos(self.cos_xi_r, "cos_xi_r")
        _check_cos(self.cos_xi_s, "cos_xi_s")


@dataclass(frozen=True)
class AngularOperator:
    """``a + b (c/r)^2 d^2/d omega^2`` for one pair orientation."""

    a_coeff: float
    b_coeff: float
    r: float
    c: float = 1.0

    @classmethod
    def from_cos(cls, cos_xi: float, r: float, c: float = 1.0) -> "AngularOperator":
        mu2 = cos_xi * cos_xi
        return cls(a_coeff=1.0 + mu2, b_coeff=3.0 * mu2 - 1.0, r=r, c=c)

    def apply_to_phase(self, x) -> np.ndarray:
        """Apply to ``(exp(i x) - 1)/(i x)`` (as a function of ``x``)."""
        m = phase_moments(x, 2)
        return self.a_coeff * m[0] - self.b_coeff * m[2]


# -- elementary kernels ------------------------------------------------------

def _sinc_parts(x):
    """Return ``sin x / x`` and ``(sin x - x cos x) / x^3`` for x >= 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < SERIES_THRESHOLD
    xs = np.where(small, x, 0.0)
    x2 = xs * xs
    j0_series = 1 - x2 / 6 * (1 - x2 / 20 * (1 - x2 / 42 * (1 - x2 / 72)))
    j1x_series = 1 / 3 - x2 / 30 + x2**2 / 840 - x2**3 / 45360 + x2**4 / 3991680
    xl = np.where(small, 1.0, x)
    s, c = np.sin(xl), np.cos(xl)
    j0 = np.where(small, j0_series, s / xl)
    j1x = np.where(small, j1x_series, (s - xl * c) / xl**3)
    return j0, j1x


def chi_kernel(omega, geom: PairGeometry, c: float = 1.0):
    """Real angular exchange kernel of a radiator pair.

    (1 - cos^2 xi) sin(x)/x + (1 - 3 cos^2 xi) [cos(x)/x^2 - sin(x)/x^3]
    with ``x = omega r / c``; equals 2/3 at ``x = 0`` for every orientation.
    Accepts scalar or array ``omega``.
    """
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr < 0):
        raise InvalidParameterError("omega must be >= 0")
    x = omega_arr * geom.r / c
    mu2 = geom.cos_xi**2
    j0, j1x = _sinc_parts(x)
    out = (1 - mu2) * j0 - (1 - 3 * mu2) * j1x
    return float(out) if out.ndim == 0 else out


def phase_moments(x, n_max: int) -> np.ndarray:
    """``I_n(x) = int_0^1 t^n exp(i x t) dt`` for ``n = 0..n_max``.

    Power series below ``MOMENT_SERIES_THRESHOLD``; the upward recurrence
    ``I_n = (exp(ix) - n I_{n-1}) / (i x)`` above it, where it is stable.
    """
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < MOMENT_SERIES_THRESHOLD
    out = np.empty((n_max + 1,) + x.shape, dtype=complex)

    xs = np.where(small, x, 0.0)
    term = np.ones_like(xs, dtype=complex)  # (i x)^k / k!
    series = [np.zeros_like(term) for _ in range(n_max + 1)]
    for k in range(40):
        for n in range(n_max + 1):
            series[n] = series[n] + term / (n + k + 1)
        term = term * (1j * xs) / (k + 1)

    xl = np.where(small, 1.0, x)
    e = np.exp(1j * xl)
    prev = (e - 1) / (1j * xl)
    out[0] = np.where(small, series[0], prev)
    for n in range(1, n_max + 1):
        prev = (e - n * prev) / (1j * xl)
        out[n] = np.where(small, series[n], prev)
    return out


def _dphase(x, cos_xi: float):
    """D applied to ``(exp(i x) - 1)/(i x)``; equals 4/3 at x = 0."""
    return AngularOperator.from_cos(cos_xi, 1.0).apply_to_phase(x)


def _scalar(value):
    value = np.asarray(value)
    return complex(value) if value.ndim == 0 else value


def chi_single(omega_i, geom: PairGeometry, c: float = 1.0):
    """Single-photon exchange integral of a dipole-active pair (complex).

    (3/4) D[(exp(i x) - 1)/(i x)] with ``x = omega_i r / c``.  Its real part
    is exactly (3/2) chi_kernel; the ``r -> 0`` limit is 1.
    """
    omega_arr = np.asarray(omega_i, dtype=float)
    if np.any(omega_arr <= 0):
        raise InvalidParameterError("omega_i must be > 0")
    x = omega_arr * geom.r / c
    return _scalar(0.75 * _dphase(x, geom.cos_xi))


def chi_two_photon_compact(omega_0: float, geom: PairGeometry, c: float = 1.0) -> complex:
    """Far-field two-photon exchange integral of a dipole-forbidden pair.

    (9/4) (pi c / (4 omega_0 r)) D^2[(exp(2 i x) - 1)/(i x)], the angular
    operator applied twice.  Diverges as r -> 0, so separations below
    ``NEAR_FIELD_RATIO`` wavelengths raise NearFieldDomainError; use
    `f_two_photon_quadrature` there.
    """
    if not omega_0 > 0:
        raise InvalidParameterError("omega_0 must be > 0")
    x = omega_0 * geom.r / c
    if x / (2 * math.pi) < NEAR_FIELD_RATIO:
        raise NearFieldDomainError(
            f"r / lambda_0 = {x / (2 * math.pi):.3g} < {NEAR_FIELD_RATIO}; "
            "the compact form diverges here, use f_two_photon_quadrature")
    op = AngularOperator.from_cos(geom.cos_xi, geom.r, c)
    # f(x) = 2 I_0(2x) so f^(n)(x) = 2 (2i)^n I_n(2x)
    m = phase_moments(2 * x, 4)
    f0 = 2 * m[0]
    f2 = -8 * m[2]
    f4 = 32 * m[4]
    a, b = op.a_coeff, op.b_coeff
    d2f = a * a * f0 + 2 * a * b * f2 + b * b * f4
    return complex((9 / 4) * (math.pi / (4 * x)) * d2f)


def f_two_photon_quadrature(sys: PhysicalSystem, geom: PairGeometry, nodes: int = 16,
                            cfg: Optional[QuadratureConfig] = None) -> float:
    """Non-divergent real part of the two-photon exchange, F(j, l).

    Integrates omega^3 (2 omega_0 - omega)^3 chi(omega) chi(2 omega_0 - omega)
    {1/(omega_31 - omega) + 1/(omega_32 + omega)}^2 over [0, 2 omega_0] with
    the prefactor d_31^2 d_23^2 / (4 pi hbar^2 c^6).  ``nodes`` is the number
    of initial Gauss-Kronrod panels.
    """
    if nodes < 16:
        raise InvalidParameterError(f"nodes must be >= 16, got {nodes!r}")
    w21 = sys.omega_21
    if sys.omega_31 <= w21:
        raise PoleInDomainError(
            f"omega_31 = {sys.omega_31} <= 2 omega_0 = {w21}: pole inside the integration range")
    pref = sys.d_31**2 * sys.d_23**2 / (4 * math.pi * sys.hbar**2 * sys.c**6)
    if pref == 0:
        return 0.0

    def integrand(w):
        wc = w21 - w
        bracket = 1.0 / (sys.omega_31 - w) + 1.0 / (sys.omega_32 + w)
        return (w**3 * wc**3 * chi_kernel(w, geom, sys.c) * chi_kernel(wc, geom, sys.c)
                * bracket**2)

    return pref * quad_adaptive(integrand, 0.0, w21, cfg or QuadratureConfig(), panels=nodes)


def _rational_moment(q: np.ndarray, m: int, lo: float, hi: float) -> float:
    """``int_lo^hi sum_k q_k u^(k - m) du`` for 0 < lo < hi."""
    total = 0.0
    for k, qk in enumerate(q):
        p = k - m
        if p == -1:
            total += qk * math.log(hi / lo)
        else:
            total += qk * (hi ** (p + 1) - lo ** (p + 1)) / (p + 1)
    return total


def f_two_photon_point_limit(sys: PhysicalSystem) -> float:
    """Closed form of `f_two_photon_quadrature` as r -> 0.

    Both angular kernels tend to 2/3, leaving the rational integral of
    omega^3 (2 omega_0 - omega)^3 {1/(omega_31 - omega) + 1/(omega_32 + omega)}^2,
    which is done term by term after shifting each pole to the origin.
    """
    w21 = sys.omega_21
    a, b = sys.omega_31, sys.omega_32
    if a <= w21:
        raise PoleInDomainError(
            f"omega_31 = {a} <= 2 omega_0 = {w21}: pole inside the integration range")
    P = np.polynomial.Polynomial([0, 0, 0, w21**3, -3 * w21**2, 3 * w21, -1])
    # u = omega_31 - omega runs over [a - w21, a]; v = omega_32 + omega over [b, b + w21]
    q_u = P(np.polynomial.Polynomial([a, -1])).coef
    q_v = P(np.polynomial.Polynomial([-b, 1])).coef
    lo_u, hi_u, lo_v, hi_v = a - w21, a, b, b + w21
    total = (_rational_moment(q_u, 2, lo_u, hi_u) + _rational_moment(q_v, 2, lo_v, hi_v)
             + 2 / (a + b) * (_rational_moment(q_u, 1, lo_u, hi_u)
                              + _rational_moment(q_v, 1, lo_v, hi_v)))
    pref = sys.d_31**2 * sys.d_23**2 / (4 * math.pi * sys.hbar**2 * sys.c**6)
    return pref * (4 / 9) * total


# -- three-particle kernels --------------------------------------------------

def exchange_u(omega_r: float, omega_s: float, geom: TripletGeometry, c: float = 1.0) -> complex:
    """Three-particle kernel for the D -> R + S absorption-type term.

    Product form -(3/4)^2 D_r D_s [(e^{i x_r} - 1)/x_r][(e^{i x_s} - 1)/x_s]
    with ``x_r = omega_r r_mj / c`` and ``x_s = omega_s r_ml / c``.  It equals
    chi_single(omega_r, r_mj) * chi_single(omega_s, r_ml) and tends to 1 for
    a point-like sample.
    """
    if not (omega_r > 0 and omega_s > 0):
        raise InvalidParameterError("omega_r and omega_s must be > 0")
    x_r = omega_r * geom.r_mj / c
    x_s = omega_s * geom.r_ml / c
    # (e^{ix}-1)/x = i (e^{ix}-1)/(ix), and i * i = -1 cancels the sign
    return complex((9 / 16) * _dphase(x_r, geom.cos_xi_r) * _dphase(x_s, geom.cos_xi_s))


def exchange_v(omega_r: float, omega_s: float, geom: TripletGeometry, c: float = 1.0,
               mode: str = "simplified") -> complex:
    """Three-particle kernel for the R + S -> D emission-type term.

    ``mode="simplified"`` is the product form
    (3/4)^2 D_s D_r [(e^{i x_s} - 1)/x_s][(e^{-i x_r} - 1)/x_r]
    = chi_single(omega_s, r_ml) * conj(chi_single(omega_r, r_mj)).

    ``mode="full"`` evaluates the two-branch retarded expression gated by
    theta(r_ml - r_mj) and theta(r_mj - r_jl) (theta(0) = 1/2), with the
    operators applied by symbolic differentiation.  Geometries where both
    gates are closed raise GeometryDomainError.
    """
    if not (omega_r > 0 and omega_s > 0):
        raise InvalidParameterError("omega_r and omega_s must be > 0")
    if mode == "simplified":
        x_r = omega_r * geom.r_mj / c
        x_s = omega_s * geom.r_ml / c
        ds = _dphase(x_s, geom.cos_xi_s)
        dr = _dphase(x_r, geom.cos_xi_r)
        return complex((9 / 16) * ds * np.conj(dr))
    if mode == "full":
        return _exchange_v_full(omega_r, omega_s, geom, c)
    raise InvalidParameterError(f"unknown mode {mode!r}; expected 'simplified' or 'full'")


def _heaviside(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return 0.0
    return 0.5


@functools.lru_cache(maxsize=1)
def _full_v_terms():
    """Symbolically differentiated branches of the full V expression.

    Returns, per branch, four numeric callables (E, d2E/dws2, d2E/dwr2,
    d4E/dws2 dwr2) of (ws, wr, rml, rjm, c).
    """
    import sympy as sp

    ws, wr, rml, rjm, c = sp.symbols("ws wr rml rjm c", positive=True)
    I = sp.I
    xs = ws * rml / c
    xr = wr * rjm / c
    den = ws * wr * rjm * rml
    branch1 = c**2 * (2 * sp.exp(I * (xs - xr)) - 2 * sp.exp(2 * I * xs)
                      - sp.exp(-2 * I * xr) + 1) / (2 * den)
    branch2 = (c**2 * ((sp.exp(-I * xr) - 1) * sp.exp(I * xs) - sp.exp(-I * xs - I * xr)) / den
               + c**2 * (ws * sp.exp(-I * (ws + wr) * rml / c) + wr) / ((ws + wr) * den))
    args = (ws, wr, rml, rjm, c)
    out = []
    for expr in (branch1, branch2):
        parts = (expr, sp.diff(expr, ws, 2), sp.diff(expr, wr, 2), sp.diff(expr, ws, 2, wr, 2))
        out.append(tuple(sp.lambdify(args, p, modules="numpy") for p in parts))
    return tuple(out)


def _exchange_v_full(omega_r, omega_s, geom: TripletGeometry, c: float) -> complex:
    gate1 = _heaviside(geom.r_ml - geom.r_mj)
    gate2 = _heaviside(geom.r_mj - geom.r_jl)
    if gate1 == 0 and gate2 == 0:
        raise GeometryDomainError(
            "full V(j,l,m) is undefined when r_ml < r_mj and r_mj < r_jl")
    if geom.r_ml == 0 or geom.r_mj == 0:
        raise GeometryDomainError("full V(j,l,m) needs non-zero r_ml and r_mj")
    op_s = AngularOperator.from_cos(geom.cos_xi_s, geom.r_ml, c)
    op_r = AngularOperator.from_cos(geom.cos_xi_r, geom.r_mj, c)
    ks = (c / geom.r_ml) ** 2
    kr = (c / geom.r_mj) ** 2
    args = (omega_s, omega_r, geom.r_ml, geom.r_mj, c)
    total = 0j
    for gate, (e, e_ss, e_rr, e_ssrr) in zip((gate1, gate2), _full_v_terms()):
        if gate == 0:
            continue
        value = (op_s.a_coeff * op_r.a_coeff * e(*args)
                 + op_s.b_coeff * op_r.a_coeff * ks * e_ss(*args)
                 + op_s.a_coeff * op_r.b_coeff * kr * e_rr(*args)
                 + op_s.b_coeff * op_r.b_coeff * ks * kr * e_ssrr(*args))
        total += gate * complex(value)
    return (9 / 16) * total
