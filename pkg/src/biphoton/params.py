"""Physical parameters, decay times and collective rates.

Everything here is a pure function of its inputs.  Times and rates come out
in whatever units the inputs carry; `RateSet.in_units_of_tau_b` rescales a
rate set so the two-photon decay time is 1, which is the unit system the
dynamics modules work in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .errors import ForbiddenChannelError, InvalidParameterError, SingularDenominatorError


@dataclass(frozen=True)
class PhysicalSystem:
    """Atomic frequencies, dipole moments and ensemble sizes.

    ``omega_0`` is half the two-photon transition frequency of the D atoms,
    ``omega_31``/``omega_32`` are the intermediate-level frequencies of the D
    three-level scheme, ``d_23``/``d_31`` the corresponding dipole moments.
    """

    omega_r: float
    omega_s: float
    omega_0: float
    omega_31: float
    omega_32: float
    d_r: float
    d_s: float
    d_23: float
    d_31: float
    N_r: int = 1
    N_s: int = 1
    N: int = 1
    hbar: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        for name in ("omega_r", "omega_s", "omega_0", "omega_31", "omega_32", "hbar", "c"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be finite and > 0, got {value!r}")
        for name in ("d_r", "d_s", "d_23", "d_31"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise InvalidParameterError(f"{name} must be finite and >= 0, got {value!r}")
        for name in ("N_r", "N_s", "N"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidParameterError(f"{name} must be an integer >= 1, got {value!r}")

    @property
    def omega_21(self) -> float:
        return 2.0 * self.omega_0

    @property
    def wavelength_0(self) -> float:
        """Wavelength of a photon at ``omega_0``."""
        return 2.0 * math.pi * self.c / self.omega_0


class CollectiveRates(NamedTuple):
    A: float
    B: float
    C: float
    D: float


@dataclass(frozen=True)
class RateSet:
    """Decay times of the three subsystems plus the three-particle time.

    ``tau3 = inf`` means the three-particle channel is switched off.  The
    collective rates A..D and the dimensionless coupling ``tau_b / tau3`` are
    derived on construction.
    """

    tau_r: float
    tau_s: float
    tau_b: float
    tau3: float = math.inf
    A: float = field(init=False)
    B: float = field(init=False)
    C: float = field(init=False)
    D: float = field(init=False)

    def __post_init__(self):
        if not (math.isfinite(self.tau_b) and self.tau_b > 0):
            raise InvalidParameterError(f"tau_b must be finite and > 0, got {self.tau_b!r}")
        for name in ("tau_r", "tau_s", "tau3"):
            value = getattr(self, name)
            if math.isnan(value) or value <= 0:
                raise InvalidParameterError(f"{name} must be > 0 (inf allowed), got {value!r}")
        rates = collective_rates(self.tau_r, self.tau_s, self.tau_b)
        for name, value in zip(rates._fields, rates):
            object.__setattr__(self, name, value)

    @classmethod
    def from_coupling(cls, tau_r: float, tau_s: float, tau_b: float, coupling: float) -> "RateSet":
        if not (math.isfinite(coupling) and coupling >= 0):
            raise InvalidParameterError(f"coupling must be finite and >= 0, got {coupling!r}")
        tau3 = math.inf if coupling == 0 else tau_b / coupling
        return cls(tau_r=tau_r, tau_s=tau_s, tau_b=tau_b, tau3=tau3)

    @property
    def coupling(self) -> float:
        return self.tau_b / self.tau3

    @property
    def inv_tau3(self) -> float:
        return 1.0 / self.tau3

    def scaled(self, lam: float) -> "RateSet":
        """All times multiplied by ``lam`` (rates divided by it)."""
        if not (math.isfinite(lam) and lam > 0):
            raise InvalidParameterError(f"scale must be finite and > 0, got {lam!r}")
        return RateSet(self.tau_r * lam, self.tau_s * lam, self.tau_b * lam, self.tau3 * lam)

    def in_units_of_tau_b(self) -> "RateSet":
        return self.scaled(1.0 / self.tau_b)

    def with_coupling(self, coupling: float) -> "RateSet":
        return RateSet.from_coupling(self.tau_r, self.tau_s, self.tau_b, coupling)

    def as_dict(self) -> dict:
        return {
            "tau_r": self.tau_r,
            "tau_s": self.tau_s,
            "tau_b": self.tau_b,
            "tau3": self.tau3,
            "coupling": self.coupling,
            "A": self.A,
            "B": self.B,
            "C": self.C,
            "D": self.D,
        }


def _inv(tau: float) -> float:
    return 0.0 if math.isinf(tau) else 1.0 / tau


def collective_rates(tau_r: float, tau_s: float, tau_b: float) -> CollectiveRates:
    """Collective rates of the triple and pair correlators.

    D pairs the R and D subsystems (1/tau_r + 1/tau_b); it is the decay rate
    of <N_r N_d>.
    """
    for name, tau in (("tau_r", tau_r), ("tau_s", tau_s), ("tau_b", tau_b)):
        if math.isnan(tau) or tau <= 0:
            raise InvalidParameterError(f"{name} must be > 0, got {tau!r}")
    gr, gs, gb = _inv(tau_r), _inv(tau_s), _inv(tau_b)
    return CollectiveRates(A=gr + gb + gs, B=gr + gs, C=gs + gb, D=gr + gb)


def q_amplitude(omega_k1: float, omega_k2: float, sys: PhysicalSystem,
                g_k1: float, g_k2: float) -> float:
    """Second-order coupling amplitude of the D two-photon transition."""
    den1 = sys.omega_32 + omega_k1
    den2 = sys.omega_31 - omega_k2
    if den1 == 0:
        raise SingularDenominatorError("omega_32 + omega_k1 = 0")
    if den2 == 0:
        raise SingularDenominatorError("omega_31 = omega_k2: intermediate-level resonance")
    pref = sys.d_23 * sys.d_31 * g_k2 * g_k1 / (2.0 * sys.hbar)
    return pref * (1.0 / den1 + 1.0 / den2)


def tau_single(d_i: float, omega_i: float, hbar: float = 1.0, c: float = 1.0) -> float:
    """Single-atom spontaneous emission time 3 hbar c^3 / (4 d^2 omega^3)."""
    if not (d_i > 0 and math.isfinite(d_i)):
        raise InvalidParameterError(f"dipole moment must be > 0, got {d_i!r}")
    if not (omega_i > 0 and math.isfinite(omega_i)):
        raise InvalidParameterError(f"frequency must be > 0, got {omega_i!r}")
    return 3.0 * hbar * c**3 / (4.0 * d_i**2 * omega_i**3)


def tau_two_photon(sys: PhysicalSystem) -> float:
    """Two-photon decay time tau_b of the dipole-forbidden D transition.

    Raises ForbiddenChannelError when either intermediate dipole vanishes,
    because every dynamics quantity is measured in units of tau_b.
    """
    w0 = sys.omega_0
    den1 = sys.omega_32 + w0
    den2 = sys.omega_31 - w0
    if den1 == 0:
        raise SingularDenominatorError("omega_32 + omega_0 = 0")
    if den2 == 0:
        raise SingularDenominatorError("omega_31 = omega_0: intermediate-level resonance")
    bracket = 1.0 / den1 + 1.0 / den2
    half_rate = (4.0 / 9.0) * (w0**7 * sys.d_23**2 * sys.d_31**2
                               / (4.0 * math.pi * sys.hbar**2 * sys.c**6)) * 1.5 * bracket**2
    if half_rate == 0:
        raise ForbiddenChannelError("two-photon channel decoupled: tau_b is infinite")
    tau = 1.0 / (2.0 * half_rate)
    if not math.isfinite(tau):
        raise ForbiddenChannelError(f"two-photon decay time overflowed ({tau!r})")
    return tau


def tau_three(sys: PhysicalSystem) -> float:
    """Three-particle cooperative time; ``inf`` when the channel is closed.

    The same value serves both three-particle times of the master equation.
    Only the (omega_s, omega_r) ordering of the bracket is used, so swapping
    the R and S subsystems changes the result.
    """
    den1 = sys.omega_32 + sys.omega_s
    den2 = sys.omega_31 - sys.omega_r
    if den1 == 0:
        raise SingularDenominatorError("omega_32 + omega_s = 0")
    if den2 == 0:
        raise SingularDenominatorError("omega_31 = omega_r: intermediate-level resonance")
    rate = ((2.0 / 3.0)**2
            * sys.d_s * sys.d_r * sys.d_23 * sys.d_31 * sys.omega_s**3 * sys.omega_r**3
            / (4.0 * math.pi * sys.c**6 * sys.hbar**2)
            * (1.0 / den1 + 1.0 / den2))
    if rate == 0:
        return math.inf
    if rate < 0:
        raise InvalidParameterError(
            f"three-particle rate is negative ({rate!r}); omega_31 < omega_r is not modelled")
    return 1.0 / rate


def rates_from_system(sys: PhysicalSystem) -> RateSet:
    """All decay times of a physical system, in the system's own time unit."""
    tau_r = tau_single(sys.d_r, sys.omega_r, sys.hbar, sys.c)
    tau_s = tau_single(sys.d_s, sys.omega_s, sys.hbar, sys.c)
    return RateSet(tau_r=tau_r, tau_s=tau_s, tau_b=tau_two_photon(sys), tau3=tau_three(sys))


@dataclass(frozen=True)
class ResonanceCheck:
    passed: bool
    residual: float


def validate_resonance(sys: PhysicalSystem, rel_tol: float = 1e-9) -> ResonanceCheck:
    """Check the energy balance omega_r + omega_s = 2 omega_0."""
    if not rel_tol > 0:
        raise InvalidParameterError(f"rel_tol must be > 0, got {rel_tol!r}")
    residual = abs(sys.omega_r + sys.omega_s - 2.0 * sys.omega_0)
    return ResonanceCheck(passed=residual <= rel_tol * 2.0 * sys.omega_0, residual=residual)
