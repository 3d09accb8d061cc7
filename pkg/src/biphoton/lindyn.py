"""Exactly solvable three-atom correlation model (point-like sample).

State: excitation numbers n_s, n_r, n_d, the three-particle correlator f and
the occupation correlators <N_s N_r N_d>, <N_s N_r>, <N_s N_d>, <N_r N_d>.
The correlators decay as pure exponentials; f is driven by them and in turn
drains the occupations.  `linear_closed_form` solves the chain exactly as a
sum of convolved exponentials, `integrate_linear` integrates it numerically.
"""

from __future__ import annotations

import math
from dataclasses import astuple, dataclass, field, fields
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidParameterError
from .numerics import IntegratorConfig, ode_solve
from .params import RateSet

LINEAR_COLUMNS = ("n_s", "n_r", "n_d", "f", "c_srd", "c_sr", "c_sd", "c_rd")

# relative rate difference below which exponential quotients take their limit
DEGENERATE_REL = 1e-9


@dataclass(frozen=True)
class LinearState:
    n_s: float = 1.0
    n_r: float = 1.0
    n_d: float = 1.0
    f: float = 0.0
    c_srd: float = 1.0
    c_sr: float = 1.0
    c_sd: float = 1.0
    c_rd: float = 1.0

    @classmethod
    def excited(cls) -> "LinearState":
        return cls()

    @classmethod
    def from_array(cls, values) -> "LinearState":
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @property
    def d_z(self) -> float:
        return self.n_d - 0.5


@dataclass
class Trajectory:
    """Time series of a model state.

    ``values[i, k]`` is column ``columns[k]`` at ``times[i]``.  ``rhs``, when
    set, is the vector field the trajectory solves, so derived quantities
    such as emission rates can be evaluated exactly at every sample.
    """

    times: np.ndarray
    values: np.ndarray
    columns: tuple
    derived: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    rhs: Optional[Callable[[float, np.ndarray], np.ndarray]] = field(default=None, repr=False)
    state_type: Optional[type] = field(default=None, repr=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.times), len(self.columns)):
            raise InvalidParameterError(
                f"values shape {self.values.shape} does not match "
                f"{len(self.times)} times x {len(self.columns)} columns")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidParameterError("trajectory times must be strictly increasing")
        for name, series in self.derived.items():
            if len(series) != len(self.times):
                raise InvalidParameterError(f"derived series {name!r} has the wrong length")

    def __len__(self) -> int:
        return len(self.times)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.columns.index(name)]

    def state(self, i: int):
        if self.state_type is None:
            return dict(zip(self.columns, self.values[i]))
        return self.state_type.from_array(self.values[i])

    @property
    def final(self):
        return self.state(-1)


def _rhs_array(y: np.ndarray, rates: RateSet) -> np.ndarray:
    n_s, n_r, n_d, f, c_srd, c_sr, c_sd, c_rd = y
    g3 = rates.inv_tau3
    gs = 0.0 if math.isinf(rates.tau_s) else 1.0 / rates.tau_s
    gr = 0.0 if math.isinf(rates.tau_r) else 1.0 / rates.tau_r
    gb = 1.0 / rates.tau_b
    return np.array([
        -n_s * gs - 0.5 * g3 * f,
        -n_r * gr - 0.5 * g3 * f,
        -n_d * gb - g3 * f,
        -0.5 * rates.A * f + g3 * (6.0 * c_srd - 2.0 * c_sr - c_sd - c_rd),
        -rates.A * c_srd,
        -rates.B * c_sr,
        -rates.C * c_sd,
        -rates.D * c_rd,
    ])


def linear_rhs(state, rates: RateSet):
    """Time derivative of the linear correlation system.

    Accepts a LinearState (returns a LinearState of derivatives) or an array
    in `LINEAR_COLUMNS` order (returns an array).
    """
    if isinstance(state, LinearState):
        return LinearState.from_array(_rhs_array(state.as_array(), rates))
    return _rhs_array(np.asarray(state, dtype=float), rates)


# -- closed form -------------------------------------------------------------

def _close(a: float, b: float) -> bool:
    return abs(a - b) <= DEGENERATE_REL * max(abs(a), abs(b))


def _conv2(mu: float, lam: float, t: np.ndarray) -> np.ndarray:
    """int_0^t exp(-mu (t-s)) exp(-lam s) ds."""
    d = mu - lam
    if _close(mu, lam):
        return t * np.exp(-mu * t) * (1.0 + 0.5 * d * t)
    dt = d * t
    with np.errstate(over="ignore"):
        stable = np.exp(-mu * t) * np.expm1(np.minimum(dt, 1.0)) / d
    direct = (np.exp(-lam * t) - np.exp(-mu * t)) / d
    return np.where(dt > 1.0, direct, stable)


def _conv3(r1: float, r2: float, r3: float, t: np.ndarray) -> np.ndarray:
    """Triple convolution of exp(-r1 t), exp(-r2 t), exp(-r3 t)."""
    lo, mid, hi = sorted((r1, r2, r3))
    if _close(lo, hi):
        m = (lo + mid + hi) / 3.0
        return 0.5 * t * t * np.exp(-m * t)
    return (_conv2(lo, mid, t) - _conv2(mid, hi, t)) / (hi - lo)


# weights of <N_s N_r N_d>, <N_s N_r>, <N_s N_d>, <N_r N_d> in the f source
_SOURCE_WEIGHTS = (6.0, -2.0, -1.0, -1.0)


def _closed_form_array(t, rates: RateSet) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidParameterError("closed form needs t >= 0")
    source_rates = (rates.A, rates.B, rates.C, rates.D)
    half_a = 0.5 * rates.A
    g3 = rates.inv_tau3
    out = np.empty(t.shape + (8,))
    out[..., 4] = np.exp(-rates.A * t)
    out[..., 5] = np.exp(-rates.B * t)
    out[..., 6] = np.exp(-rates.C * t)
    out[..., 7] = np.exp(-rates.D * t)
    out[..., 3] = g3 * sum(w * _conv2(half_a, lam, t)
                           for w, lam in zip(_SOURCE_WEIGHTS, source_rates))
    for col, tau, drain in ((0, rates.tau_s, 0.5), (1, rates.tau_r, 0.5), (2, rates.tau_b, 1.0)):
        mu = 0.0 if math.isinf(tau) else 1.0 / tau
        conv = sum(w * _conv3(mu, half_a, lam, t)
                   for w, lam in zip(_SOURCE_WEIGHTS, source_rates))
        out[..., col] = np.exp(-mu * t) - drain * g3 * g3 * conv
    return out


def linear_closed_form(t: float, rates: RateSet) -> LinearState:
    """Exact state of the linear system at time ``t`` from full excitation.

    f is the integrating-factor solution of its linear equation with the
    exponential correlators as source; each occupation is its free decay
    minus the convolution of its drain with f.  Coincident rates take their
    limiting forms.
    """
    return LinearState.from_array(_closed_form_array(float(t), rates))


def closed_form_trajectory(times: Sequence[float], rates: RateSet) -> Trajectory:
    times = np.asarray(times, dtype=float)
    return Trajectory(times=times, values=_closed_form_array(times, rates),
                      columns=LINEAR_COLUMNS, rhs=lambda t, y: _rhs_array(y, rates),
                      state_type=LinearState)


def reference_f(t, rates: RateSet) -> np.ndarray:
    """Reference expression for f(t) with weights (6, 4, 2, 2), comparison only.

    Its weights and half-rate shifts do not match the source term of the f
    equation, so it does not solve `linear_rhs`; `reference_f_discrepancy`
    measures by how much.
    """
    t = np.asarray(t, dtype=float)
    g3 = rates.inv_tau3
    gb = 1.0 / rates.tau_b
    gr = 0.0 if math.isinf(rates.tau_r) else 1.0 / rates.tau_r
    gs = 0.0 if math.isinf(rates.tau_s) else 1.0 / rates.tau_s

    def term(rate):
        if rate == 0:
            return 0.5 * t
        return -np.expm1(-rate * t / 2) / rate

    bracket = (6 * term(rates.A) - 4 * term(rates.B - gb)
               - 2 * term(rates.C - gr) - 2 * term(rates.C - gs))
    return np.exp(-rates.A * t / 2) * g3 * bracket


def reference_f_discrepancy(rates: RateSet, times: Sequence[float]) -> float:
    """Largest |reference f - exact f| over ``times``."""
    times = np.asarray(times, dtype=float)
    exact = _closed_form_array(times, rates)[:, 3]
    return float(np.max(np.abs(reference_f(times, rates) - exact)))


# -- numerical integration ---------------------------------------------------

def integrate_linear(rates: RateSet, t_end: float, tol: float = 1e-9,
                     samples: Optional[int] = None, t_eval=None,
                     initial: Optional[LinearState] = None) -> Trajectory:
    """Integrate the linear system from full excitation to ``t_end``.

    ``tol`` is the relative local error tolerance; the absolute tolerance is
    ``1e-6 * tol``, i.e. values below a millionth of the initial unit
    occupation are controlled in absolute terms.  Output is on ``t_eval``, on
    ``samples`` uniform points, or at the accepted steps when neither is
    given.
    """
    if not t_end > 0:
        raise InvalidParameterError(f"t_end must be > 0, got {t_end!r}")
    if not 0 < tol <= 1e-3:
        raise InvalidParameterError(f"tol must lie in (0, 1e-3], got {tol!r}")
    if t_eval is None and samples is not None:
        if samples < 2:
            raise InvalidParameterError("samples must be >= 2")
        t_eval = np.linspace(0.0, t_end, samples)
    y0 = (initial or LinearState.excited()).as_array()

    def rhs(t, y):
        return _rhs_array(y, rates)

    cfg = IntegratorConfig(rel_tol=tol, abs_tol=1e-6 * tol)
    sol = ode_solve(rhs, y0, (0.0, t_end), cfg, t_eval=t_eval)
    if t_eval is not None:
        times, values = sol.t_eval, sol.y_eval
    else:
        times, values = sol.t, sol.y
    return Trajectory(times=times, values=values, columns=LINEAR_COLUMNS,
                      stats=sol.stats, rhs=rhs, state_type=LinearState)
