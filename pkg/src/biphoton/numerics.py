"""Adaptive ODE integration and adaptive quadrature.

The integrator is the Dormand-Prince 5(4) embedded pair with local
extrapolation and first-same-as-last stage reuse.  Dense output is a cubic
Hermite interpolant built from the endpoint values and derivatives of every
accepted step; requested output times are hit exactly by shortening steps.

The quadrature is a globally adaptive Gauss-Kronrod 7/15 scheme: the panel
with the largest error estimate is bisected until the total estimate meets
the tolerance.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    InvalidParameterError,
    MaxStepsError,
    NonConvergenceError,
    NonFiniteError,
    StepUnderflowError,
)

_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-8
    abs_tol: float = 1e-12
    max_steps: int = 200_000
    initial_step: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.rel_tol <= 1e-2:
            raise InvalidParameterError(f"rel_tol must lie in (0, 1e-2], got {self.rel_tol!r}")
        if not 0 < self.abs_tol <= 1e-2:
            raise InvalidParameterError(f"abs_tol must lie in (0, 1e-2], got {self.abs_tol!r}")
        if self.max_steps < 1000:
            raise InvalidParameterError(f"max_steps must be >= 1000, got {self.max_steps!r}")
        if self.initial_step is not None and not self.initial_step > 0:
            raise InvalidParameterError("initial_step must be > 0")


@dataclass(frozen=True)
class QuadratureConfig:
    rel_tol: float = 1e-12
    max_depth: int = 40

    def __post_init__(self):
        if not 0 < self.rel_tol <= 1e-4:
            raise InvalidParameterError(f"rel_tol must lie in (0, 1e-4], got {self.rel_tol!r}")
        if self.max_depth < 10:
            raise InvalidParameterError(f"max_depth must be >= 10, got {self.max_depth!r}")


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW


@dataclass
class OdeSolution:
    """Accepted steps of an integration plus a Hermite dense interpolant."""

    t: np.ndarray
    y: np.ndarray
    dydt: np.ndarray
    nfev: int = 0
    n_accepted: int = 0
    n_rejected: int = 0
    t_eval: Optional[np.ndarray] = None
    y_eval: Optional[np.ndarray] = None

    def __call__(self, times) -> np.ndarray:
        """State at ``times``: shape (n,) for a scalar time, (m, n) for m times."""
        scalar = np.ndim(times) == 0
        times = np.atleast_1d(np.asarray(times, dtype=float))
        if times.min() < self.t[0] or times.max() > self.t[-1]:
            raise InvalidParameterError("dense output requested outside the integrated span")
        k = np.clip(np.searchsorted(self.t, times, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[k], self.t[k + 1]
        h = (t1 - t0)[:, None]
        s = ((times - t0) / (t1 - t0))[:, None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        out = (h00 * self.y[k] + h10 * h * self.dydt[k]
               + h01 * self.y[k + 1] + h11 * h * self.dydt[k + 1])
        return out[0] if scalar else out

    @property
    def stats(self) -> dict:
        return {"nfev": self.nfev, "n_accepted": self.n_accepted, "n_rejected": self.n_rejected}


def _rms(v: np.ndarray) -> float:
    return float(np.sqrt(np.mean(v * v)))


def _initial_step(rhs, t0, y0, f0, span, rtol, atol) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = _rms(y0 / scale)
    d1 = _rms(f0 / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    f1 = rhs(t0 + h0, y0 + h0 * f0)
    d2 = _rms((f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, span)


def _dp_step(rhs, t, y, f, h):
    k = [f]
    for i in range(1, 7):
        yi = y.copy()
        for j, a in enumerate(_A[i]):
            if a:
                yi += (h * a) * k[j]
        k.append(rhs(t + _C[i] * h, yi))
    y_new = y
    for bj, kj in zip(_B, k):
        if bj:
            y_new = y_new + (h * bj) * kj
    err = np.zeros_like(y)
    for ej, kj in zip(_E, k):
        err += (h * ej) * kj
    return y_new, k[6], err


def ode_solve(rhs: Callable[[float, np.ndarray], np.ndarray], y0, t_span: Sequence[float],
              cfg: Optional[IntegratorConfig] = None, t_eval=None) -> OdeSolution:
    """Integrate ``y' = rhs(t, y)`` over ``t_span`` with local error control.

    The error of every accepted step satisfies
    ``rms(err / (abs_tol + rel_tol * |y|)) <= 1``.  When ``t_eval`` is given,
    steps are shortened so each requested time is an accepted step point and
    ``y_eval`` holds the integrator values there, free of interpolation error.

    Raises StepUnderflowError when the step size collapses, MaxStepsError
    when ``cfg.max_steps`` accepted steps do not reach the end, and
    NonFiniteError when the right-hand side keeps returning non-finite values.
    """
    cfg = cfg or IntegratorConfig()
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not (math.isfinite(t0) and math.isfinite(t1) and t1 > t0):
        raise InvalidParameterError(f"t_span must be increasing and finite, got {t_span!r}")
    y = np.array(y0, dtype=float)
    f = np.asarray(rhs(t0, y), dtype=float)
    nfev = 1
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(f))):
        raise NonFiniteError(f"non-finite initial state or derivative at t={t0}: y={y}, f={f}")

    targets = None
    if t_eval is not None:
        targets = np.asarray(t_eval, dtype=float)
        if targets.ndim != 1 or np.any(np.diff(targets) <= 0):
            raise InvalidParameterError("t_eval must be strictly increasing")
        if targets[0] < t0 or targets[-1] > t1:
            raise InvalidParameterError("t_eval must lie inside t_span")
    stops = [] if targets is None else [tt for tt in targets if tt > t0]
    if not stops or stops[-1] < t1:
        stops.append(t1)
    stop_idx = 0

    rtol, atol = cfg.rel_tol, cfg.abs_tol
    if cfg.initial_step is not None:
        h = min(cfg.initial_step, t1 - t0)
    else:
        h = _initial_step(rhs, t0, y, f, t1 - t0, rtol, atol)
        nfev += 1

    ts, ys, fs = [t0], [y], [f]
    t = t0
    n_rej = 0
    nonfinite_streak = 0
    while t < t1:
        if len(ts) > cfg.max_steps:
            raise MaxStepsError(f"exceeded {cfg.max_steps} steps at t={t} (end {t1})")
        stop = stops[stop_idx]
        h_step = h
        clipped = False
        if t + h_step >= stop or stop - (t + h_step) < 1e-12 * h_step:
            h_step = stop - t
            clipped = True
        if h_step <= 16 * _EPS * max(abs(t), 1.0):
            if nonfinite_streak:
                raise NonFiniteError(f"right-hand side non-finite just after t={t}, y={y}")
            raise StepUnderflowError(f"step size underflow at t={t} (h={h_step:.3e})")

        y_new, f_new, err = _dp_step(rhs, t, y, f, h_step)
        nfev += 6
        if not (np.all(np.isfinite(y_new)) and np.all(np.isfinite(f_new))):
            nonfinite_streak += 1
            n_rej += 1
            if nonfinite_streak > 60:
                raise NonFiniteError(f"right-hand side non-finite near t={t}, y={y}")
            h = 0.25 * h_step
            continue
        nonfinite_streak = 0
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = _rms(err / scale)
        if err_norm <= 1.0:
            t = stop if clipped else t + h_step
            y, f = y_new, f_new
            ts.append(t)
            ys.append(y)
            fs.append(f)
            factor = 5.0 if err_norm == 0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            h_next = h_step * factor
            # a clipped step says nothing about the achievable size
            h = max(h, h_next) if clipped and factor >= 1.0 else h_next
            if clipped:
                stop_idx = min(stop_idx + 1, len(stops) - 1)
        else:
            n_rej += 1
            h = h_step * max(0.2, 0.9 * err_norm ** -0.25)

    sol = OdeSolution(t=np.array(ts), y=np.array(ys), dydt=np.array(fs), nfev=nfev,
                      n_accepted=len(ts) - 1, n_rejected=n_rej)
    if targets is not None:
        idx = np.searchsorted(sol.t, targets)
        idx = np.clip(idx, 0, len(sol.t) - 1)
        if not np.array_equal(sol.t[idx], targets):
            raise AssertionError("requested output times were not hit exactly")
        sol.t_eval = targets.copy()
        sol.y_eval = sol.y[idx].copy()
    return sol


def ode_solve_fixed(rhs: Callable[[float, np.ndarray], np.ndarray], y0,
                    t_span: Sequence[float], n_steps: int) -> np.ndarray:
    """Fixed-step fifth-order Dormand-Prince integration; returns all states."""
    if n_steps < 1:
        raise InvalidParameterError("n_steps must be >= 1")
    t0, t1 = float(t_span[0]), float(t_span[1])
    h = (t1 - t0) / n_steps
    y = np.array(y0, dtype=float)
    f = np.asarray(rhs(t0, y), dtype=float)
    out = [y]
    for i in range(n_steps):
        y, f, _ = _dp_step(rhs, t0 + i * h, y, f, h)
        out.append(y)
    return np.array(out)


# Gauss-Kronrod 7/15 nodes and weights on [-1, 1] (non-negative half)
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

KRONROD_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_WEIGHTS = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss nodes sit at the odd positions of the Kronrod set
GAUSS_WEIGHTS = np.zeros(15)
GAUSS_WEIGHTS[1::2] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(f, a, b):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    x = mid + half * KRONROD_NODES
    fx = np.asarray(f(x), dtype=float)
    if fx.shape != x.shape:
        fx = np.broadcast_to(fx, x.shape)
    if not np.all(np.isfinite(fx)):
        bad = x[~np.isfinite(fx)][0]
        raise NonFiniteError(f"integrand is not finite at x={bad!r}")
    kron = half * float(KRONROD_WEIGHTS @ fx)
    gauss = half * float(GAUSS_WEIGHTS @ fx)
    resabs = abs(half) * float(KRONROD_WEIGHTS @ np.abs(fx))
    return kron, abs(kron - gauss), resabs


def quad_adaptive(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                  cfg: Optional[QuadratureConfig] = None, panels: int = 1) -> float:
    """Integrate ``f`` over ``[a, b]``.

    ``f`` receives 1-D arrays of nodes and must return values of the same
    shape.  The interval is first cut into ``panels`` equal pieces.  Converges
    when the summed Gauss/Kronrod difference is below ``rel_tol * |I|`` (or
    below the roundoff level of the absolute integral).
    """
    cfg = cfg or QuadratureConfig()
    if not (math.isfinite(a) and math.isfinite(b)):
        raise InvalidParameterError("integration limits must be finite")
    if a == b:
        return 0.0
    if panels < 1:
        raise InvalidParameterError("panels must be >= 1")
    edges = np.linspace(a, b, panels + 1)
    heap = []
    total = err_total = abs_total = 0.0
    for k in range(panels):
        lo, hi = float(edges[k]), float(edges[k + 1])
        val, err, resabs = _gk15(f, lo, hi)
        heapq.heappush(heap, (-err, k, lo, hi, val, 0, resabs))
        total += val
        err_total += err
        abs_total += resabs
    counter = panels
    while err_total > max(cfg.rel_tol * abs(total), 50 * _EPS * abs_total):
        neg_err, _, lo, hi, val, depth, resabs = heapq.heappop(heap)
        if depth >= cfg.max_depth:
            raise NonConvergenceError(
                f"quadrature did not converge: panel [{lo}, {hi}] at depth {depth}, "
                f"error estimate {err_total:.3e} vs target {cfg.rel_tol * abs(total):.3e}")
        mid = 0.5 * (lo + hi)
        v1, e1, a1 = _gk15(f, lo, mid)
        v2, e2, a2 = _gk15(f, mid, hi)
        total += v1 + v2 - val
        err_total += e1 + e2 + neg_err
        abs_total += a1 + a2 - resabs
        heapq.heappush(heap, (-e1, counter, lo, mid, v1, depth + 1, a1))
        heapq.heappush(heap, (-e2, counter + 1, mid, hi, v2, depth + 1, a2))
        counter += 2
    # re-sum to shed accumulated update roundoff
    return float(math.fsum(item[4] for item in heap))
