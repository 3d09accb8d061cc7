"""Decorrelated mean-field dynamics of N_r + N_s + N radiators.

Each subsystem obeys a Dicke superradiance equation for its collective
inversion, coupled through the three-particle correlator F.  F is driven by
products of the inversions and by exponentially decaying seed terms that
ignite the correlated channel from full inversion.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BiphotonError, DegenerateTrajectoryError, InvalidParameterError, NonFiniteError
from .lindyn import Trajectory
from .numerics import IntegratorConfig, ode_solve
from .params import RateSet

MF_COLUMNS = ("r_z", "s_z", "d_z", "f")


@dataclass(frozen=True)
class MeanFieldState:
    r_z: float
    s_z: float
    d_z: float
    f: float = 0.0

    @classmethod
    def from_array(cls, values) -> "MeanFieldState":
        return cls(*(float(v) for v in values))

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)


@dataclass(frozen=True)
class MeanFieldParams:
    N_r: int
    N_s: int
    N: int
    rates: RateSet
    drive_enabled: bool = True

    def __post_init__(self):
        for name in ("N_r", "N_s", "N"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise InvalidParameterError(f"{name} must be an integer >= 1, got {value!r}")
        if not isinstance(self.rates, RateSet):
            raise InvalidParameterError("rates must be a RateSet")

    def fully_inverted(self) -> MeanFieldState:
        return MeanFieldState(self.N_r / 2, self.N_s / 2, self.N / 2, 0.0)

    def ground(self) -> MeanFieldState:
        return MeanFieldState(-self.N_r / 2, -self.N_s / 2, -self.N / 2, 0.0)

    def with_coupling(self, coupling: float) -> "MeanFieldParams":
        return MeanFieldParams(self.N_r, self.N_s, self.N, self.rates.with_coupling(coupling),
                               self.drive_enabled)


def dicke_bracket(j_z, n: int):
    """N(N+2)/4 - j_z^2 + j_z: N at full inversion, 0 in the ground state."""
    return n * (n + 2) / 4 - j_z * j_z + j_z


def drive(t: float, p: MeanFieldParams) -> float:
    """Seed terms of the F equation (zero when the drive is disabled)."""
    if not p.drive_enabled:
        return 0.0
    rt = p.rates
    return (4.0 * p.N_s * p.N_r * p.N * math.exp(-rt.A * t)
            - p.N_s * p.N_r * math.exp(-rt.B * t)
            - 0.5 * p.N_s * p.N * math.exp(-rt.C * t)
            - 0.5 * p.N_r * p.N * math.exp(-rt.D * t))


def _make_rhs(p: MeanFieldParams):
    rt = p.rates
    gr = 0.0 if math.isinf(rt.tau_r) else 1.0 / rt.tau_r
    gs = 0.0 if math.isinf(rt.tau_s) else 1.0 / rt.tau_s
    gb = 1.0 / rt.tau_b
    g3 = rt.inv_tau3
    Nr, Ns, N = p.N_r, p.N_s, p.N
    br, bs, bd = Nr * (Nr + 2) / 4, Ns * (Ns + 2) / 4, N * (N + 2) / 4
    qr, qs, qd = Nr * Nr / 4, Ns * Ns / 4, N * N / 4

    def rhs(t, y):
        r, s, d, f = y
        pr, ps, pd = qr - r * r, qs - s * s, qd - d * d
        return np.array([
            -gr * (br - r * r + r) - 0.5 * g3 * f,
            -gs * (bs - s * s + s) - 0.5 * g3 * f,
            -gb * (bd - d * d + d) - g3 * f,
            ((s - 1) * gs + (r - 1) * gr + (d - 1) * gb) * f
            + g3 * (2 * d * ps * pr + r * ps * pd + s * pr * pd + drive(t, p)),
        ])

    return rhs


def meanfield_rhs(state, t: float, p: MeanFieldParams):
    """Time derivative of (r_z, s_z, d_z, f).

    Accepts a MeanFieldState (returns one) or an array in `MF_COLUMNS` order.
    Raises NonFiniteError if the derivative overflows.
    """
    y = state.as_array() if isinstance(state, MeanFieldState) else np.asarray(state, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        dy = _make_rhs(p)(t, y)
    if not np.all(np.isfinite(dy)):
        raise NonFiniteError(f"mean-field derivative not finite at t={t}, state={y}: {dy}")
    return MeanFieldState.from_array(dy) if isinstance(state, MeanFieldState) else dy


def integrate_meanfield(p: MeanFieldParams, t_end: float, tol: float = 1e-8,
                        samples: Optional[int] = None, t_eval=None,
                        initial: Optional[MeanFieldState] = None) -> Trajectory:
    """Integrate from full inversion with f(0) = 0 (or from ``initial``).

    ``tol`` is the relative local error tolerance; the absolute tolerance is
    ``tol`` itself (inversions are O(1) to O(N)).  Output is on ``t_eval``,
    on ``samples`` uniform points, or at the accepted steps.  The emission
    rate -d(d_z)/dt is attached as ``derived["emission_rate"]``.
    """
    if not t_end > 0:
        raise InvalidParameterError(f"t_end must be > 0, got {t_end!r}")
    if not 0 < tol <= 1e-3:
        raise InvalidParameterError(f"tol must lie in (0, 1e-3], got {tol!r}")
    if t_eval is None and samples is not None:
        if samples < 2:
            raise InvalidParameterError("samples must be >= 2")
        t_eval = np.linspace(0.0, t_end, samples)
    y0 = (initial or p.fully_inverted()).as_array()
    rhs = _make_rhs(p)
    with np.errstate(over="ignore", invalid="ignore"):
        sol = ode_solve(rhs, y0, (0.0, t_end), IntegratorConfig(rel_tol=tol, abs_tol=tol),
                        t_eval=t_eval)
    if t_eval is not None:
        times, values = sol.t_eval, sol.y_eval
    else:
        times, values = sol.t, sol.y
    traj = Trajectory(times=times, values=values, columns=MF_COLUMNS, stats=sol.stats,
                      rhs=rhs, state_type=MeanFieldState)
    traj.derived["emission_rate"] = _rate_series(traj)
    return traj


@dataclass(frozen=True)
class EmissionPeak:
    t_peak: float
    value: float
    index: int


def _inversion_column(traj: Trajectory) -> int:
    for name in ("d_z", "n_d"):
        if name in traj.columns:
            return traj.columns.index(name)
    raise DegenerateTrajectoryError("trajectory has no D inversion column")


def _rate_series(traj: Trajectory) -> np.ndarray:
    k = _inversion_column(traj)
    return np.array([-traj.rhs(t, y)[k] for t, y in zip(traj.times, traj.values)])


def _refine_peak(t: np.ndarray, v: np.ndarray, i: int):
    if i == 0 or i == len(t) - 1:
        return float(t[i]), float(v[i])
    t0, t1, t2 = t[i - 1], t[i], t[i + 1]
    v0, v1, v2 = v[i - 1], v[i], v[i + 1]
    # parabola through three points, centred on t1
    h0, h2 = t0 - t1, t2 - t1
    den = h0 * h2 * (h0 - h2)
    a = (h2 * (v0 - v1) - h0 * (v2 - v1)) / den
    b = (h0 * h0 * (v2 - v1) - h2 * h2 * (v0 - v1)) / den
    if a >= 0:
        return float(t1), float(v1)
    dt = -b / (2 * a)
    if not h0 <= dt <= h2:
        return float(t1), float(v1)
    return float(t1 + dt), float(v1 + b * dt + a * dt * dt)


def emission_rate(traj: Trajectory):
    """Bi-photon emission rate -d(D_z)/dt and its peak.

    The rate is evaluated from the vector field at each sample, not by
    differencing.  The largest sample is refined by a parabola through its
    neighbours.  Returns ``(rates, EmissionPeak)``.
    """
    if len(traj) < 3:
        raise DegenerateTrajectoryError(f"need >= 3 samples, got {len(traj)}")
    if traj.rhs is None:
        raise DegenerateTrajectoryError("trajectory carries no vector field")
    rates = _rate_series(traj)
    if not np.all(np.isfinite(rates)):
        raise DegenerateTrajectoryError("emission rate is not finite along the trajectory")
    i = int(np.argmax(rates))
    t_peak, value = _refine_peak(traj.times, rates, i)
    return rates, EmissionPeak(t_peak=t_peak, value=value, index=i)


def sign_changes(values: np.ndarray) -> int:
    """Number of sign changes in a series, ignoring exact zeros."""
    signs = np.sign(values)
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def bound_excess(traj: Trajectory, p: MeanFieldParams) -> float:
    """Largest overshoot of |j_z| beyond N_j / 2 over all samples."""
    excess = [np.max(np.abs(traj.column(name))) - n / 2
              for name, n in (("r_z", p.N_r), ("s_z", p.N_s), ("d_z", p.N))]
    return float(max(excess))


@dataclass(frozen=True)
class SweepRow:
    coupling: float
    peak_rate: float
    peak_time: float
    final_dz: float
    df_sign_changes: int
    max_bound_excess: float
    n_steps: int
    ok: bool = True
    error: str = ""


def _sweep_row(args) -> SweepRow:
    p, coupling, t_end, tol = args
    try:
        pk = p.with_coupling(coupling)
        traj = integrate_meanfield(pk, t_end, tol)
        _, peak = emission_rate(traj)
        df = np.array([traj.rhs(t, y)[3] for t, y in zip(traj.times, traj.values)])
        return SweepRow(coupling=coupling, peak_rate=peak.value, peak_time=peak.t_peak,
                        final_dz=float(traj.column("d_z")[-1]),
                        df_sign_changes=sign_changes(df),
                        max_bound_excess=bound_excess(traj, pk),
                        n_steps=traj.stats.get("n_accepted", len(traj) - 1))
    except BiphotonError as exc:
        nan = float("nan")
        return SweepRow(coupling=coupling, peak_rate=nan, peak_time=nan, final_dz=nan,
                        df_sign_changes=0, max_bound_excess=nan, n_steps=0, ok=False,
                        error=f"{type(exc).__name__}: {exc}")


def coupling_sweep(p: MeanFieldParams, grid: Sequence[float], t_end: float,
                   tol: float = 1e-8, workers: int = 1) -> list:
    """Run the mean-field model once per coupling value tau_b / tau3.

    Rows come back in grid order whatever the completion order; a failed
    integration yields a row with ``ok=False`` instead of aborting the sweep.
    """
    grid = [float(g) for g in grid]
    if any(not (math.isfinite(g) and g >= 0) for g in grid):
        raise InvalidParameterError("coupling values must be finite and >= 0")
    jobs = [(p, g, t_end, tol) for g in grid]
    if workers <= 1 or len(jobs) <= 1:
        return [_sweep_row(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_sweep_row, jobs))
