"""Acceptance checks, one ``criterion(n)`` marker per numbered criterion.

The terminal summary prints one PASS/FAIL line per criterion together with
the measured quantities recorded here.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest

from biphoton import cli, kernels, lindyn, mfdyn
from biphoton.errors import PoleInDomainError
from biphoton.kernels import PairGeometry, TripletGeometry
from biphoton.params import PhysicalSystem, RateSet

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def reference_params(coupling):
    rates = RateSet.from_coupling(tau_r=1 / 6, tau_s=1 / 6, tau_b=1.0, coupling=coupling)
    return mfdyn.MeanFieldParams(50, 50, 50, rates, drive_enabled=True)


def dicke_exact(t, n, tau):
    a = (n + 1) / 2
    t0 = (tau / a) * math.atanh((n - 1) / (n + 1))
    return 0.5 - a * np.tanh(a * (np.asarray(t) - t0) / tau)


def unit_system(**overrides):
    base = dict(omega_r=1.0, omega_s=1.0, omega_0=1.0, omega_31=3.0, omega_32=1.0,
                d_r=1.0, d_s=1.0, d_23=1.0, d_31=1.0)
    base.update(overrides)
    return PhysicalSystem(**base)


# -- 1: linear closed form against the integrator -----------------------------

@pytest.mark.criterion(1)
def test_linear_oracle_equivalence(record_property):
    rng = np.random.default_rng(20240601)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        ratio_r, ratio_s = 10 ** rng.uniform(-1, 1, size=2)
        rates = RateSet.from_coupling(1 / ratio_r, 1 / ratio_s, 1.0, rng.uniform(0, 1))
        traj = lindyn.integrate_linear(rates, 10.0, tol=1e-9)
        exact = lindyn.closed_form_trajectory(traj.times, rates).values
        # error of the state vector relative to its size at each output time
        rel = np.max(np.abs(traj.values - exact), axis=1) / np.max(np.abs(exact), axis=1)
        worst = max(worst, float(rel.max()))
    elapsed = time.perf_counter() - start
    record_property("detail", f"max relative error {worst:.3g}, runtime {elapsed:.2f} s")
    assert worst <= 1e-6
    assert elapsed < 5.0


# -- 2: decoupled dynamics are exact ------------------------------------------

@pytest.mark.criterion(2)
def test_linear_decoupled_exponentials(record_property):
    rates = RateSet(tau_r=0.2, tau_s=3.0, tau_b=1.0)
    traj = lindyn.integrate_linear(rates, 10.0, tol=1e-9, samples=401)
    worst = 0.0
    for col, tau in (("n_r", 0.2), ("n_s", 3.0), ("n_d", 1.0)):
        worst = max(worst, float(np.max(np.abs(traj.column(col) - np.exp(-traj.times / tau)))))
    record_property("detail", f"max absolute error {worst:.3g}")
    assert worst <= 1e-8


@pytest.mark.criterion(2)
def test_meanfield_decoupled_matches_dicke(record_property):
    p = mfdyn.MeanFieldParams(50, 50, 50, RateSet(tau_r=1 / 6, tau_s=1 / 6, tau_b=1.0))
    traj = mfdyn.integrate_meanfield(p, 1.0, tol=1e-9, samples=2001)
    worst = 0.0
    for col, n, tau in (("r_z", 50, 1 / 6), ("s_z", 50, 1 / 6), ("d_z", 50, 1.0)):
        exact = dicke_exact(traj.times, n, tau)
        # relative to |j_z|, floored at one excitation where j_z passes through zero
        err = np.abs(traj.column(col) - exact) / np.maximum(np.abs(exact), 1.0)
        worst = max(worst, float(err.max()))
    record_property("detail", f"max relative error {worst:.3g}")
    assert worst <= 1e-6


# -- 3: point-sample limits of the kernels ------------------------------------

@pytest.mark.criterion(3)
def test_kernel_point_limits(record_property):
    start = time.perf_counter()
    worst = 0.0
    for mu in np.linspace(-1.0, 1.0, 9):
        g = PairGeometry(r=1e-3, cos_xi=mu)
        dev_single = abs(kernels.chi_single(1.0, g).real - 1.0)
        dev_kernel = abs(kernels.chi_kernel(1.0, g) - 2 / 3)
        worst = max(worst, dev_single, dev_kernel)
        assert dev_single <= 1e-5 and dev_kernel <= 1e-5
        r = 1e-3 * 2 * math.pi  # one thousandth of the wavelength at omega = 1
        for mu_s in (-1.0, 0.0, 0.4, 1.0):
            tg = TripletGeometry(r_mj=r, r_ml=r, r_jl=r, cos_xi_r=mu, cos_xi_s=mu_s)
            u = kernels.exchange_u(1.0, 1.0, tg).real
            v = kernels.exchange_v(1.0, 1.0, tg, mode="simplified").real
            worst = max(worst, abs(u - 1.0), abs(v - 1.0))
            assert abs(u - 1.0) <= 1e-4 and abs(v - 1.0) <= 1e-4
    elapsed = time.perf_counter() - start
    record_property("detail", f"max deviation {worst:.3g}, runtime {elapsed:.3f} s")
    assert elapsed < 1.0


# -- 4: Re chi_single = (3/2) chi_kernel --------------------------------------

@pytest.mark.criterion(4)
def test_single_photon_identity(record_property):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        omega = 10 ** rng.uniform(-1, 1)
        g = PairGeometry(r=10 ** rng.uniform(-2, 1), cos_xi=rng.uniform(-1, 1))
        lhs = kernels.chi_single(omega, g).real
        rhs = 1.5 * kernels.chi_kernel(omega, g)
        worst = max(worst, abs(lhs - rhs) / abs(rhs))
    record_property("detail", f"max relative deviation {worst:.3g}")
    assert worst <= 1e-10


# -- 5: two-photon quadrature -------------------------------------------------

@pytest.mark.criterion(5)
def test_f_quadrature_node_doubling(record_property):
    s = unit_system()
    worst = 0.0
    for q in (1e-3, 0.1, 0.8, 4.0):
        g = PairGeometry(r=q * s.wavelength_0, cos_xi=0.3)
        a = kernels.f_two_photon_quadrature(s, g, nodes=16)
        b = kernels.f_two_photon_quadrature(s, g, nodes=32)
        worst = max(worst, abs(a - b) / abs(b))
    record_property("detail", f"max relative change {worst:.3g}")
    assert worst < 1e-8


@pytest.mark.criterion(5)
def test_f_quadrature_point_reduction(record_property):
    s = unit_system()
    got = kernels.f_two_photon_quadrature(s, PairGeometry(r=1e-3 * s.wavelength_0))
    limit = kernels.f_two_photon_point_limit(s)
    rel = abs(got - limit) / abs(limit)
    record_property("detail", f"relative deviation {rel:.3g}")
    assert rel <= 1e-4


@pytest.mark.criterion(5)
@pytest.mark.parametrize("omega_31", [2.0, 1.5])
def test_f_quadrature_pole_in_domain(omega_31):
    with pytest.raises(PoleInDomainError):
        kernels.f_two_photon_quadrature(unit_system(omega_31=omega_31), PairGeometry(r=1.0))


# -- 6: mean-field structure at the reference parameters ----------------------

SWEEP_GRID = (0.0, 0.25, 0.5, 0.75, 1.0)


@pytest.mark.criterion(6)
def test_meanfield_initial_slopes():
    for k in SWEEP_GRID:
        p = reference_params(k)
        d = mfdyn.meanfield_rhs(p.fully_inverted(), 0.0, p)
        assert d.r_z == -300.0 and d.s_z == -300.0 and d.d_z == -50.0


@pytest.mark.criterion(6)
@pytest.mark.parametrize("coupling", SWEEP_GRID)
def test_meanfield_inversion_bounds(coupling, record_property):
    tol = 1e-8
    p = reference_params(coupling)
    traj = mfdyn.integrate_meanfield(p, 1.0, tol=tol)
    excess = mfdyn.bound_excess(traj, p)
    record_property("detail", f"max |j_z| excess over N/2: {excess:.3g}")
    assert excess <= 10 * tol * 50 / 2


@pytest.mark.criterion(6)
@pytest.mark.parametrize("coupling", SWEEP_GRID)
def test_meanfield_runtime(coupling, record_property):
    start = time.perf_counter()
    mfdyn.integrate_meanfield(reference_params(coupling), 1.0, tol=1e-8)
    elapsed = time.perf_counter() - start
    record_property("detail", f"{elapsed:.3f} s")
    assert elapsed < 2.0


# -- 7: coupling raises the peak emission rate --------------------------------

@pytest.mark.criterion(7)
def test_peak_rate_grows_with_coupling(record_property):
    rows = mfdyn.coupling_sweep(reference_params(0.0), SWEEP_GRID, 1.0, tol=1e-8)
    assert all(r.ok for r in rows)
    record_property("detail", "peak rates " + ", ".join(
        f"{r.coupling:g}: {r.peak_rate:.6g}" for r in rows))
    record_property("detail", "df/dt sign changes " + ", ".join(
        f"{r.coupling:g}: {r.df_sign_changes}" for r in rows))
    assert rows[-1].peak_rate > rows[0].peak_rate


# -- 8: determinism ------------------------------------------------------------

def _command(config: Path):
    name = config.stem
    if name.startswith("kernels_"):
        return ["kernels", "--op", name.split("_", 1)[1]]
    if name.startswith("sweep"):
        return ["sweep"]
    model = "linear" if name.startswith("linear") else "meanfield"
    return ["simulate", "--model", model]


@pytest.mark.criterion(8)
@pytest.mark.parametrize("config", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_repeated_runs_byte_identical(config, tmp_path):
    outputs = []
    for run in ("first", "second"):
        out = tmp_path / run
        assert cli.main(_command(config) + ["--config", str(config), "--out", str(out)]) == 0
        outputs.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    assert outputs[0].keys() == outputs[1].keys() and len(outputs[0]) == 2
    assert outputs[0] == outputs[1]
