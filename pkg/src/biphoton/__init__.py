"""Collective two-photon decay of an inverted ensemble coupled to two
dipole-active ensembles.

Modules: `params` (decay times and rates), `kernels` (exchange integrals),
`lindyn` (solvable three-atom model), `mfdyn` (mean-field N-atom model),
`numerics` (ODE integration and quadrature) and `cli`.
"""

from .errors import (
    BiphotonError,
    ConfigError,
    DegenerateTrajectoryError,
    ForbiddenChannelError,
    GeometryDomainError,
    InvalidParameterError,
    MaxStepsError,
    NearFieldDomainError,
    NonConvergenceError,
    NonFiniteError,
    PoleInDomainError,
    SingularDenominatorError,
    StepUnderflowError,
)
from .params import (
    CollectiveRates,
    PhysicalSystem,
    RateSet,
    ResonanceCheck,
    collective_rates,
    q_amplitude,
    rates_from_system,
    tau_single,
    tau_three,
    tau_two_photon,
    validate_resonance,
)
from .kernels import (
    PairGeometry,
    TripletGeometry,
    AngularOperator,
    chi_kernel,
    chi_single,
    chi_two_photon_compact,
    exchange_u,
    exchange_v,
    f_two_photon_point_limit,
    f_two_photon_quadrature,
)
from .lindyn import (
    LinearState,
    Trajectory,
    integrate_linear,
    closed_form_trajectory,
    linear_closed_form,
    linear_rhs,
)
from .mfdyn import (
    EmissionPeak,
    MeanFieldParams,
    MeanFieldState,
    SweepRow,
    coupling_sweep,
    emission_rate,
    integrate_meanfield,
    meanfield_rhs,
)

__version__ = "0.1.0"
