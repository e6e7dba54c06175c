"""Robust Kalman filtering: clipped corrections, calibration, benchmarks.

The classical Kalman filter is linear in the observations, so a single
outlier moves the state estimate arbitrarily far. This package implements
the robustified recursive least squares family: rLS.AO clips the
correction step (exogenous-outlier robustness), rLS.IO damps the
estimated observation error instead (tracks endogenous level shifts and
trends), and the hybrid rLS.IOAO runs both and switches with a short
delay. Clipping heights come from an efficiency-loss or a
neighborhood-radius criterion, with a least-favorable radius when the
radius is only known up to an interval; the one-step minimax construction
behind the AO filter (optimal reconstruction plus least-favorable
contamination) lives in :mod:`rlskf.saddle`.
"""

from .bench import BenchmarkConfig, MseReport, empirical_mse, run_benchmark
from .calibration import (
    ClippedMoments,
    StepGeometry,
    ao_geometry,
    calibrate_b_efficiency,
    calibrate_b_radius,
    calibrate_policies,
    clipped_moments,
    efficiency_loss,
    io_geometry,
    least_favorable_radius,
    steady_state_geometry,
)
from .errors import (
    DegenerateGeometry,
    DomainError,
    EmptyAfterExclusion,
    EnvelopeTooTight,
    Infeasible,
    NonConformal,
    NotSPD,
    OutOfHorizon,
    ParseError,
    RlskfError,
    SingularZ,
)
from .kalman import (
    FilterState,
    correct_classic,
    filter_run,
    init,
    predict,
    steady_state_predict,
)
from .model import ModelSpec, Trajectory, simulate_ideal, validate
from .numerics import RngStream, chi_square_quantile, gaussian_sample, solve_spd
from .robust import (
    ClippingPolicy,
    HybridConfig,
    HybridResult,
    HybridState,
    correct_rls_ao,
    correct_rls_io,
    huberize,
    hybrid_flag,
    hybrid_run,
    hybrid_step,
)
from .saddle import (
    LeastFavorableSample,
    SaddleReport,
    SoModel,
    d_value,
    f0_apply,
    rho_solve,
    saddle_check,
    sample_least_favorable,
)
from .scenario import (
    AoPatch,
    IoEvent,
    Scenario,
    SoRandom,
    contaminate,
    parse_scenario,
    reference_scenario,
)

__version__ = "0.1.0"
