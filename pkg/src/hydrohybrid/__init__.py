"""Hybrid position/force control of a hydraulic cylinder.

Nonlinear plant, augmented linear closed loops, pole-placement synthesis,
the switching controller, multiple-Lyapunov checks and scenario simulation.
"""

__version__ = "0.1.0"

from .controller import (
    ControllerConfig,
    ControllerState,
    ForceSegment,
    HysteresisConfig,
    PositionSegment,
    ReferenceSpec,
    ReturnRule,
    control_law,
    controller_step,
    dz_compensator,
    hysteresis_update,
    integrator_step,
    lpf_step,
    reference_value,
)
from .errors import (
    HydroHybridError,
    IntegrationError,
    NoCrossingError,
    NumericError,
    PressureLimitError,
    SingularityError,
    UncontrollableError,
    ValidationError,
)
from .linear_system import (
    DESIGN_OPERATING_POINTS,
    NOMINAL_GAINS_FORCE,
    NOMINAL_GAINS_POSITION,
    ClosedLoop,
    GainVector,
    OperatingPoint,
    build_closed_loop,
    open_loop_augmented,
    switched_system,
)
from .lyapunov import (
    LyapunovWeights,
    SwitchEvent,
    check_mode_sequence,
    lyapunov_value,
    search_weights,
    verify_decrease,
)
from .numerics import bandwidth_hz, eigenvalues, frequency_response, integrate_rk4, place_poles
from .plant import (
    FORCE,
    POSITION,
    DynamicLoad,
    FrictionModel,
    HardStop,
    PlantParams,
    PlantState,
    dead_zone,
    linearize_at,
    orifice_flow,
    plant_derivative,
)
from .simulation import (
    ErrorStats,
    NoiseConfig,
    ScenarioConfig,
    TrajectoryLog,
    export_log,
    load_log,
    repeat_runs,
    run_scenario,
    scenario_a,
    scenario_b,
)
from .synthesis import default_poles, synthesize_gains, verify_gains

