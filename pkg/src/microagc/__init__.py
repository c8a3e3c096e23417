"""Frequency regulation and cyber resilience for systems of AC microgrids.

Subpackages by concern:

  netmodel   physical model, linearization, Kron reduction, plant assembly
  transform  left-null z coordinates and the running z integral
  lqr        z-space optimal design plus runtime control laws
  sysid      excitation design, subspace identification, order selection
  watermark  dynamic-watermark FDI detection
  simcore    deterministic scenario engine (plants, sensors, attacks, tie line)
  casestudy  canonical two-microgrid system and training pipelines
  cli        command-line front end
"""

__version__ = "0.1.0"

from .netmodel import (  # noqa: F401
    AngleSensitivity,
    IbrParams,
    IbrState,
    LinearPlant,
    ModelError,
    NetworkSpec,
    OperatingPoint,
    ReductionError,
    assemble_plant,
    build_sensitivity,
    kron_reduce,
    nonlinear_injection,
    solve_operating_point,
)
from .transform import (  # noqa: F401
    LeftNullTransform,
    ZAccumulator,
    make_transform,
    z_from_state,
    z_update,
)
from .lqr import (  # noqa: F401
    ControlDesignError,
    ControllerGain,
    CostWeights,
    ObserverState,
    control_decentralized,
    control_observer,
    control_optimal,
    control_pi_baseline,
    lqr_gain,
    solve_care,
)
from .sysid import (  # noqa: F401
    DiscreteModel,
    ExcitationSpec,
    IdentificationError,
    InsufficientExcitationError,
    OrderReport,
    RankDeficiencyError,
    generate_excitation,
    identify,
    predict,
    select_order,
)
from .watermark import (  # noqa: F401
    BaselineStats,
    DetectorState,
    WatermarkConfig,
    WatermarkSource,
    calibrate_baseline,
    calibrate_thresholds,
    draw_watermark,
    dw_step,
    predict_step,
)
from .simcore import (  # noqa: F401
    AttackSpec,
    DetectorSetup,
    Event,
    GridSpec,
    LoadSignalSpec,
    Scenario,
    ScenarioError,
    SimulationError,
    TieSpec,
    TimeSeries,
    ZohStepper,
    apply_attack,
    close_tie_line,
    integrate_step,
    load_signal,
    measure_frequency_lagged,
    measure_power,
    run_scenario,
    summarize,
)
