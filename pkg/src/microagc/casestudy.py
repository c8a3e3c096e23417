"""Canonical two-microgrid study system and the pipelines that prepare a
detection-ready scenario (identify the prediction model, calibrate the
baseline and thresholds).

Grid 1: three IBRs (nodes 0-2) feeding two load nodes; grid 2: two IBRs
feeding one load node. Loads are resistive (25 / 20 / 33 ohm per phase)
converted to nominal three-phase powers at the nominal voltage. A tie branch
between load node 1 of grid 1 and the load node of grid 2 can network the two
grids.
"""

from __future__ import annotations

import numpy as np

from . import defaults
from .lqr import CostWeights
from .netmodel import (
    IbrParams,
    NetworkSpec,
    assemble_plant,
    build_sensitivity,
    solve_operating_point,
)
from .simcore import (
    DetectorSetup,
    GridSpec,
    LoadSignalSpec,
    Scenario,
    TieSpec,
    ZohStepper,
    measure_power,
    run_scenario,
)
from .sysid import ExcitationSpec, generate_excitation, select_order
from .watermark import WatermarkConfig, calibrate_baseline, calibrate_thresholds

LOAD_OHMS_GRID1 = (25.0, 20.0)
LOAD_OHMS_GRID2 = (33.0,)


def load_power(ohms: float, v_star: float = defaults.V_STAR) -> float:
    """Three-phase power of a per-phase resistive load at nominal voltage."""
    return 3.0 * v_star**2 / ohms


def make_ibrs(n: int, p_share: float, omega_c: float = defaults.OMEGA_C,
              m_p: float = defaults.M_P) -> tuple[IbrParams, ...]:
    return tuple(
        IbrParams(omega_c=omega_c, m_p=m_p, p_g_star=p_share) for _ in range(n)
    )


def grid1_spec(
    controller: str = "optimal-z",
    weights: CostWeights | None = None,
    load_signals=(),
    detector: DetectorSetup | None = None,
) -> GridSpec:
    """Three-IBR microgrid with loads 1 and 2; load node 1 is the tie point."""
    loads = [load_power(r) for r in LOAD_OHMS_GRID1]
    network = NetworkSpec.from_branches(
        n_ibr=3,
        n_load=2,
        branches=[
            (0, 3, defaults.FEEDER_ADMITTANCE),
            (1, 3, defaults.FEEDER_ADMITTANCE),
            (2, 4, defaults.FEEDER_ADMITTANCE),
            (3, 4, defaults.FEEDER_ADMITTANCE),
        ],
    )
    share = sum(loads) / 3.0
    p_inj = np.array([share, share, share, -loads[0], -loads[1]])
    return GridSpec(
        network=network,
        ibrs=make_ibrs(3, share),
        p_injections=p_inj,
        controller=controller,
        weights=weights,
        load_signals=tuple(load_signals),
        detector=detector,
    )


def grid2_spec(
    controller: str = "optimal-z",
    weights: CostWeights | None = None,
    load_signals=(),
    detector: DetectorSetup | None = None,
) -> GridSpec:
    """Two-IBR microgrid with load 3 at its single load node."""
    loads = [load_power(r) for r in LOAD_OHMS_GRID2]
    network = NetworkSpec.from_branches(
        n_ibr=2,
        n_load=1,
        branches=[
            (0, 2, defaults.FEEDER_ADMITTANCE),
            (1, 2, defaults.FEEDER_ADMITTANCE),
        ],
    )
    share = sum(loads) / 2.0
    p_inj = np.array([share, share, -loads[0]])
    return GridSpec(
        network=network,
        ibrs=make_ibrs(2, share),
        p_injections=p_inj,
        controller=controller,
        weights=weights,
        load_signals=tuple(load_signals),
        detector=detector,
    )


def default_tie() -> TieSpec:
    return TieSpec(node_a=4, node_b=2, y_mag=defaults.TIE_ADMITTANCE)


def pulse_load_signal(
    fraction: float = defaults.LOAD_PULSE_FRACTION,
    load_index: int = 0,
    period: float = defaults.LOAD_PULSE_PERIOD,
    width: float = defaults.LOAD_PULSE_WIDTH,
) -> LoadSignalSpec:
    """Periodic pulses on load 1, amplitude as a fraction of its nominal power."""
    return LoadSignalSpec(
        kind="periodic-pulse",
        amplitude=fraction * load_power(LOAD_OHMS_GRID1[0]),
        load_index=load_index,
        period=period,
        width=width,
    )


def build_plant(grid: GridSpec):
    """Operating point, sensitivity, and assembled plant for a grid spec."""
    op = solve_operating_point(grid.network, grid.p_injections)
    sens = build_sensitivity(grid.network, op)
    return assemble_plant(grid.ibrs, sens)


def simulate_open_loop(
    plant, u: np.ndarray, dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Drive the plant with a setpoint sequence held at dt, loads frozen.

    Returns (t, y) with y[k] the power deviation sampled before applying u[k];
    the hold makes the exact ZOH step sufficient with no substeps.
    """
    stepper = ZohStepper(plant, dt)
    zeros_l = np.zeros(plant.n_load)
    x = np.zeros(plant.n_states)
    y = np.empty((u.shape[0], plant.n_ibr))
    for k in range(u.shape[0]):
        y[k] = measure_power(plant, x, zeros_l)
        x = stepper.step(x, u[k], zeros_l)
    return np.arange(u.shape[0]) * dt, y


def identification_records(
    grid: GridSpec,
    spec: ExcitationSpec,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Open-loop excitation records (t, u, y) for the grid's plant.

    The staircase excitation drives the setpoints directly (secondary control
    replaced by the excitation); the power response is sampled at the same
    cadence with loads frozen.
    """
    plant = build_plant(grid)
    u = generate_excitation(spec, grid.network.n_ibr)
    t, y = simulate_open_loop(plant, u, spec.dt)
    return t, u, y


def trained_detector(
    grid: GridSpec,
    excitation: ExcitationSpec | None = None,
    watermark_std: float = defaults.WATERMARK_STD,
    window: int = defaults.DETECTOR_WINDOW,
    margin: float = defaults.THRESHOLD_MARGIN,
    calibration_signals=(),
    calibration_horizon: float = 10.0,
    seed: int = 0,
    candidates=defaults.ORDER_CANDIDATES,
):
    """Full detection pipeline: identify, calibrate baseline and thresholds.

    Returns (DetectorSetup, OrderReport). The calibration run uses the same
    controller and load signals the production scenario will run, with the
    watermark active and thresholds still open (margin applied afterwards).
    """
    n = grid.network.n_ibr
    excitation = excitation or ExcitationSpec(seed=seed + 17)
    t, u, y = identification_records(grid, excitation)
    report, model = select_order(u, y, candidates=candidates, dt=excitation.dt)

    wm_cfg = WatermarkConfig.isotropic(watermark_std, n, seed=seed + 29)
    open_setup = DetectorSetup(
        model=model,
        baseline=_zero_baseline(n, window),
        eps1=np.inf,
        eps2=np.inf,
        watermark=wm_cfg,
        window=window,
    )
    calib_grid = GridSpec(
        network=grid.network,
        ibrs=grid.ibrs,
        p_injections=grid.p_injections,
        controller=grid.controller,
        weights=grid.weights,
        load_signals=tuple(calibration_signals),
        detector=open_setup,
    )
    calib_sc = Scenario(grids=(calib_grid,), horizon=calibration_horizon,
                        seed=seed + 43)
    ts = run_scenario(calib_sc)
    received = np.column_stack([ts[f"mg1_pg_rx_{i + 1}"] for i in range(n)])
    commands = np.column_stack([ts[f"mg1_dws_{i + 1}"] for i in range(n)])
    marks = np.column_stack([ts[f"mg1_wm_{i + 1}"] for i in range(n)])
    predicted = _replay_predictions(model, commands, marks)
    baseline = calibrate_baseline(received, predicted, w=window)

    xi1, xi2 = _replay_statistics(received, predicted, baseline, window)
    eps1, eps2 = calibrate_thresholds(xi1, xi2, margin=margin)
    setup = DetectorSetup(
        model=model, baseline=baseline, eps1=eps1, eps2=eps2,
        watermark=wm_cfg, window=window,
    )
    return setup, report


def _zero_baseline(n: int, w: int):
    from .watermark import BaselineStats

    return BaselineStats(mu_star=np.zeros(n), sigma_star=np.zeros((n, n)), w=w)


def _replay_predictions(model, commands: np.ndarray, marks: np.ndarray) -> np.ndarray:
    """Prediction sequence for logged commands + watermarks from a zero state."""
    from .watermark import predict_step

    k = commands.shape[0]
    out = np.zeros((k, model.n_outputs))
    x = np.zeros(model.order)
    out[0] = model.c_d @ x
    for i in range(1, k):
        x, p = predict_step(model, x, commands[i - 1], marks[i - 1])
        out[i] = p
    return out


def _replay_statistics(received, predicted, baseline, window):
    """Offline pass of the moving-window statistics over a nominal record."""
    nu = received - predicted
    k = nu.shape[0]
    xi1 = []
    xi2 = []
    for i in range(window, k + 1):
        win = nu[i - window : i]
        mu = win.mean(axis=0)
        centered = win - mu
        sig = centered.T @ centered / window
        xi1.append(np.linalg.norm(mu - baseline.mu_star))
        xi2.append(abs(np.trace(sig - baseline.sigma_star)))
    return np.array(xi1), np.array(xi2)

