"""Dynamic-watermark detection of false data injection on power measurements.

A secret zero-mean Gaussian watermark rides on the setpoint commands. The
received measurements are compared against a model prediction driven by the
same commands and watermark; the innovation's moving-window mean and
covariance are tested against an attack-free baseline:

    xi1 = || mu_hat - mu_star ||_2        (mean shift)
    xi2 = | tr(Sigma_hat - Sigma_star) |  (variance shift)

Either statistic at or above its threshold raises the attack flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .netmodel import _readonly
from .sysid import DiscreteModel


@dataclass(frozen=True)
class WatermarkConfig:
    """Covariance and seed of the secret watermark sequence."""

    sigma: np.ndarray
    seed: int = 0

    def __post_init__(self):
        sigma = _readonly(np.atleast_2d(self.sigma))
        if sigma.shape[0] != sigma.shape[1]:
            raise ValueError("watermark covariance must be square")
        if not np.allclose(sigma, sigma.T):
            raise ValueError("watermark covariance must be symmetric")
        if sigma.size and np.min(np.linalg.eigvalsh(sigma)) < -1e-12 * max(
            1.0, float(np.max(np.abs(sigma)))
        ):
            raise ValueError("watermark covariance must be positive semidefinite")
        object.__setattr__(self, "sigma", sigma)

    @classmethod
    def isotropic(cls, std: float, n: int, seed: int = 0) -> "WatermarkConfig":
        return cls(sigma=(std**2) * np.eye(n), seed=seed)

    @property
    def n_channels(self) -> int:
        return self.sigma.shape[0]


class WatermarkSource:
    """Deterministic stream of watermark draws for one run (seeded)."""

    def __init__(self, cfg: WatermarkConfig):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed)
        # PSD coloring factor; eigen route covers singular covariances.
        try:
            self._factor = np.linalg.cholesky(cfg.sigma)
        except np.linalg.LinAlgError:
            w, v = np.linalg.eigh(cfg.sigma)
            self._factor = v @ np.diag(np.sqrt(np.clip(w, 0.0, None)))

    def draw(self) -> np.ndarray:
        return self._factor @ self._rng.standard_normal(self.cfg.n_channels)


def draw_watermark(source: WatermarkSource) -> np.ndarray:
    """Next watermark vector from the stream."""
    return source.draw()


def predict_step(
    model: DiscreteModel,
    x_hat: np.ndarray,
    d_omega_s: np.ndarray,
    e: np.ndarray,
    through_input: bool = True,
) -> tuple[np.ndarray, np.ndarray]:
    """One step of the watermarked prediction recursion.

    Default form drives the model with the watermarked command:
    x+ = A x + B (u + e). The state-additive variant (through_input=False,
    experimental) adds e onto the leading state coordinates instead.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    u = np.asarray(d_omega_s, dtype=float)
    e = np.asarray(e, dtype=float)
    if x_hat.shape != (model.order,):
        raise ValueError(f"prediction state must have {model.order} entries")
    if u.shape != (model.n_inputs,) or e.shape != (model.n_inputs,):
        raise ValueError(f"command and watermark must have {model.n_inputs} entries")
    if through_input:
        x_next = model.a_d @ x_hat + model.b_d @ (u + e)
    else:
        x_next = model.a_d @ x_hat + model.b_d @ u
        n_add = min(model.order, e.shape[0])
        x_next[:n_add] = x_next[:n_add] + e[:n_add]
    return x_next, model.c_d @ x_next


@dataclass(frozen=True)
class BaselineStats:
    """Attack-free innovation statistics over a window of length w."""

    mu_star: np.ndarray
    sigma_star: np.ndarray
    w: int

    def __post_init__(self):
        object.__setattr__(self, "mu_star", _readonly(self.mu_star))
        object.__setattr__(self, "sigma_star", _readonly(self.sigma_star))
        n = self.mu_star.shape[0]
        if self.sigma_star.shape != (n, n):
            raise ValueError("baseline covariance shape mismatch")
        if not np.allclose(self.sigma_star, self.sigma_star.T, atol=1e-9):
            raise ValueError("baseline covariance must be symmetric")
        scale = max(1.0, float(np.max(np.abs(self.sigma_star))))
        if n and float(np.min(np.linalg.eigvalsh(self.sigma_star))) < -1e-9 * scale:
            raise ValueError("baseline covariance must be positive semidefinite")


def calibrate_baseline(
    received: np.ndarray, predicted: np.ndarray, w: int = defaults.DETECTOR_WINDOW
) -> BaselineStats:
    """Mean and covariance of the innovations over the first w samples."""
    received = np.atleast_2d(np.asarray(received, dtype=float))
    predicted = np.atleast_2d(np.asarray(predicted, dtype=float))
    if received.shape != predicted.shape:
        raise ValueError("received and predicted records must align")
    if received.shape[0] < w:
        raise ValueError(f"need at least {w} samples, got {received.shape[0]}")
    nu = received[:w] - predicted[:w]
    mu = nu.mean(axis=0)
    centered = nu - mu
    sigma = centered.T @ centered / w
    return BaselineStats(mu_star=mu, sigma_star=sigma, w=w)


def calibrate_thresholds(
    xi1_series: np.ndarray,
    xi2_series: np.ndarray,
    margin: float = defaults.THRESHOLD_MARGIN,
    floor: float = defaults.THRESHOLD_FLOOR,
) -> tuple[float, float]:
    """Thresholds as margin times the nominal peak of each statistic.

    The floor keeps the strict inequality tests decidable when a perfect model
    yields identically zero statistics.
    """
    xi1 = np.asarray(xi1_series, dtype=float)
    xi2 = np.asarray(xi2_series, dtype=float)
    eps1 = max(margin * float(np.max(xi1, initial=0.0)), floor)
    eps2 = max(margin * float(np.max(xi2, initial=0.0)), floor)
    return eps1, eps2


@dataclass
class DetectorState:
    """Moving windows of received / predicted powers plus the running flag.

    Ring buffers hold exactly w entries once warmed up; mu_hat uses running
    sums while the covariance is recomputed over the window each step to avoid
    incremental drift.
    """

    w: int
    n: int
    x_hat: np.ndarray
    eps1: float
    eps2: float
    m_window: np.ndarray = field(init=False)
    m_hat_window: np.ndarray = field(init=False)
    _head: int = field(init=False, default=0)
    count: int = field(init=False, default=0)
    _sum_received: np.ndarray = field(init=False)
    _sum_predicted: np.ndarray = field(init=False)
    xi1: float = field(init=False, default=0.0)
    xi2: float = field(init=False, default=0.0)
    flag: bool = field(init=False, default=False)

    def __post_init__(self):
        self.x_hat = np.array(self.x_hat, dtype=float)
        self.m_window = np.zeros((self.w, self.n))
        self.m_hat_window = np.zeros((self.w, self.n))
        self._sum_received = np.zeros(self.n)
        self._sum_predicted = np.zeros(self.n)

    @property
    def warmed_up(self) -> bool:
        return self.count >= self.w

    def copy(self) -> "DetectorState":
        dup = DetectorState(w=self.w, n=self.n, x_hat=self.x_hat, eps1=self.eps1,
                            eps2=self.eps2)
        dup.m_window = self.m_window.copy()
        dup.m_hat_window = self.m_hat_window.copy()
        dup._head = self._head
        dup.count = self.count
        dup._sum_received = self._sum_received.copy()
        dup._sum_predicted = self._sum_predicted.copy()
        dup.xi1, dup.xi2, dup.flag = self.xi1, self.xi2, self.flag
        return dup

    def _push(self, received: np.ndarray, predicted: np.ndarray) -> None:
        self._sum_received += received - self.m_window[self._head]
        self._sum_predicted += predicted - self.m_hat_window[self._head]
        self.m_window[self._head] = received
        self.m_hat_window[self._head] = predicted
        self._head = (self._head + 1) % self.w
        self.count += 1


def dw_step(
    state: DetectorState,
    baseline: BaselineStats,
    model: DiscreteModel,
    received_p: np.ndarray,
    d_omega_s_prev: np.ndarray,
    e_prev: np.ndarray,
    through_input: bool = True,
) -> tuple[bool, DetectorState]:
    """One detector step: predict, slide windows, test, flag.

    The prediction advances with the command and watermark applied over the
    previous control interval; the received measurement is the current sample.
    Until the windows are warm the sample is only accumulated and the flag
    stays down.
    """
    received_p = np.asarray(received_p, dtype=float)
    x_next, p_hat = predict_step(
        model, state.x_hat, d_omega_s_prev, e_prev, through_input=through_input
    )
    state.x_hat = x_next
    state._push(received_p, p_hat)
    if not state.warmed_up:
        state.xi1 = 0.0
        state.xi2 = 0.0
        state.flag = False
        return False, state
    mu_hat = (state._sum_received - state._sum_predicted) / state.w
    nu = state.m_window - state.m_hat_window
    centered = nu - mu_hat
    sigma_hat = centered.T @ centered / state.w
    state.xi1 = float(np.linalg.norm(mu_hat - baseline.mu_star))
    state.xi2 = float(abs(np.trace(sigma_hat - baseline.sigma_star)))
    state.flag = (state.xi1 >= state.eps1) or (state.xi2 >= state.eps2)
    return state.flag, state
