"""Data-driven discrete prediction model: excitation design, deterministic
subspace identification, and prediction-error order selection.

The identification follows the deterministic subspace recipe: block-Hankel
matrices of inputs and outputs, projection of the output rows onto the
orthogonal complement of the input rows (LQ factorization), SVD truncation to
the requested order for the extended observability matrix, shift-invariance
least squares for the state matrix, and a final linear least-squares pass for
the input matrix and initial state. Only similarity-invariant quantities
(Markov parameters, prediction error) are contractual; raw matrix entries are
basis dependent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import defaults
from .netmodel import _readonly

log = logging.getLogger(__name__)

RANK_RTOL = 1e-10  # singular values below this (relative) carry no signal


class IdentificationError(RuntimeError):
    """Raised when a model cannot be identified from the given records."""


class InsufficientExcitationError(IdentificationError):
    """Input record is not persistently exciting for the requested order."""


class RankDeficiencyError(IdentificationError):
    """Projected data supports fewer modes than the requested order."""


@dataclass(frozen=True)
class ExcitationSpec:
    """Staircase excitation: i.i.d. uniform levels held for dt_prime each."""

    dt: float = defaults.CONTROL_PERIOD
    dt_prime: float = defaults.SYSID_DT_PRIME
    beta: float = defaults.SYSID_BETA
    k0: int = defaults.SYSID_K0
    seed: int = 0

    def __post_init__(self):
        if self.dt_prime <= self.dt:
            raise ValueError("pulse width dt_prime must exceed the sample time dt")
        if self.beta < 0.0:
            raise ValueError("amplitude bound beta must be non-negative")


@dataclass(frozen=True)
class DiscreteModel:
    """Identified (a_d, b_d, c_d) prediction model at sample time dt.

    order is the requested model order; effective_order is the number of modes
    actually supported by the data (the rest are zero-padded).
    """

    a_d: np.ndarray
    b_d: np.ndarray
    c_d: np.ndarray
    dt: float
    order: int
    effective_order: int = -1

    def __post_init__(self):
        object.__setattr__(self, "a_d", _readonly(self.a_d))
        object.__setattr__(self, "b_d", _readonly(self.b_d))
        object.__setattr__(self, "c_d", _readonly(self.c_d))
        if self.effective_order < 0:
            object.__setattr__(self, "effective_order", self.order)
        if self.order > 0:
            rho = float(np.max(np.abs(np.linalg.eigvals(self.a_d))))
            if rho >= 1.0 + 1e-9:
                log.warning("identified model is unstable (spectral radius %.6f)", rho)

    @property
    def n_inputs(self) -> int:
        return self.b_d.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.c_d.shape[0]


@dataclass(frozen=True)
class OrderReport:
    """Prediction error per candidate order and the selected minimizer.

    near_tie_tol is the absolute slack under which two eta values count as
    tied (numerical noise); ties resolve to the smallest order.
    """

    candidates: tuple[int, ...]
    eta: dict[int, float]
    d_star: int
    failures: dict[int, str] = field(default_factory=dict)
    init_state_samples: int = 0
    near_tie_tol: float = 0.0


def generate_excitation(spec: ExcitationSpec, n_channels: int) -> np.ndarray:
    """Sample the staircase excitation on all channels: (k0 + 1, n) array.

    Each channel holds an independent uniform [-beta, beta] level for
    dt_prime / dt consecutive samples.
    """
    rng = np.random.default_rng(spec.seed)
    per_pulse = int(round(spec.dt_prime / spec.dt))
    n_samples = spec.k0 + 1
    n_pulses = -(-n_samples // per_pulse)
    levels = rng.uniform(-spec.beta, spec.beta, size=(n_pulses, n_channels))
    return np.repeat(levels, per_pulse, axis=0)[:n_samples]


def _hankel(data: np.ndarray, n_rows: int, n_cols: int) -> np.ndarray:
    """Block Hankel with n_rows block rows; data is (samples, channels)."""
    ch = data.shape[1]
    out = np.empty((n_rows * ch, n_cols))
    for r in range(n_rows):
        out[r * ch : (r + 1) * ch] = data[r : r + n_cols].T
    return out


def _as_record(arr: np.ndarray) -> np.ndarray:
    """Coerce to (samples, channels); 1-D input becomes a single channel."""
    arr = np.asarray(arr, dtype=float)
    if arr.ndim == 1:
        return arr[:, None]
    return arr


def identify(
    u: np.ndarray,
    y: np.ndarray,
    d: int,
    dt: float = 0.0,
    n_block_rows: int | None = None,
    strict_rank: bool = False,
) -> DiscreteModel:
    """Fit an order-d discrete model to (samples, channels) records.

    Raises InsufficientExcitationError when the input Hankel is rank deficient
    and RankDeficiencyError when strict_rank is set and the projected output
    data supports fewer than d modes; otherwise the unsupported modes are
    zero-padded and effective_order records the supported count.
    """
    u = _as_record(u)
    y = _as_record(y)
    if u.shape[0] != y.shape[0]:
        raise IdentificationError(
            f"input and output records differ in length: {u.shape[0]} vs {y.shape[0]}"
        )
    n_samples, m = u.shape
    n_out = y.shape[1]
    if d < 1:
        raise IdentificationError(f"model order must be >= 1, got {d}")
    if n_samples < 10 * d * max(m, n_out):
        raise IdentificationError(
            f"record too short: {n_samples} samples for order {d} with "
            f"{m} inputs / {n_out} outputs"
        )
    i = n_block_rows or max(2 * d, 8)
    j = n_samples - i + 1

    u_h = _hankel(u, i, j)
    y_h = _hankel(y, i, j)

    if np.any(np.abs(u) > 0.0):
        u_sv = np.linalg.svd(u_h, compute_uv=False)
        if u_sv[-1] <= RANK_RTOL * u_sv[0]:
            raise InsufficientExcitationError(
                f"input Hankel rank {int(np.sum(u_sv > RANK_RTOL * u_sv[0]))} "
                f"< {u_h.shape[0]} rows; excitation not persistently exciting"
            )

    # LQ factorization of [U; Y]: the L22 block spans the output rows projected
    # onto the orthogonal complement of the input rows.
    stacked = np.vstack([u_h, y_h])
    l_fac = np.linalg.qr(stacked.T, mode="r").T
    l22 = l_fac[m * i :, m * i :]

    u_sv, s_sv, _ = np.linalg.svd(l22, full_matrices=False)
    s_max = s_sv[0] if s_sv.size else 0.0
    rank = int(np.sum(s_sv > RANK_RTOL * max(s_max, 1e-300)))
    d_eff = min(d, rank)
    if d_eff < d:
        if strict_rank:
            raise RankDeficiencyError(
                f"projected data supports {rank} modes, {d} requested"
            )
        log.debug("identify: order %d requested, data supports %d", d, rank)

    if d_eff == 0:
        a_d = np.zeros((d, d))
        b_d = np.zeros((d, m))
        c_d = np.zeros((n_out, d))
        return DiscreteModel(a_d, b_d, c_d, dt=dt, order=d, effective_order=0)

    gamma = u_sv[:, :d_eff] * np.sqrt(s_sv[:d_eff])
    a_core, *_ = np.linalg.lstsq(gamma[:-n_out], gamma[n_out:], rcond=None)
    c_core = gamma[:n_out]

    b_core, _ = _fit_input_matrix(a_core, c_core, u, y)

    a_d = np.zeros((d, d))
    b_d = np.zeros((d, m))
    c_d = np.zeros((n_out, d))
    a_d[:d_eff, :d_eff] = a_core
    b_d[:d_eff] = b_core
    c_d[:, :d_eff] = c_core
    return DiscreteModel(a_d, b_d, c_d, dt=dt, order=d, effective_order=d_eff)


def _fit_input_matrix(a, c, u, y) -> tuple[np.ndarray, np.ndarray]:
    """Least squares for B and x0 with A, C fixed (no feedthrough term).

    y[k] = C A^k x0 + sum_{tau<k} C A^(k-1-tau) B u[tau]; the regressor for
    vec(B) follows the recursion G[k+1] = G[k] (I kron A) + u[k]' kron C.
    """
    n = a.shape[0]
    n_out, _ = c.shape
    n_samples, m = u.shape
    phi = c.copy()                       # C A^k, advanced in the loop
    g = np.zeros((n_out, m * n))
    i_kron_a = np.kron(np.eye(m), a)
    rows_b = np.empty((n_samples, n_out, m * n))
    rows_x0 = np.empty((n_samples, n_out, n))
    for k in range(n_samples):
        rows_b[k] = g
        rows_x0[k] = phi
        g = g @ i_kron_a + np.kron(u[k][None, :], c)
        phi = phi @ a
    reg = np.concatenate(
        [rows_b.reshape(n_samples * n_out, m * n), rows_x0.reshape(n_samples * n_out, n)],
        axis=1,
    )
    sol, *_ = np.linalg.lstsq(reg, y.reshape(-1), rcond=None)
    b = sol[: m * n].reshape(m, n).T     # vec with input-major blocks
    x0 = sol[m * n :]
    return b, x0


def predict(model: DiscreteModel, x0: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Run the model recursion: y[k] = C x[k], x[k] = A x[k-1] + B u[k-1]."""
    u = _as_record(u)
    if u.shape[1] != model.n_inputs:
        raise ValueError(f"expected {model.n_inputs} input channels, got {u.shape[1]}")
    x = np.asarray(x0, dtype=float)
    if x.shape != (model.order,):
        raise ValueError(f"initial state must have {model.order} entries")
    n_samples = u.shape[0]
    y = np.empty((n_samples, model.n_outputs))
    y[0] = model.c_d @ x
    for k in range(1, n_samples):
        x = model.a_d @ x + model.b_d @ u[k - 1]
        y[k] = model.c_d @ x
    return y


def estimate_initial_state(
    model: DiscreteModel, u: np.ndarray, y: np.ndarray, n_samples: int
) -> np.ndarray:
    """Least-squares x0 from the first n_samples of the record."""
    u = _as_record(u)
    y = _as_record(y)
    n_use = min(n_samples, u.shape[0])
    forced = predict(model, np.zeros(model.order), u[:n_use])
    free = y[:n_use] - forced
    rows = np.empty((n_use, model.n_outputs, model.order))
    phi = model.c_d.copy()
    for k in range(n_use):
        rows[k] = phi
        phi = phi @ model.a_d
    x0, *_ = np.linalg.lstsq(rows.reshape(n_use * model.n_outputs, model.order),
                             free.reshape(-1), rcond=None)
    return x0


def prediction_error(model: DiscreteModel, x0: np.ndarray, u: np.ndarray,
                     y: np.ndarray) -> float:
    """Mean per-sample 2-norm prediction error over the record (W/sample)."""
    y = _as_record(y)
    y_hat = predict(model, x0, u)
    return float(np.mean(np.linalg.norm(y_hat - y, axis=1)))


def select_order(
    u: np.ndarray,
    y: np.ndarray,
    candidates=defaults.ORDER_CANDIDATES,
    dt: float = 0.0,
) -> tuple[OrderReport, DiscreteModel]:
    """Fit every candidate order, score by prediction error, keep the minimizer.

    The initial state for scoring is estimated from the first max(2d, 20)
    samples. Per-candidate identification failures are recorded; the selection
    fails only if every candidate does. Ties break toward the smallest order.
    """
    candidates = tuple(sorted(set(int(c) for c in candidates)))
    if not candidates:
        raise IdentificationError("candidate order set is empty")
    eta: dict[int, float] = {}
    failures: dict[int, str] = {}
    models: dict[int, DiscreteModel] = {}
    n_init = 0
    for d in candidates:
        try:
            model = identify(u, y, d, dt=dt)
            n_init = max(2 * d, 20)
            x0 = estimate_initial_state(model, u, y, n_init)
            eta[d] = prediction_error(model, x0, u, y)
            models[d] = model
        except IdentificationError as exc:
            failures[d] = str(exc)
    if not eta:
        raise IdentificationError(
            "all candidate orders failed: "
            + "; ".join(f"d={d}: {msg}" for d, msg in failures.items())
        )
    # scores within numerical noise of the minimum count as ties; prefer the
    # smallest order among them
    y_scale = float(np.mean(np.linalg.norm(_as_record(y), axis=1)))
    tol = 1e-9 * max(y_scale, 1.0)
    eta_min = min(eta.values())
    d_star = min(d for d, v in eta.items() if v <= eta_min + tol)
    report = OrderReport(
        candidates=candidates,
        eta=eta,
        d_star=d_star,
        failures=failures,
        init_state_samples=n_init,
        near_tie_tol=tol,
    )
    return report, models[d_star]


def save_model(model: DiscreteModel, path) -> None:
    """Persist a model as structured text with row-major decimal matrices."""
    lines = [
        f"order = {model.order}",
        f"effective_order = {model.effective_order}",
        f"dt = {model.dt!r}",
        f"n_inputs = {model.n_inputs}",
        f"n_outputs = {model.n_outputs}",
    ]
    for name, mat in (("a", model.a_d), ("b", model.b_d), ("c", model.c_d)):
        lines.append(f"[{name}]")
        for row in np.atleast_2d(mat):
            lines.append(" ".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path) -> DiscreteModel:
    """Read a model persisted by save_model."""
    header: dict[str, str] = {}
    blocks: dict[str, list[list[float]]] = {}
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                blocks[current] = []
            elif current is None:
                key, _, value = line.partition("=")
                header[key.strip()] = value.strip()
            else:
                blocks[current].append([float(v) for v in line.split()])
    order = int(header["order"])
    a = np.array(blocks["a"]).reshape(order, order)
    b = np.array(blocks["b"]).reshape(order, int(header["n_inputs"]))
    c = np.array(blocks["c"]).reshape(int(header["n_outputs"]), order)
    return DiscreteModel(
        a_d=a, b_d=b, c_d=c, dt=float(header["dt"]), order=order,
        effective_order=int(header.get("effective_order", order)),
    )


def save_records(path, t: np.ndarray, u: np.ndarray, y: np.ndarray) -> None:
    """Write an identification record as CSV: time, u1..uN, y1..yN."""
    u = np.atleast_2d(u)
    y = np.atleast_2d(y)
    header = (
        ["time"]
        + [f"u{i + 1}" for i in range(u.shape[1])]
        + [f"y{i + 1}" for i in range(y.shape[1])]
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for k in range(u.shape[0]):
            row = [t[k], *u[k], *y[k]]
            fh.write(",".join(f"{v:.9g}" for v in row) + "\n")


def load_records(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read a record written by save_records; raises with the bad line number."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        n_u = sum(1 for c in header if c.startswith("u"))
        n_y = sum(1 for c in header if c.startswith("y"))
        if header[0] != "time" or n_u == 0 or n_y == 0:
            raise IdentificationError(f"{path}: line 1: bad record header {header!r}")
        for lineno, raw in enumerate(fh, start=2):
            if not raw.strip():
                continue
            parts = raw.strip().split(",")
            if len(parts) != 1 + n_u + n_y:
                raise IdentificationError(
                    f"{path}: line {lineno}: expected {1 + n_u + n_y} fields, "
                    f"got {len(parts)}"
                )
            try:
                rows.append([float(v) for v in parts])
            except ValueError as exc:
                raise IdentificationError(f"{path}: line {lineno}: {exc}") from exc
    data = np.array(rows)
    return data[:, 0], data[:, 1 : 1 + n_u], data[:, 1 + n_u :]
