"""SMA thermal dynamics.

Each wire follows a scalar affine update ``T' = a1*T + a2*u + a3``.  Augmenting
the state with a constant slot, ``x = [T, 1]``, turns it into the linear system
``x' = A x + B u`` with ``A = [[a1, a3], [0, 1]]`` and ``B = [a2, 0]``.  Stacking
``m`` wires gives a block-diagonal system, stored here as three coefficient
arrays rather than dense matrices.

Augmented states are numpy arrays of shape ``(..., m, 2)``; leading axes batch
independent systems.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

TRACE_HEADER = ("step", "temp_c", "duty")


class CalibrationError(ValueError):
    """Least-squares calibration produced no usable model."""


class TraceFormatError(ValueError):
    """A calibration trace file could not be parsed."""


@dataclass(frozen=True)
class PhysicalThermalParams:
    """Joule-heating constants for one wire.

    ``rho`` and ``J`` are lumped so that heating power is ``rho * J**2 * u``.
    """

    h_c: float
    A_c: float
    C_v: float
    rho: float
    J: float
    T_0: float
    dt: float

    def __post_init__(self):
        for name in ("h_c", "A_c", "C_v", "rho", "J", "dt"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
        if not math.isfinite(self.T_0):
            raise ValueError(f"T_0 must be finite, got {self.T_0!r}")

    @property
    def cooling_rate(self) -> float:
        """Convective decay rate ``h_c*A_c/C_v`` in 1/s."""
        return self.h_c * self.A_c / self.C_v


@dataclass(frozen=True)
class LumpedThermalParams:
    """Affine coefficients ``(a1, a2, a3)`` of one wire.

    Construction only requires finite values so that deliberately unsafe
    models can be represented and rejected by the invariance check.  Use
    :meth:`check_physical` to enforce the passive-cooling invariants.
    """

    a1: float
    a2: float
    a3: float

    def __post_init__(self):
        for name in ("a1", "a2", "a3"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
            object.__setattr__(self, name, float(value))

    @property
    def ambient(self) -> float:
        """Equilibrium temperature with zero input, ``a3 / (1 - a1)``."""
        return self.a3 / (1.0 - self.a1)

    def equilibrium(self, u: float) -> float:
        return (self.a2 * u + self.a3) / (1.0 - self.a1)

    def check_physical(self) -> "LumpedThermalParams":
        if not 0.0 < self.a1 < 1.0:
            raise ValueError(f"a1 must lie in (0,1), got {self.a1}")
        if not self.a2 > 0.0:
            raise ValueError(f"a2 must be > 0, got {self.a2}")
        if not self.a3 >= 0.0:
            raise ValueError(f"a3 must be >= 0, got {self.a3}")
        return self

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.a1, self.a2, self.a3)


@dataclass(frozen=True)
class AugmentedState:
    """One wire's augmented state ``[temp, 1]``."""

    temp: float
    one: float = 1.0

    def __post_init__(self):
        if self.one != 1.0:
            raise ValueError(f"augmented slot must be exactly 1.0, got {self.one!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.temp, self.one])


def lump(phys: PhysicalThermalParams) -> LumpedThermalParams:
    """Collapse physical constants into the forward-Euler affine coefficients."""
    decay = phys.cooling_rate * phys.dt
    a1 = 1.0 - decay
    if not 0.0 < a1 < 1.0:
        raise ValueError(
            f"unstable discretization: a1 = 1 - h_c*A_c/C_v*dt = {a1} is outside (0,1); reduce dt"
        )
    a2 = phys.dt / phys.C_v * phys.rho * phys.J**2
    a3 = decay * phys.T_0
    return LumpedThermalParams(a1, a2, a3)


def _check_duty(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if not np.all((u >= 0.0) & (u <= 1.0)):
        raise ValueError(f"duty cycle must lie in [0,1], got {u}")
    return u


def step_temperature(p: LumpedThermalParams, T, u):
    """One affine step ``a1*T + a2*u + a3``; ``u`` outside [0,1] is a caller bug."""
    u = _check_duty(u)
    out = p.a1 * np.asarray(T, dtype=float) + p.a2 * u + p.a3
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True, eq=False)
class BlockLinearSystem:
    """Block-diagonal augmented system over ``m`` wires.

    The coefficient arrays share a shape ``(..., m)``; extra leading axes hold
    a batch of independent systems.
    """

    a1: np.ndarray
    a2: np.ndarray
    a3: np.ndarray

    def __post_init__(self):
        arrays = [np.array(getattr(self, n), dtype=float) for n in ("a1", "a2", "a3")]
        shapes = {a.shape for a in arrays}
        if len(shapes) != 1:
            raise ValueError(f"coefficient arrays must share a shape, got {sorted(shapes)}")
        shape = shapes.pop()
        if len(shape) == 0 or shape[-1] < 1:
            raise ValueError("system needs at least one block")
        for name, arr in zip(("a1", "a2", "a3"), arrays):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} must be finite")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_params(cls, params: Sequence[LumpedThermalParams]) -> "BlockLinearSystem":
        return build_block_system(params)

    @property
    def m(self) -> int:
        return self.a1.shape[-1]

    @property
    def A(self) -> np.ndarray:
        """Per-block state matrices, shape ``(..., m, 2, 2)``."""
        A = np.zeros(self.a1.shape + (2, 2))
        A[..., 0, 0] = self.a1
        A[..., 0, 1] = self.a3
        A[..., 1, 1] = 1.0
        return A

    @property
    def B(self) -> np.ndarray:
        """Per-block input vectors, shape ``(..., m, 2)``."""
        B = np.zeros(self.a1.shape + (2,))
        B[..., 0] = self.a2
        return B

    @property
    def blocks(self) -> list[tuple[np.ndarray, np.ndarray]]:
        if self.a1.ndim != 1:
            raise ValueError("blocks is only defined for an unbatched system")
        return list(zip(self.A, self.B))

    @property
    def params(self) -> list[LumpedThermalParams]:
        if self.a1.ndim != 1:
            raise ValueError("params is only defined for an unbatched system")
        return [LumpedThermalParams(*p) for p in zip(self.a1, self.a2, self.a3)]

    @property
    def ambient(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.a3 / (1.0 - self.a1)


def build_block_system(params: Sequence[LumpedThermalParams]) -> BlockLinearSystem:
    params = list(params)
    if not params:
        raise ValueError("need at least one LumpedThermalParams")
    a1, a2, a3 = (np.array(c) for c in zip(*(p.as_tuple() for p in params)))
    return BlockLinearSystem(a1, a2, a3)


def augment(temps) -> np.ndarray:
    """Stack temperatures ``(..., m)`` into augmented states ``(..., m, 2)``."""
    temps = np.asarray(temps, dtype=float)
    return np.stack([temps, np.ones_like(temps)], axis=-1)


def as_augmented(x, m: int | None = None) -> np.ndarray:
    """Coerce an array or a sequence of :class:`AugmentedState` to ``(..., m, 2)``."""
    if isinstance(x, (list, tuple)) and x and isinstance(x[0], AugmentedState):
        x = np.array([s.as_array() for s in x])
    x = np.asarray(x, dtype=float)
    if x.ndim < 2 or x.shape[-1] != 2:
        raise ValueError(f"augmented state must have shape (..., m, 2), got {x.shape}")
    if m is not None and x.shape[-2] != m:
        raise ValueError(f"expected {m} augmented states, got {x.shape[-2]}")
    return x


def to_states(x) -> list[AugmentedState]:
    x = as_augmented(x)
    if x.ndim != 2:
        raise ValueError("to_states expects a single (m, 2) state")
    return [AugmentedState(float(T), float(one)) for T, one in x]


def step_block(sys: BlockLinearSystem, x, u) -> np.ndarray:
    """Advance every block one step: ``x_i' = A_i x_i + B_i u_i``."""
    x = as_augmented(x, sys.m)
    u = _check_duty(u)
    if u.shape[-1:] != (sys.m,):
        raise ValueError(f"input must have {sys.m} channels, got shape {u.shape}")
    temp = sys.a1 * x[..., 0] + sys.a3 * x[..., 1] + sys.a2 * u
    return np.stack([temp, x[..., 1]], axis=-1)


def ambient_state(sys: BlockLinearSystem) -> np.ndarray:
    return augment(sys.ambient)


class LumpedThermalRegressor(RegressorMixin, BaseEstimator):
    """Ordinary least-squares fit of ``T(k+1) = a1*T(k) + a2*u(k) + a3``.

    ``X`` has columns ``[T(k), u(k)]`` and ``y`` is ``T(k+1)``.  Use
    :meth:`fit_trace` to build the one-step regression from a single trace.

    Parameters
    ----------
    validate : bool
        Raise :class:`CalibrationError` when the fit violates ``0 < a1 < 1``
        or ``a2 > 0`` instead of returning it.
    """

    def __init__(self, validate: bool = True):
        self.validate = validate

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float, y_numeric=True)
        if X.shape[1] != 2:
            raise ValueError(f"X must have columns [T, u], got {X.shape[1]} columns")
        regressors = np.column_stack([X, np.ones(len(X))])
        if len(X) < 3 or np.linalg.matrix_rank(regressors) < 3:
            raise CalibrationError(
                "rank-deficient regressor: the trace needs varying temperature and duty cycle"
            )
        coef, *_ = np.linalg.lstsq(regressors, y, rcond=None)
        a1, a2, a3 = (float(c) for c in coef)
        if self.validate:
            if not 0.0 < a1 < 1.0:
                raise CalibrationError(f"fitted a1 = {a1:.6g} is outside (0,1)")
            if not a2 > 0.0:
                raise CalibrationError(f"fitted a2 = {a2:.6g} is not positive")
        self.coef_ = np.array([a1, a2])
        self.intercept_ = a3
        self.params_ = LumpedThermalParams(a1, a2, a3)
        resid = y - regressors @ coef
        self.residual_rms_ = float(np.sqrt(np.mean(resid**2)))
        self.n_features_in_ = 2
        return self

    def fit_trace(self, temps, duties):
        temps = np.asarray(temps, dtype=float)
        duties = np.asarray(duties, dtype=float)
        if temps.shape != duties.shape or temps.ndim != 1:
            raise ValueError("temps and duties must be 1-D arrays of equal length")
        X = np.column_stack([temps[:-1], duties[:-1]])
        return self.fit(X, temps[1:])

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=float)
        return X @ self.coef_ + self.intercept_


def fit_lumped(trace) -> LumpedThermalParams:
    """Fit lumped coefficients from ``(T_k, u_k)`` samples."""
    trace = np.asarray(trace, dtype=float)
    if trace.ndim != 2 or trace.shape[1] != 2:
        raise ValueError(f"trace must be a sequence of (T, u) pairs, got shape {trace.shape}")
    return LumpedThermalRegressor().fit_trace(trace[:, 0], trace[:, 1]).params_


def prbs_duties(n: int, mean_hold: int = 20, rng: np.random.Generator | None = None) -> np.ndarray:
    """Binary 0/1 excitation with random hold times uniform on ``[1, 2*mean_hold)``.

    Long holds spread the temperature range, which keeps the offset ``a3``
    well separated from ``a1*T`` in the regression.
    """
    rng = np.random.default_rng() if rng is None else rng
    out = np.empty(n)
    k, level = 0, 0.0
    while k < n:
        hold = int(rng.integers(1, 2 * mean_hold))
        out[k:k + hold] = level
        k += hold
        level = 1.0 - level
    return out


def simulate_trace(p: LumpedThermalParams, T0: float, duties: Iterable[float],
                   noise: float = 0.0, rng: np.random.Generator | None = None) -> np.ndarray:
    """Synthetic ``(T, u)`` trace from a known model.

    ``noise`` adds Gaussian measurement noise (°C) to every recorded
    temperature; the underlying state is noiseless.
    """
    duties = _check_duty(list(duties))
    temps = np.empty(len(duties))
    T = float(T0)
    for k, u in enumerate(duties):
        temps[k] = T
        T = p.a1 * T + p.a2 * u + p.a3
    if noise:
        rng = np.random.default_rng() if rng is None else rng
        temps = temps + rng.normal(0.0, noise, size=temps.shape)
    return np.column_stack([temps, duties])


def read_trace_csv(path) -> np.ndarray:
    """Read a ``step,temp_c,duty`` calibration trace into an ``(n, 2)`` array."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != TRACE_HEADER:
            raise TraceFormatError(f"{path}:1: expected header {','.join(TRACE_HEADER)}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise TraceFormatError(f"{path}:{lineno}: expected 3 fields, got {len(row)}")
            try:
                _, temp, duty = int(row[0]), float(row[1]), float(row[2])
            except ValueError as exc:
                raise TraceFormatError(f"{path}:{lineno}: {exc}") from None
            if not (math.isfinite(temp) and 0.0 <= duty <= 1.0):
                raise TraceFormatError(f"{path}:{lineno}: temp must be finite and duty in [0,1]")
            rows.append((temp, duty))
    return np.array(rows, dtype=float).reshape(-1, 2)


def write_trace_csv(path, trace) -> None:
    trace = np.asarray(trace, dtype=float)
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_HEADER)
        for k, (temp, duty) in enumerate(trace):
            writer.writerow([k, repr(float(temp)), repr(float(duty))])
