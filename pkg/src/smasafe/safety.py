"""Saturating temperature supervisor.

The supervisor computes, from the current temperatures, the largest duty
cycle ``u_max`` that keeps every wire at or below ``t_max`` on the next step,
and then clips an arbitrary pose controller's request to it channel by
channel.  Because the thermal system is monotone, lowering an input can only
lower the next temperature, so the clipped loop inherits the supervisor's
invariance of ``{x <= x_max}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .thermal import BlockLinearSystem, as_augmented, augment, step_block


class UnsafeModelError(RuntimeError):
    """The invariance certificate failed for a model the caller wants to run."""


@dataclass(frozen=True)
class SafetyConfig:
    """Temperature ceiling and margin fraction.

    ``t_max`` is a scalar or one value per wire (stored as a tuple).
    """

    t_max: float | tuple[float, ...]
    gamma: float = 0.2

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and 0.0 < self.gamma < 1.0):
            raise ValueError(f"gamma must lie in (0,1), got {self.gamma}")
        t_max = np.array(self.t_max, dtype=float)
        if t_max.ndim > 1 or not np.all(np.isfinite(t_max)):
            raise ValueError(f"t_max must be a finite scalar or 1-D array, got {self.t_max!r}")
        object.__setattr__(self, "t_max", float(t_max) if t_max.ndim == 0 else tuple(t_max.tolist()))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def x_max(self) -> np.ndarray:
        """Augmented bound ``[t_max, 1]``, shape ``(2,)`` or ``(m, 2)``."""
        return augment(self.t_max)

    def validate_for(self, sys: BlockLinearSystem) -> "SafetyConfig":
        t_max = np.asarray(self.t_max)
        if t_max.ndim == 1 and t_max.shape[0] != sys.m:
            raise ValueError(f"t_max has {t_max.shape[0]} entries for a {sys.m}-wire system")
        stable = (sys.a1 > 0.0) & (sys.a1 < 1.0)
        ambient = np.where(stable, sys.ambient, -np.inf)
        bad = np.broadcast_to(t_max, ambient.shape) <= ambient
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise ValueError(
                f"t_max must exceed the ambient equilibrium of every wire; "
                f"wire {idx[-1]} has ambient {ambient[tuple(idx)]:.6g} >= t_max"
            )
        return self


@dataclass(frozen=True)
class InvarianceCertificate:
    holds: bool
    witness: tuple[int, int, int] | None = None

    def to_dict(self) -> dict:
        return {"holds": self.holds, "witness": list(self.witness) if self.witness else None}


def safety_error(x, cfg: SafetyConfig) -> np.ndarray:
    """Per-wire augmented error ``x - x_max``; the second slot is always 0."""
    return as_augmented(x) - cfg.x_max


def adjusted_setpoint(sys: BlockLinearSystem, cfg: SafetyConfig) -> np.ndarray:
    """Setpoint ``(1/g)(I - (1-g)A) x_max`` that makes ``g*u_star`` settle at ``x_max``."""
    g = cfg.gamma
    t_max = np.broadcast_to(cfg.t_max, sys.a1.shape)
    temp = (t_max - (1.0 - g) * (sys.a1 * t_max + sys.a3)) / g
    # second row of A is [0, 1], so (1/g)(1 - (1-g)) is exactly 1
    return augment(temp)


def u_star(sys: BlockLinearSystem, x, x_set) -> np.ndarray:
    """One-step minimum-energy input ``B^T (B B^T)^+ (x_set - A x)`` per block.

    With ``B = [a2, 0]`` the pseudoinverse of ``B B^T`` is ``1/a2**2`` in its
    top-left entry, so only the temperature row of the displacement matters.
    """
    if np.any(sys.a2 == 0.0):
        raise ValueError("a2 = 0: temperature channel is not controllable")
    x = as_augmented(x, sys.m)
    x_set = as_augmented(x_set)
    Ax_temp = sys.a1 * x[..., 0] + sys.a3 * x[..., 1]
    return (x_set[..., 0] - Ax_temp) / sys.a2


def u_max(sys: BlockLinearSystem, x, cfg: SafetyConfig) -> np.ndarray:
    """Largest admissible duty cycle per wire; may exceed 1 or be negative."""
    return cfg.gamma * u_star(sys, x, adjusted_setpoint(sys, cfg))


def check_invariance(sys: BlockLinearSystem, cfg: SafetyConfig) -> InvarianceCertificate:
    """Certify that ``{e <= 0}`` is invariant under the closed-loop error map.

    Under the bare bound the error evolves as ``(1-gamma) A e``, a positive
    multiple of ``A e``, so the check reduces to the sign pattern of
    ``gamma*A``.  A linear map sends the nonpositive orthant into itself iff
    its matrix is elementwise nonnegative; the first negative entry is
    returned as witness.
    """
    if sys.a1.ndim != 1:
        raise ValueError("check_invariance expects an unbatched system")
    gA = cfg.gamma * sys.A
    neg = np.argwhere(gA < 0.0)
    if len(neg):
        return InvarianceCertificate(False, tuple(int(i) for i in neg[0]))
    return InvarianceCertificate(True, None)


def compose(v, u_max_vec) -> np.ndarray:
    """Elementwise ``min(v, u_max)`` clipped into the actuator range [0, 1]."""
    v = np.asarray(v, dtype=float)
    if not np.all((v >= 0.0) & (v <= 1.0)):
        raise ValueError(f"pose controller output must lie in [0,1], got {v}")
    return np.clip(np.minimum(v, u_max_vec), 0.0, 1.0)


def supervisor_active(v, u_max_vec) -> np.ndarray:
    """Channels where the request exceeds the safe bound (the clipping branch)."""
    return np.asarray(v) > np.asarray(u_max_vec)


def supervise_step(sys: BlockLinearSystem, x, v, cfg: SafetyConfig):
    """Filter ``v`` through the supervisor and advance the thermal state.

    Returns ``(u_hat, x_next)``.
    """
    u_hat = compose(v, u_max(sys, x, cfg))
    return u_hat, step_block(sys, x, u_hat)


class TemperatureSupervisor(BaseEstimator):
    """Estimator-style wrapper around the supervisor.

    ``fit`` binds a thermal model, validates the ceiling against it and
    computes the invariance certificate; ``transform`` maps augmented states
    to ``u_max`` and ``filter`` applies the composition.

    Parameters
    ----------
    t_max : float or array-like
        Temperature ceiling in °C, scalar or one per wire.
    gamma : float
        Margin fraction in (0, 1).
    require_invariant : bool
        Raise :class:`UnsafeModelError` from ``fit`` if the certificate fails.
    """

    def __init__(self, t_max=80.0, gamma=0.2, require_invariant=True):
        self.t_max = t_max
        self.gamma = gamma
        self.require_invariant = require_invariant

    def fit(self, system: BlockLinearSystem, y=None):
        cfg = SafetyConfig(self.t_max, self.gamma).validate_for(system)
        cert = check_invariance(system, cfg)
        if self.require_invariant and not cert.holds:
            raise UnsafeModelError(f"invariance certificate failed at {cert.witness}")
        self.config_ = cfg
        self.system_ = system
        self.certificate_ = cert
        self.x_set_ = adjusted_setpoint(system, cfg)
        return self

    def transform(self, x):
        check_is_fitted(self, "config_")
        return u_max(self.system_, x, self.config_)

    def filter(self, v, x):
        return compose(v, self.transform(x))

    def step(self, x, v):
        check_is_fitted(self, "config_")
        return supervise_step(self.system_, x, v, self.config_)
