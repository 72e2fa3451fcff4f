"""Per-limb PI pose control with anti-windup and antagonistic channel mapping."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator


@dataclass(frozen=True)
class PoseState:
    """Limb bending angles in radians."""

    theta: tuple[float, ...]

    def __post_init__(self):
        theta = tuple(float(t) for t in np.ravel(self.theta))
        if not theta:
            raise ValueError("pose needs at least one limb angle")
        object.__setattr__(self, "theta", theta)

    def __len__(self):
        return len(self.theta)

    def as_array(self) -> np.ndarray:
        return np.array(self.theta)


@dataclass(frozen=True)
class PiawGains:
    k_p: float = 2.0
    k_i: float = 0.5
    k_a: float = 0.0
    dt: float = 0.1

    def __post_init__(self):
        for name in ("k_p", "k_i", "k_a", "dt"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite, got {getattr(self, name)}")
        if self.k_p < 0 or self.k_i < 0:
            raise ValueError(f"k_p and k_i must be >= 0, got k_p={self.k_p}, k_i={self.k_i}")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")


@dataclass(frozen=True)
class PiawState:
    acc: float = 0.0
    last_eta: float = 0.0
    last_mu: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.acc, self.last_eta, self.last_mu)):
            raise ValueError("PIAW state must be finite")


def _angles(q) -> np.ndarray:
    return q.as_array() if isinstance(q, PoseState) else np.asarray(q, dtype=float)


def pose_error(q, q_bar) -> np.ndarray:
    """``theta - theta_bar`` per limb."""
    q, q_bar = _angles(q), _angles(q_bar)
    if q.shape != q_bar.shape:
        raise ValueError(f"pose lengths differ: {q.shape} vs {q_bar.shape}")
    return q - q_bar


def sat(eta: float) -> float:
    return min(1.0, max(-1.0, eta))


def piaw_step(gains: PiawGains, state: PiawState, delta: float):
    """Advance one scalar PIAW controller.

    The accumulator includes the current error before the command is formed
    (right-endpoint rule); anti-windup feeds back the previous step's
    ``mu - eta`` gap.  Returns ``(eta, mu, new_state)``.
    """
    delta = float(delta)
    if not math.isfinite(delta):
        raise ValueError(f"pose error must be finite, got {delta}")
    acc = state.acc + delta + gains.k_a * (state.last_mu - state.last_eta)
    eta = gains.k_p * delta + gains.k_i * gains.dt * acc
    mu = sat(eta)
    return eta, mu, PiawState(acc, eta, mu)


def pair_map(mu: float) -> tuple[float, float]:
    """Route a signed command to the ``(+, -)`` wires of one limb."""
    if not -1.0 <= mu <= 1.0:
        raise ValueError(f"mu must lie in [-1,1], got {mu}")
    return (mu, 0.0) if mu >= 0 else (0.0, -mu)


def pose_controller_step(gains: PiawGains | Sequence[PiawGains], states: Sequence[PiawState], q, q_bar):
    """Run every limb's PIAW loop and interleave the duty cycles.

    Limb ``j`` drives channels ``2j`` (+) and ``2j+1`` (-).  Returns
    ``(v, new_states, mu)`` with ``v`` of length ``2J``.
    """
    delta = pose_error(q, q_bar)
    n = len(delta)
    if isinstance(gains, PiawGains):
        gains = [gains] * n
    if len(gains) != n or len(states) != n:
        raise ValueError(f"need {n} gains and states, got {len(gains)} and {len(states)}")
    v = np.zeros(2 * n)
    mu = np.zeros(n)
    new_states = []
    for j in range(n):
        _, mu[j], s = piaw_step(gains[j], states[j], delta[j])
        v[2 * j], v[2 * j + 1] = pair_map(mu[j])
        new_states.append(s)
    return v, new_states, mu


class PiawPoseController(BaseEstimator):
    """Stateful convenience wrapper holding one :class:`PiawState` per limb.

    Gains are uniform across limbs; pass ``limb_gains`` to override them
    individually.
    """

    def __init__(self, n_limbs=5, k_p=2.0, k_i=0.5, k_a=0.0, dt=0.1, limb_gains=None):
        self.n_limbs = n_limbs
        self.k_p = k_p
        self.k_i = k_i
        self.k_a = k_a
        self.dt = dt
        self.limb_gains = limb_gains

    @property
    def gains(self) -> list[PiawGains]:
        if self.limb_gains is not None:
            return list(self.limb_gains)
        return [PiawGains(self.k_p, self.k_i, self.k_a, self.dt)] * self.n_limbs

    def reset(self):
        self.states_ = [PiawState() for _ in range(self.n_limbs)]
        return self

    def step(self, q, q_bar) -> np.ndarray:
        if not hasattr(self, "states_"):
            self.reset()
        v, self.states_, self.mu_ = pose_controller_step(self.gains, self.states_, q, q_bar)
        return v
