"""Fixed-step plant simulator for a planar robot with antagonistic SMA limbs.

Thermal states evolve exactly as the block linear model.  Limb angles follow a
first-order model driven by the temperature difference of each limb's wire
pair, with a constant load bias and scripted disturbance biases.  The wire on
channel ``2j`` (the one a positive pose command heats) bends limb ``j`` toward
negative angles, so a positive tracking error is corrected.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
import numpy as np

from .pose import PiawState, pose_controller_step
from .safety import (SafetyConfig, UnsafeModelError, check_invariance, compose,
                     supervisor_active, u_max)
from .thermal import BlockLinearSystem, as_augmented, step_block

CSV_FLOAT = "%.9g"


def _floats(values, name: str) -> tuple[float, ...]:
    out = tuple(float(v) for v in np.ravel(values))
    if not all(math.isfinite(v) for v in out):
        raise ValueError(f"{name} must be finite")
    return out


@dataclass(frozen=True)
class PoseModelParams:
    """Synthetic temperature-to-bending response.

    ``load`` is either one bias for every limb or one per limb (rad/s).
    """

    c_gain: float = 0.01
    c_damp: float = 1.0
    load: float | tuple[float, ...] = 0.0
    theta_lim: float = math.pi / 2
    dt: float = 0.1

    def __post_init__(self):
        if not (self.c_gain > 0 and self.c_damp > 0 and self.theta_lim > 0 and self.dt > 0):
            raise ValueError("c_gain, c_damp, theta_lim and dt must all be > 0")
        load = _floats(self.load, "load")
        object.__setattr__(self, "load", load[0] if np.ndim(self.load) == 0 else load)

    def load_vector(self, n: int) -> np.ndarray:
        load = np.broadcast_to(np.asarray(self.load, dtype=float), (n,))
        return np.array(load)


@dataclass(frozen=True)
class DisturbanceWindow:
    t_start: float
    t_end: float
    bias: tuple[float, ...]

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"disturbance window needs t_start < t_end, got [{self.t_start}, {self.t_end}]")
        object.__setattr__(self, "bias", _floats(self.bias, "bias"))


@dataclass(frozen=True)
class DisturbanceProfile:
    """Additive angular-rate biases over half-open time windows ``[t_start, t_end)``."""

    windows: tuple[DisturbanceWindow, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "windows", tuple(
            w if isinstance(w, DisturbanceWindow) else DisturbanceWindow(*w) for w in self.windows))

    def biases(self, t: float, n: int) -> np.ndarray:
        d = np.zeros(n)
        for w in self.windows:
            if w.t_start <= t < w.t_end:
                if len(w.bias) != n:
                    raise ValueError(f"disturbance bias has {len(w.bias)} entries for {n} limbs")
                d += w.bias
        return d


@dataclass(frozen=True)
class SetpointSchedule:
    """Piecewise-constant pose targets: ``(t_start, theta_bar)`` entries sorted by time."""

    entries: tuple[tuple[float, tuple[float, ...]], ...]

    def __post_init__(self):
        entries = tuple((float(t), _floats(q, "setpoint")) for t, q in self.entries)
        if not entries or entries[0][0] != 0.0:
            raise ValueError("setpoint schedule must start at t = 0")
        times = [t for t, _ in entries]
        if times != sorted(times) or len(set(times)) != len(times):
            raise ValueError("setpoint schedule times must be strictly increasing")
        if len({len(q) for _, q in entries}) != 1:
            raise ValueError("all setpoints must have the same number of limbs")
        object.__setattr__(self, "entries", entries)

    @property
    def n_limbs(self) -> int:
        return len(self.entries[0][1])

    def at(self, t: float) -> np.ndarray:
        current = self.entries[0][1]
        for t_start, q in self.entries:
            if t_start <= t:
                current = q
            else:
                break
        return np.array(current)


@dataclass(frozen=True)
class LimbGeometry:
    """Planar chain of constant-curvature segments ending at the front foot.

    ``chain`` lists limb indices from the root outward; ``base_pose`` is the
    root's ``(x, y, heading)`` in metres and radians.  The default roots the
    chain at the rear foot lying along the ground and runs rear leg, spine,
    spine, front leg (limbs 4, 2, 1, 0), so the straight pose has zero height.
    """

    seg_len: float = 0.04
    base_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    chain: tuple[int, ...] = (4, 2, 1, 0)

    def __post_init__(self):
        if not self.seg_len > 0:
            raise ValueError(f"seg_len must be > 0, got {self.seg_len}")
        object.__setattr__(self, "base_pose", _floats(self.base_pose, "base_pose"))
        object.__setattr__(self, "chain", tuple(int(i) for i in self.chain))
        if len(self.base_pose) != 3 or not self.chain:
            raise ValueError("base_pose needs (x, y, heading) and chain at least one limb")


@dataclass
class PlantState:
    q: np.ndarray
    x: np.ndarray
    t: float = 0.0
    k: int = 0


def chain_points(geom: LimbGeometry, q) -> np.ndarray:
    """Segment endpoints ``(len(chain)+1, 2)`` of the PCC chain.

    Each segment bends by ``theta``, so its tip tangent turns by ``2*theta``
    and its chord, of length ``L*sin(theta)/theta``, points along the base
    tangent rotated by ``theta``.
    """
    q = np.asarray(q, dtype=float)
    x, y, heading = geom.base_pose
    pts = [(x, y)]
    for j in geom.chain:
        theta = q[j]
        chord = geom.seg_len * np.sinc(theta / np.pi)
        x += chord * math.cos(heading + theta)
        y += chord * math.sin(heading + theta)
        heading += 2.0 * theta
        pts.append((x, y))
    return np.array(pts)


def tip_heading(geom: LimbGeometry, q) -> float:
    q = np.asarray(q, dtype=float)
    return geom.base_pose[2] + 2.0 * float(sum(q[j] for j in geom.chain))


def foot_height(geom: LimbGeometry, q) -> float:
    """Signed height of the chain tip above the ground plane ``y = 0`` (m)."""
    return float(chain_points(geom, q)[-1, 1])


def pose_step(pm: PoseModelParams, q, x, d=None, ambient=None) -> np.ndarray:
    """Advance limb angles one step from wire temperatures and biases."""
    q = np.asarray(q, dtype=float)
    x = as_augmented(x, 2 * len(q))
    temps = x[..., 0] - (0.0 if ambient is None else np.asarray(ambient))
    drive = pm.c_gain * (temps[1::2] - temps[0::2])
    d = np.zeros_like(q) if d is None else np.asarray(d, dtype=float)
    rate = drive - pm.c_damp * q + pm.load_vector(len(q)) + d
    return np.clip(q + pm.dt * rate, -pm.theta_lim, pm.theta_lim)


def plant_step(sys: BlockLinearSystem, pm: PoseModelParams, state: PlantState, u_hat,
               profile: DisturbanceProfile | None = None) -> PlantState:
    """Advance the full plant one step with actuated duty cycles ``u_hat``."""
    n = len(state.q)
    d = profile.biases(state.t, n) if profile is not None else None
    x_next = step_block(sys, state.x, u_hat)
    q_next = pose_step(pm, state.q, state.x, d, sys.ambient)
    k = state.k + 1
    return PlantState(q_next, x_next, k * pm.dt, k)


def _col_names(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(1, n + 1)]


def _round9(value: float) -> float:
    return float(CSV_FLOAT % value)


@dataclass
class TraceLog:
    """Per-step record of a scenario run; row ``k`` holds the state before step ``k``."""

    k: np.ndarray
    t: np.ndarray
    theta: np.ndarray
    setpoint: np.ndarray
    temp: np.ndarray
    v: np.ndarray
    u_max: np.ndarray
    u_hat: np.ndarray
    sup: np.ndarray
    foot_height: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_limbs(self) -> int:
        return self.theta.shape[1]

    @property
    def n_wires(self) -> int:
        return self.temp.shape[1]

    def header(self) -> list[str]:
        J, m = self.n_limbs, self.n_wires
        return (["k", "t"] + _col_names("theta", J) + _col_names("setp", J) + _col_names("T", m)
                + _col_names("v", m) + _col_names("umax", m) + _col_names("uhat", m)
                + _col_names("sup", m) + ["foot_height_m"])

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header())
        for i in range(len(self.k)):
            floats = np.concatenate([self.theta[i], self.setpoint[i], self.temp[i], self.v[i],
                                     self.u_max[i], self.u_hat[i]])
            writer.writerow([int(self.k[i]), CSV_FLOAT % self.t[i]]
                            + [CSV_FLOAT % f for f in floats]
                            + [int(s) for s in self.sup[i]]
                            + [CSV_FLOAT % self.foot_height[i]])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "TraceLog":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        J = sum(h.startswith("theta") for h in header)
        m = sum(h.startswith("umax") for h in header)
        data = np.array(body, dtype=float).reshape(-1, len(header))
        cols = np.cumsum([0, 1, 1, J, J, m, m, m, m, m, 1])
        parts = [data[:, a:b] for a, b in zip(cols[:-1], cols[1:])]
        return cls(parts[0][:, 0].astype(int), parts[1][:, 0], parts[2], parts[3], parts[4],
                   parts[5], parts[6], parts[7], parts[8].astype(bool), parts[9][:, 0])

    def activation_intervals(self) -> dict[int, list[list[float]]]:
        """Runs of consecutive supervisor-active rows per wire, as ``[t_first, t_last]`` (1-based keys)."""
        out: dict[int, list[list[float]]] = {}
        for i in range(self.n_wires):
            active = self.sup[:, i]
            runs = []
            start = None
            for r, flag in enumerate(active):
                if flag and start is None:
                    start = r
                if start is not None and (not flag or r == len(active) - 1):
                    end = r if flag else r - 1
                    runs.append([_round9(self.t[start]), _round9(self.t[end])])
                    start = None
            if runs:
                out[i + 1] = runs
        return out

    def summary(self) -> dict:
        return {
            "steps": int(len(self.k)),
            "max_temp_c": [_round9(v) for v in self.temp.max(axis=0)],
            "supervisor_active_intervals_s": {str(k): v for k, v in self.activation_intervals().items()},
            "final_foot_height_m": _round9(self.foot_height[-1]),
        }


def run_scenario(scenario) -> TraceLog:
    """Run the closed loop: PIAW pose control, temperature supervisor, plant.

    ``scenario`` is a :class:`smasafe.scenario.ScenarioConfig`.  The run is
    refused with :class:`UnsafeModelError` when the thermal model fails the
    invariance certificate.
    """
    sys: BlockLinearSystem = scenario.system
    cfg: SafetyConfig = scenario.safety.validate_for(sys)
    cert = check_invariance(sys, cfg)
    if not cert.holds:
        raise UnsafeModelError(f"invariance certificate failed at block/row/col {cert.witness}")
    J, m, H = scenario.n_limbs, sys.m, scenario.horizon
    if m != 2 * J:
        raise ValueError(f"{J} limbs need {2 * J} wires, model has {m}")
    pm = scenario.pose_model
    gains = scenario.limb_gains
    states = [PiawState() for _ in range(J)]
    theta0 = np.zeros(J) if scenario.initial_theta is None else np.array(scenario.initial_theta)
    state = PlantState(theta0, as_augmented(scenario.initial_x, m))

    log = {name: np.zeros((H, J)) for name in ("theta", "setpoint")}
    log.update({name: np.zeros((H, m)) for name in ("temp", "v", "u_max", "u_hat")})
    sup = np.zeros((H, m), dtype=bool)
    foot = np.zeros(H)
    for k in range(H):
        q_bar = scenario.setpoints.at(state.t)
        v, states, _ = pose_controller_step(gains, states, state.q, q_bar)
        um = u_max(sys, state.x, cfg)
        u_hat = compose(v, um)
        log["theta"][k] = state.q
        log["setpoint"][k] = q_bar
        log["temp"][k] = state.x[:, 0]
        log["v"][k] = v
        log["u_max"][k] = um
        log["u_hat"][k] = u_hat
        sup[k] = supervisor_active(v, um)
        foot[k] = foot_height(scenario.geometry, state.q)
        state = plant_step(sys, pm, state, u_hat, scenario.disturbances)
    return TraceLog(np.arange(H), np.arange(H) * pm.dt, log["theta"], log["setpoint"], log["temp"],
                    log["v"], log["u_max"], log["u_hat"], sup, foot)
