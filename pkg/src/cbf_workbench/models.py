"""Control-affine system models and simulation settings.

Every model is x_dot = f(x) + g(x) u with a symmetric per-axis input box
|u_i| <= box_i. Three concrete systems are provided:

    single-integrator-2d     x = (px, py), u is a velocity command
    double-integrator-2d     x = (px, py, vx, vy), u is an acceleration command
    planar-manipulator-3dof  x = (q1, q2, q3) joint angles, u is a joint rate
                             command, arm anchored at a fixed base

The manipulator is kinematic (q_dot = u), so it is driftless like the single
integrator. Forward kinematics use cumulative joint angles: link i points
along q1 + ... + qi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SINGLE_INTEGRATOR = "single-integrator-2d"
DOUBLE_INTEGRATOR = "double-integrator-2d"
MANIPULATOR = "planar-manipulator-3dof"

KNOWN_KINDS = (SINGLE_INTEGRATOR, DOUBLE_INTEGRATOR, MANIPULATOR)


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Immutable description of one control-affine system."""

    kind: str
    state_dim: int
    input_dim: int
    input_box: np.ndarray
    link_lengths: np.ndarray | None = None
    base: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KNOWN_KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        box = np.asarray(self.input_box, dtype=float)
        if box.shape != (self.input_dim,):
            raise ValueError(f"input_box must have shape ({self.input_dim},)")
        if not np.all(np.isfinite(box)) or not np.all(box > 0.0):
            raise ValueError("input_box entries must be positive and finite")
        object.__setattr__(self, "input_box", box)
        if self.kind == MANIPULATOR:
            lengths = np.asarray(self.link_lengths, dtype=float)
            base = np.asarray(self.base, dtype=float)
            if lengths.shape != (3,) or not np.all(lengths > 0.0):
                raise ValueError("manipulator needs three positive link lengths")
            if base.shape != (2,):
                raise ValueError("manipulator base must be a 2-vector")
            object.__setattr__(self, "link_lengths", lengths)
            object.__setattr__(self, "base", base)


@dataclass(frozen=True)
class SimConfig:
    """Closed-loop integration settings shared by benchmark and playground."""

    dt: float = 0.01
    max_steps: int = 3000
    goal_tolerance: float = 0.1

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")
        if self.goal_tolerance <= 0.0:
            raise ValueError("goal_tolerance must be positive")


def single_integrator(v_max: float = 5.0) -> SystemModel:
    """Planar single integrator, input is a bounded velocity command."""
    return SystemModel(SINGLE_INTEGRATOR, 2, 2, np.array([v_max, v_max]))


def double_integrator(a_max: float = 5.0) -> SystemModel:
    """Planar double integrator, input is a bounded acceleration command."""
    return SystemModel(DOUBLE_INTEGRATOR, 4, 2, np.array([a_max, a_max]))


def planar_manipulator(
    omega_max: float = 2.0,
    link_lengths=(1.33, 1.16, 0.83),
    base=(5.0, 0.0),
) -> SystemModel:
    """Kinematic 3-link planar arm, input is a bounded joint rate command."""
    return SystemModel(
        MANIPULATOR,
        3,
        3,
        np.full(3, float(omega_max)),
        link_lengths=np.asarray(link_lengths, dtype=float),
        base=np.asarray(base, dtype=float),
    )


def model_from_kind(kind: str, **kwargs) -> SystemModel:
    if kind == SINGLE_INTEGRATOR:
        return single_integrator(**kwargs)
    if kind == DOUBLE_INTEGRATOR:
        return double_integrator(**kwargs)
    if kind == MANIPULATOR:
        return planar_manipulator(**kwargs)
    raise ValueError(f"unknown model kind {kind!r}")


def drift(model: SystemModel, x: np.ndarray) -> np.ndarray:
    """f(x). Zero for the driftless systems."""
    if model.kind == DOUBLE_INTEGRATOR:
        return np.array([x[2], x[3], 0.0, 0.0])
    return np.zeros(model.state_dim)


def actuation(model: SystemModel, x: np.ndarray) -> np.ndarray:
    """g(x), shape (state_dim, input_dim)."""
    if model.kind == DOUBLE_INTEGRATOR:
        g = np.zeros((4, 2))
        g[2, 0] = 1.0
        g[3, 1] = 1.0
        return g
    return np.eye(model.state_dim)


def step(model: SystemModel, x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One explicit Euler step x + dt * (f(x) + g(x) u)."""
    if model.kind == DOUBLE_INTEGRATOR:
        return np.array(
            [
                x[0] + dt * x[2],
                x[1] + dt * x[3],
                x[2] + dt * u[0],
                x[3] + dt * u[1],
            ]
        )
    # driftless: x_dot = u
    return x + dt * u


def clamp_input(model: SystemModel, u: np.ndarray) -> np.ndarray:
    """Project u onto the input box, axis by axis."""
    return np.clip(u, -model.input_box, model.input_box)


def position(model: SystemModel, x: np.ndarray) -> np.ndarray:
    """Workspace point used for goal tracking and clearance checks."""
    if model.kind == MANIPULATOR:
        return end_effector(model, x)
    return np.asarray(x[:2])


def joint_positions(model: SystemModel, q: np.ndarray) -> np.ndarray:
    """Base and joint points of the arm, shape (4, 2). Row 0 is the base."""
    if model.kind != MANIPULATOR:
        raise ValueError("joint_positions is only defined for the manipulator")
    ang = np.cumsum(q)
    steps = model.link_lengths[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pts = np.empty((4, 2))
    pts[0] = model.base
    pts[1:] = model.base + np.cumsum(steps, axis=0)
    return pts


def joint_jacobians(model: SystemModel, q: np.ndarray) -> np.ndarray:
    """d(joint point)/dq for every joint point, shape (4, 2, 3).

    Entry [k, :, j] is the derivative of joint point k with respect to q_j;
    the base row is zero.
    """
    if model.kind != MANIPULATOR:
        raise ValueError("joint_jacobians is only defined for the manipulator")
    ang = np.cumsum(q)
    normals = model.link_lengths[:, None] * np.stack(
        [-np.sin(ang), np.cos(ang)], axis=1
    )  # (3, 2), d(link step i)/d(cumulative angle i)
    jac = np.zeros((4, 2, 3))
    for k in range(1, 4):
        for j in range(3):
            if j <= k - 1:
                # q_j rotates every link from j onward
                jac[k, :, j] = normals[j : k].sum(axis=0)
    return jac


def link_segments(model: SystemModel, q: np.ndarray) -> np.ndarray:
    """Arm links as segments, shape (3, 2, 2): [link, endpoint, xy]."""
    pts = joint_positions(model, q)
    return np.stack([pts[:3], pts[1:]], axis=1)


def end_effector(model: SystemModel, q: np.ndarray) -> np.ndarray:
    return joint_positions(model, q)[3]


def end_effector_jacobian(model: SystemModel, q: np.ndarray) -> np.ndarray:
    """2x3 Jacobian of the end effector point."""
    return joint_jacobians(model, q)[3]
