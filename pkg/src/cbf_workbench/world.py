"""Randomized workspaces: obstacles, start states and goals.

A benchmark environment is a square workspace with circular obstacles of one
radius, a collision-free start, and a reachable goal. All sampling comes
from a single seeded generator (PCG64), so an environment is a pure function
of its seed and the sampling parameters.

Clearance convention: distance minus combined radius (obstacle radius plus
robot radius), negative exactly when the robot disk or an arm link overlaps
an obstacle. This is the same combined radius the obstacle barriers use, so
the sign of min_clearance agrees with the sign of the tightest barrier.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import barriers as br
from . import models
from .models import DOUBLE_INTEGRATOR, MANIPULATOR, SINGLE_INTEGRATOR, SystemModel

SCHEMA_VERSION = 1
_REJECTION_CAP = 10_000


@dataclass(frozen=True, eq=False)
class Environment:
    model_kind: str
    seed: int
    workspace: float  # square side length, origin at (0, 0)
    obstacle_centers: np.ndarray  # (n, 2)
    obstacle_radius: float
    robot_radius: float
    start_state: np.ndarray
    goal: np.ndarray

    @property
    def combined_radius(self) -> float:
        return self.obstacle_radius + self.robot_radius

    def to_json(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model_kind,
            "seed": int(self.seed),
            "workspace": float(self.workspace),
            "obstacle_centers": self.obstacle_centers.tolist(),
            "obstacle_radius": float(self.obstacle_radius),
            "robot_radius": float(self.robot_radius),
            "start_state": self.start_state.tolist(),
            "goal": self.goal.tolist(),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def environment_from_json(doc: dict) -> Environment:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported environment schema_version {version!r}")
    return Environment(
        model_kind=doc["model"],
        seed=int(doc["seed"]),
        workspace=float(doc["workspace"]),
        obstacle_centers=np.asarray(doc["obstacle_centers"], dtype=float),
        obstacle_radius=float(doc["obstacle_radius"]),
        robot_radius=float(doc["robot_radius"]),
        start_state=np.asarray(doc["start_state"], dtype=float),
        goal=np.asarray(doc["goal"], dtype=float),
    )


def _point_clearance(point, centers, combined) -> float:
    d = np.linalg.norm(centers - point, axis=1)
    return float(d.min() - combined) if len(d) else np.inf


def _segment_clearances(model, q, centers, combined) -> np.ndarray:
    """Clearance of every (link, obstacle) pair, shape (3 * n,)."""
    pts = models.joint_positions(model, q)
    out = np.empty((3, len(centers)))
    for li in range(3):
        a, b = pts[li], pts[li + 1]
        d = b - a
        denom = float(d @ d)
        if denom == 0.0:
            c = np.broadcast_to(a, centers.shape)
        else:
            t = np.clip((centers - a) @ d / denom, 0.0, 1.0)
            c = a + t[:, None] * d
        out[li] = np.linalg.norm(c - centers, axis=1) - combined
    return out.ravel()


def min_clearance(env: Environment, model: SystemModel, x) -> float:
    """Smallest robot-to-obstacle clearance at state x; negative = collision."""
    if model.kind == MANIPULATOR:
        return float(
            _segment_clearances(
                model, x, env.obstacle_centers, env.combined_radius
            ).min(initial=np.inf)
        )
    return _point_clearance(np.asarray(x[:2]), env.obstacle_centers, env.combined_radius)


def at_goal(env: Environment, model: SystemModel, x, tolerance: float) -> bool:
    """Within tolerance of the goal point (boundary counts as reached)."""
    p = models.position(model, x)
    return float(np.linalg.norm(p - env.goal)) <= tolerance


def sample_environment(
    model_kind: str,
    seed: int,
    n_obstacles: int = 10,
    obstacle_radius: float = 0.4,
    robot_radius: float = 0.25,
    workspace: float = 10.0,
    min_goal_separation: float = 1.0,
    obstacle_spacing: float = 0.0,
) -> Environment:
    """Draw an environment from its seed.

    Obstacles are placed uniformly (fully inside the workspace); the
    start/goal pair is redrawn until both are collision-free and the goal
    is at least min_goal_separation away from the start point (jointly, so
    large separations remain reachable from any accepted start).
    obstacle_spacing > 0 enforces a minimum center-to-center distance
    between obstacles.
    """
    if model_kind not in models.KNOWN_KINDS:
        raise ValueError(f"unknown model kind {model_kind!r}")
    rng = np.random.default_rng(seed)
    combined = obstacle_radius + robot_radius
    lo, hi = obstacle_radius, workspace - obstacle_radius

    if model_kind == MANIPULATOR:
        arm = models.planar_manipulator()
    else:
        arm = None

    centers = np.empty((n_obstacles, 2))
    placed = 0
    for _ in range(_REJECTION_CAP):
        if placed == n_obstacles:
            break
        candidate = rng.uniform(lo, hi, size=2)
        if arm is not None and np.linalg.norm(candidate - arm.base) < combined + 0.1:
            # an obstacle over the mount would make every configuration
            # collide, so no start state could ever be drawn
            continue
        if obstacle_spacing > 0.0 and placed:
            if np.min(np.linalg.norm(centers[:placed] - candidate, axis=1)) < obstacle_spacing:
                continue
        centers[placed] = candidate
        placed += 1
    if placed < n_obstacles:
        raise RuntimeError("obstacle sampling exceeded the rejection cap")

    def draw_start():
        for _ in range(_REJECTION_CAP):
            if model_kind == MANIPULATOR:
                q = rng.uniform(-np.pi, np.pi, size=3)
                if _segment_clearances(arm, q, centers, combined).min(initial=np.inf) > 0.0:
                    return q
            else:
                p = rng.uniform(robot_radius, workspace - robot_radius, size=2)
                if _point_clearance(p, centers, combined) > 0.0:
                    if model_kind == DOUBLE_INTEGRATOR:
                        return np.array([p[0], p[1], 0.0, 0.0])
                    return p
        raise RuntimeError("start sampling exceeded the rejection cap")

    def draw_goal():
        if model_kind == MANIPULATOR:
            reach = float(arm.link_lengths.sum())
            radius = rng.uniform(0.5, 0.95 * reach)
            angle = rng.uniform(0.0, np.pi)
            return arm.base + radius * np.array([np.cos(angle), np.sin(angle)])
        return rng.uniform(robot_radius, workspace - robot_radius, size=2)

    for _ in range(_REJECTION_CAP):
        start = draw_start()
        if model_kind == MANIPULATOR:
            start_point = models.end_effector(arm, start)
        else:
            start_point = start[:2]
        goal = draw_goal()
        if _point_clearance(goal, centers, combined) <= 0.0:
            continue
        if np.linalg.norm(goal - start_point) < min_goal_separation:
            continue
        break
    else:
        raise RuntimeError("start/goal sampling exceeded the rejection cap")
    return Environment(
        model_kind=model_kind,
        seed=int(seed),
        workspace=float(workspace),
        obstacle_centers=centers,
        obstacle_radius=float(obstacle_radius),
        robot_radius=float(robot_radius),
        start_state=start,
        goal=goal,
    )


def environment_barriers(env: Environment, model: SystemModel, v_max=None):
    """Barrier list for an environment, in canonical row order.

    Point robots get one circle barrier per obstacle; the double integrator
    appends a velocity bound when v_max is given. The arm gets one segment
    barrier per (obstacle, link) pair, obstacle-major.
    """
    combined = env.combined_radius
    out = []
    if model.kind == MANIPULATOR:
        for center in env.obstacle_centers:
            for link in range(3):
                out.append(br.segment_obstacle(center, combined, link))
        return out
    for center in env.obstacle_centers:
        out.append(br.circle_obstacle(center, combined, model))
    if model.kind == DOUBLE_INTEGRATOR and v_max is not None:
        out.append(br.velocity_bound(v_max))
    return out
