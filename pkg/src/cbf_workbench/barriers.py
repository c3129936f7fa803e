"""Barrier functions h(x) and their derivatives.

A barrier keeps the system inside {h >= 0}. Four kinds are provided:

    circle-obstacle   h = ||pos - center||^2 - r^2, r the combined radius
                      (obstacle radius plus robot radius)
    velocity-bound    h = v_max^2 - ||v||^2, double integrator only
    segment-obstacle  h = dist(link segment, center)^2 - r^2, one arm link
                      against one circular obstacle
    halfplane-wall    h = n . pos - offset, a straight wall

Relative degree is 2 exactly when the barrier constrains position on the
double integrator (circle-obstacle or halfplane-wall paired with it), since
then the input does not appear in h_dot. Degree-1 pairings go through
lie_derivatives, degree-2 pairings through hocbf_terms; calling the wrong
one is a contract error, not a silent zero row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import models
from .models import DOUBLE_INTEGRATOR, MANIPULATOR, SINGLE_INTEGRATOR, SystemModel

CIRCLE = "circle-obstacle"
VELOCITY = "velocity-bound"
SEGMENT = "segment-obstacle"
WALL = "halfplane-wall"


@dataclass(frozen=True, eq=False)
class Barrier:
    kind: str
    relative_degree: int
    center: np.ndarray | None = None
    combined_radius: float | None = None
    v_max: float | None = None
    link_index: int | None = None
    normal: np.ndarray | None = None
    offset: float | None = None

    def describe(self) -> dict:
        """JSON-friendly summary used in reports and protocol replies."""
        out = {"kind": self.kind, "relative_degree": self.relative_degree}
        if self.center is not None:
            out["center"] = [float(self.center[0]), float(self.center[1])]
        if self.combined_radius is not None:
            out["combined_radius"] = float(self.combined_radius)
        if self.v_max is not None:
            out["v_max"] = float(self.v_max)
        if self.link_index is not None:
            out["link_index"] = int(self.link_index)
        if self.normal is not None:
            out["normal"] = [float(self.normal[0]), float(self.normal[1])]
        if self.offset is not None:
            out["offset"] = float(self.offset)
        return out


class LieData(NamedTuple):
    h: float
    lf_h: float
    lg_h: np.ndarray


class HocbfData(NamedTuple):
    h: float
    h_dot: float
    lf2_h: float
    lglf_h: np.ndarray


def circle_obstacle(center, combined_radius: float, model: SystemModel) -> Barrier:
    if model.kind == MANIPULATOR:
        raise ValueError("use segment_obstacle for the manipulator links")
    if combined_radius <= 0.0:
        raise ValueError("combined_radius must be positive")
    degree = 2 if model.kind == DOUBLE_INTEGRATOR else 1
    return Barrier(
        CIRCLE,
        degree,
        center=np.asarray(center, dtype=float),
        combined_radius=float(combined_radius),
    )


def velocity_bound(v_max: float) -> Barrier:
    if v_max <= 0.0:
        raise ValueError("v_max must be positive")
    return Barrier(VELOCITY, 1, v_max=float(v_max))


def segment_obstacle(center, combined_radius: float, link_index: int) -> Barrier:
    if combined_radius <= 0.0:
        raise ValueError("combined_radius must be positive")
    if link_index not in (0, 1, 2):
        raise ValueError("link_index must be 0, 1 or 2")
    return Barrier(
        SEGMENT,
        1,
        center=np.asarray(center, dtype=float),
        combined_radius=float(combined_radius),
        link_index=int(link_index),
    )


def halfplane_wall(normal, offset: float, model: SystemModel) -> Barrier:
    n = np.asarray(normal, dtype=float)
    if n.shape != (2,) or not np.any(n != 0.0):
        raise ValueError("wall normal must be a nonzero 2-vector")
    if model.kind == MANIPULATOR:
        raise ValueError("halfplane_wall is not defined for the manipulator")
    degree = 2 if model.kind == DOUBLE_INTEGRATOR else 1
    return Barrier(WALL, degree, normal=n, offset=float(offset))


def _segment_closest(seg: np.ndarray, center: np.ndarray):
    """Closest point on segment to center: (point, foot parameter in [0, 1])."""
    a, b = seg[0], seg[1]
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        return a, 0.0
    t = float((center - a) @ d) / denom
    t = min(1.0, max(0.0, t))
    return a + t * d, t


def barrier_value(b: Barrier, model: SystemModel, x: np.ndarray) -> float:
    if b.kind == CIRCLE:
        d = x[:2] - b.center
        return float(d @ d) - b.combined_radius**2
    if b.kind == VELOCITY:
        return b.v_max**2 - float(x[2] ** 2 + x[3] ** 2)
    if b.kind == WALL:
        return float(b.normal @ x[:2]) - b.offset
    if b.kind == SEGMENT:
        seg = models.link_segments(model, x)[b.link_index]
        c, _ = _segment_closest(seg, b.center)
        diff = c - b.center
        return float(diff @ diff) - b.combined_radius**2
    raise ValueError(f"unknown barrier kind {b.kind!r}")


def barrier_gradient(b: Barrier, model: SystemModel, x: np.ndarray) -> np.ndarray:
    """dh/dx, shape (state_dim,).

    For the segment barrier the closest-point parameter is held fixed, which
    matches the true derivative wherever h is differentiable and picks the
    endpoint-side subgradient exactly at a clamp transition.
    """
    grad = np.zeros(model.state_dim)
    if b.kind == CIRCLE:
        grad[:2] = 2.0 * (x[:2] - b.center)
        return grad
    if b.kind == VELOCITY:
        grad[2] = -2.0 * x[2]
        grad[3] = -2.0 * x[3]
        return grad
    if b.kind == WALL:
        grad[:2] = b.normal
        return grad
    if b.kind == SEGMENT:
        seg = models.link_segments(model, x)[b.link_index]
        c, t = _segment_closest(seg, b.center)
        jac = models.joint_jacobians(model, x)
        jc = (1.0 - t) * jac[b.link_index] + t * jac[b.link_index + 1]  # (2, 3)
        return 2.0 * (c - b.center) @ jc
    raise ValueError(f"unknown barrier kind {b.kind!r}")


def lie_derivatives(b: Barrier, model: SystemModel, x: np.ndarray) -> LieData:
    """h, Lf h and Lg h for a relative-degree-1 pairing."""
    if b.relative_degree != 1:
        raise ValueError(
            "relative-degree-2 pairing: the input does not reach h_dot, "
            "use hocbf_terms instead"
        )
    h = barrier_value(b, model, x)
    grad = barrier_gradient(b, model, x)
    lf_h = float(grad @ models.drift(model, x))
    lg_h = grad @ models.actuation(model, x)
    return LieData(h, lf_h, lg_h)


def hocbf_terms(b: Barrier, model: SystemModel, x: np.ndarray) -> HocbfData:
    """h, h_dot, Lf^2 h and Lg Lf h for a relative-degree-2 pairing."""
    if b.relative_degree != 2:
        raise ValueError("relative-degree-1 pairing: use lie_derivatives instead")
    if model.kind != DOUBLE_INTEGRATOR:
        raise ValueError("degree-2 barriers are only paired with the double integrator")
    v = x[2:4]
    if b.kind == CIRCLE:
        d = x[:2] - b.center
        h = float(d @ d) - b.combined_radius**2
        h_dot = 2.0 * float(d @ v)
        lf2_h = 2.0 * float(v @ v)
        lglf_h = 2.0 * d
        return HocbfData(h, h_dot, lf2_h, lglf_h)
    if b.kind == WALL:
        h = float(b.normal @ x[:2]) - b.offset
        h_dot = float(b.normal @ v)
        return HocbfData(h, h_dot, 0.0, b.normal.copy())
    raise ValueError(f"barrier kind {b.kind!r} has no degree-2 form")
