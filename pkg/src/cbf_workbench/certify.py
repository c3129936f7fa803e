"""Offline certification: can the filter always find an admissible input?

A barrier row is pointwise satisfiable when the best admissible input keeps
the required decay inequality. The margin reported here is that best case:

    degree 1:  sup_u (Lf_h + Lg_h . u) + gamma * h
             = Lf_h + sum_i |Lg_h_i| * box_i + gamma * h
    degree 2:  Lf2_h + sum_i |LgLf_h_i| * box_i
             + (gamma1 + gamma2) * h_dot + gamma1 * gamma2 * h

Negative margin at a state means the constraint row cannot be met there by
any input in the box, so a trajectory passing through that state goes
infeasible. scan_domain sweeps a grid and counts such states; the domain can
be restricted to the safe set or, for a wall in front of the double
integrator, to the braking viability kernel.

The kernel itself is exposed twice on purpose: in_viability_kernel is the
closed form (v >= -sqrt(2 u_max p)), kernel_oracle_check simulates maximal
braking with a fine Euler step. They are independent routes and are compared
in tests rather than trusting either alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import barriers as br
from . import models
from .barriers import Barrier
from .models import DOUBLE_INTEGRATOR, MANIPULATOR, SystemModel

MAX_GRID_POINTS = 10_000_000
_CHUNK = 200_000


@dataclass(frozen=True)
class DomainGrid:
    """Axis-aligned grid: one (lo, hi, count) triple per state dimension."""

    dims: tuple

    def __post_init__(self):
        dims = tuple((float(lo), float(hi), int(count)) for lo, hi, count in self.dims)
        total = 1
        for lo, hi, count in dims:
            if count < 1:
                raise ValueError("grid counts must be at least 1")
            if hi < lo:
                raise ValueError("grid bounds must satisfy lo <= hi")
            total *= count
        if total > MAX_GRID_POINTS:
            raise ValueError(f"grid has {total} points, cap is {MAX_GRID_POINTS}")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        total = 1
        for _, _, count in self.dims:
            total *= count
        return total

    def axes(self):
        return [np.linspace(lo, hi, count) for lo, hi, count in self.dims]

    def chunks(self, chunk_size: int = _CHUNK):
        """Yield state matrices (k, state_dim) covering the grid in order."""
        axes = self.axes()
        counts = [len(a) for a in axes]
        total = self.total
        for start in range(0, total, chunk_size):
            stop = min(start + chunk_size, total)
            flat = np.arange(start, stop)
            idx = np.unravel_index(flat, counts)
            yield np.stack([axes[d][idx[d]] for d in range(len(axes))], axis=1)


def sup_rate(model: SystemModel, b: Barrier, x) -> float:
    """Largest achievable h_dot at x: Lf_h plus the box-weighted |Lg_h|."""
    grad = br.barrier_gradient(b, model, x)
    lf_h = float(grad @ models.drift(model, x))
    lg_h = grad @ models.actuation(model, x)
    return lf_h + float(np.abs(lg_h) @ model.input_box)


def pointwise_margin(model: SystemModel, b: Barrier, gains, x) -> float:
    """Best-case slack of the barrier row at x; negative means infeasible.

    gains is a single gamma (degree-1 row) or a (gamma1, gamma2) pair
    (degree-2 row). The degree-1 form is defined for any barrier; applied to
    a degree-2 pairing it reports the honest deficit of treating h as a
    plain barrier there (Lg_h is identically zero, so the input cannot help).
    A degree-1 barrier under pair gains uses gamma1, matching the filter
    families, so mixed barrier sets certify under one gain setting.
    """
    if np.isscalar(gains):
        gamma = float(gains)
        if gamma <= 0.0:
            raise ValueError("gamma must be positive")
        h = br.barrier_value(b, model, x)
        return sup_rate(model, b, x) + gamma * h
    gamma1, gamma2 = (float(g) for g in gains)
    if gamma1 <= 0.0 or gamma2 <= 0.0:
        raise ValueError("gamma1 and gamma2 must be positive")
    if b.relative_degree == 1:
        return pointwise_margin(model, b, gamma1, x)
    h, h_dot, lf2_h, lglf_h = br.hocbf_terms(b, model, x)
    sup = lf2_h + float(np.abs(lglf_h) @ model.input_box)
    return sup + (gamma1 + gamma2) * h_dot + gamma1 * gamma2 * h


@dataclass(frozen=True, eq=False)
class FeasibilityReport:
    model_kind: str
    gains: tuple
    grid: tuple
    restrict: str
    barriers: tuple
    points_total: int
    points_scanned: int
    violation_count: int
    worst_margin: float
    worst_state: tuple

    @property
    def violation_fraction(self) -> float:
        if self.points_scanned == 0:
            return 0.0
        return self.violation_count / self.points_scanned

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "model": self.model_kind,
            "gains": list(self.gains),
            "grid": [list(d) for d in self.grid],
            "restrict": self.restrict,
            "barriers": [b for b in self.barriers],
            "points_total": self.points_total,
            "points_scanned": self.points_scanned,
            "violation_count": self.violation_count,
            "violation_fraction": self.violation_fraction,
            "worst_margin": self.worst_margin,
            "worst_state": list(self.worst_state),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2)
            fh.write("\n")


def _values_chunk(model: SystemModel, b: Barrier, states: np.ndarray) -> np.ndarray:
    """Vectorized barrier value over a chunk of states."""
    if b.kind == br.CIRCLE:
        d = states[:, :2] - b.center
        return np.einsum("ij,ij->i", d, d) - b.combined_radius**2
    if b.kind == br.VELOCITY:
        v = states[:, 2:4]
        return b.v_max**2 - np.einsum("ij,ij->i", v, v)
    if b.kind == br.WALL:
        return states[:, :2] @ b.normal - b.offset
    if b.kind == br.SEGMENT:
        c, _, _ = _segment_geometry(model, b, states)
        diff = c - b.center
        return np.einsum("ij,ij->i", diff, diff) - b.combined_radius**2
    raise ValueError(f"unknown barrier kind {b.kind!r}")


def _segment_geometry(model: SystemModel, b: Barrier, states: np.ndarray):
    """Closest points and endpoint jacobians for one link over many states."""
    ang = np.cumsum(states, axis=1)  # (k, 3)
    steps = model.link_lengths * np.stack([np.cos(ang), np.sin(ang)], axis=1)
    pts = np.concatenate(
        [np.broadcast_to(model.base, (len(states), 1, 2)).transpose(0, 2, 1),
         model.base[None, :, None] + np.cumsum(steps, axis=2)],
        axis=2,
    )  # (k, 2, 4)
    li = b.link_index
    a = pts[:, :, li]
    bb = pts[:, :, li + 1]
    d = bb - a
    denom = np.einsum("ij,ij->i", d, d)
    t = np.einsum("ij,ij->i", b.center - a, d) / np.where(denom == 0.0, 1.0, denom)
    t = np.clip(t, 0.0, 1.0)
    c = a + t[:, None] * d

    normals = model.link_lengths * np.stack([-np.sin(ang), np.cos(ang)], axis=1)
    # jac[k] of joint point j: sum of normals for links j'..j-1 per angle
    jac = np.zeros((len(states), 2, 4, 3))
    for k in range(1, 4):
        for j in range(k):
            jac[:, :, k, j] = normals[:, :, j:k].sum(axis=2)
    jc = (1.0 - t)[:, None, None] * jac[:, :, li] + t[:, None, None] * jac[:, :, li + 1]
    return c, t, jc  # jc: (k, 2, 3)


def _margin_chunk(model, b, gains, states) -> np.ndarray:
    """Vectorized pointwise_margin over a chunk of states."""
    box = model.input_box
    if np.isscalar(gains):
        gamma = float(gains)
        h = _values_chunk(model, b, states)
        if b.kind == br.CIRCLE:
            d = states[:, :2] - b.center
            if model.kind == DOUBLE_INTEGRATOR:
                lf = 2.0 * np.einsum("ij,ij->i", d, states[:, 2:4])
                sup = lf  # Lg_h is zero at relative degree 2
            else:
                sup = 2.0 * np.abs(d) @ box
        elif b.kind == br.VELOCITY:
            sup = 2.0 * np.abs(states[:, 2:4]) @ box
        elif b.kind == br.WALL:
            if model.kind == DOUBLE_INTEGRATOR:
                sup = states[:, 2:4] @ b.normal
            else:
                sup = np.full(len(states), float(np.abs(b.normal) @ box))
        elif b.kind == br.SEGMENT:
            c, _, jc = _segment_geometry(model, b, states)
            grad = 2.0 * np.einsum("ij,ijk->ik", c - b.center, jc)
            sup = np.abs(grad) @ box
        else:
            raise ValueError(f"unknown barrier kind {b.kind!r}")
        return sup + gamma * h

    gamma1, gamma2 = (float(g) for g in gains)
    if b.relative_degree == 1:
        return _margin_chunk(model, b, gamma1, states)
    v = states[:, 2:4]
    if b.kind == br.CIRCLE:
        d = states[:, :2] - b.center
        h = np.einsum("ij,ij->i", d, d) - b.combined_radius**2
        h_dot = 2.0 * np.einsum("ij,ij->i", d, v)
        lf2 = 2.0 * np.einsum("ij,ij->i", v, v)
        sup = lf2 + 2.0 * np.abs(d) @ box
    else:  # wall
        h = states[:, :2] @ b.normal - b.offset
        h_dot = v @ b.normal
        sup = np.full(len(states), float(np.abs(b.normal) @ box))
    return sup + (gamma1 + gamma2) * h_dot + gamma1 * gamma2 * h


def _lf_chunk(model, b, states) -> np.ndarray:
    """Vectorized Lf_h over a chunk (the zero-input decay rate)."""
    if model.kind != DOUBLE_INTEGRATOR:
        return np.zeros(len(states))
    v = states[:, 2:4]
    if b.kind == br.CIRCLE:
        d = states[:, :2] - b.center
        return 2.0 * np.einsum("ij,ij->i", d, v)
    if b.kind == br.WALL:
        return v @ b.normal
    if b.kind == br.VELOCITY:
        return np.zeros(len(states))
    raise ValueError(f"barrier kind {b.kind!r} not defined for this model")


def _restrict_mask(model, barrier_list, restrict, states) -> np.ndarray:
    if restrict == "none":
        return np.ones(len(states), dtype=bool)
    if restrict == "safe":
        mask = np.ones(len(states), dtype=bool)
        for b in barrier_list:
            mask &= _values_chunk(model, b, states) >= 0.0
        return mask
    if restrict == "kernel":
        walls = [b for b in barrier_list if b.kind == br.WALL]
        if model.kind != DOUBLE_INTEGRATOR or len(walls) != 1:
            raise ValueError(
                "kernel restriction needs the double integrator and one wall barrier"
            )
        w = walls[0]
        scale = float(np.linalg.norm(w.normal))
        unit = w.normal / scale
        dist = (states[:, :2] @ w.normal - w.offset) / scale
        speed = states[:, 2:4] @ unit
        u_max = float(np.abs(unit) @ model.input_box)
        return kernel_mask(dist, speed, u_max)
    raise ValueError(f"unknown restrict mode {restrict!r}")


def scan_domain(
    model: SystemModel,
    barrier_list,
    gains,
    grid: DomainGrid,
    restrict: str = "none",
) -> FeasibilityReport:
    """Count grid states where some barrier row is unsatisfiable."""
    if len(grid.dims) != model.state_dim:
        raise ValueError("grid dimension does not match the model state")
    scanned = 0
    violations = 0
    worst = np.inf
    worst_state = tuple(np.nan for _ in range(model.state_dim))
    for states in grid.chunks():
        mask = _restrict_mask(model, barrier_list, restrict, states)
        if not np.any(mask):
            continue
        states = states[mask]
        scanned += len(states)
        margins = np.full(len(states), np.inf)
        for b in barrier_list:
            margins = np.minimum(margins, _margin_chunk(model, b, gains, states))
        violations += int(np.count_nonzero(margins < 0.0))
        k = int(np.argmin(margins))
        if margins[k] < worst:
            worst = float(margins[k])
            worst_state = tuple(float(s) for s in states[k])
    return FeasibilityReport(
        model_kind=model.kind,
        gains=(gains,) if np.isscalar(gains) else tuple(gains),
        grid=grid.dims,
        restrict=restrict,
        barriers=tuple(b.describe() for b in barrier_list),
        points_total=grid.total,
        points_scanned=scanned,
        violation_count=violations,
        worst_margin=worst if scanned else np.nan,
        worst_state=worst_state,
    )


def min_margin(model: SystemModel, barrier_list, gains, states) -> np.ndarray:
    """Tightest row margin per state, vectorized over a state matrix."""
    states = np.asarray(states, dtype=float)
    margins = np.full(len(states), np.inf)
    for b in barrier_list:
        margins = np.minimum(margins, _margin_chunk(model, b, gains, states))
    return margins


def restrict_mask(model, barrier_list, restrict, states) -> np.ndarray:
    """Which states fall inside the chosen scan region."""
    return _restrict_mask(model, barrier_list, restrict, np.asarray(states, dtype=float))


def passive_safety_margin(model: SystemModel, barrier_list, grid: DomainGrid) -> float:
    """Minimum of Lf_h over the gridded safe set.

    Nonnegative means coasting (u = 0) never drives h down at safe states;
    driftless systems return exactly 0.
    """
    worst = np.inf
    for states in grid.chunks():
        mask = np.ones(len(states), dtype=bool)
        for b in barrier_list:
            mask &= _values_chunk(model, b, states) >= 0.0
        if not np.any(mask):
            continue
        states = states[mask]
        for b in barrier_list:
            worst = min(worst, float(_lf_chunk(model, b, states).min()))
    return worst


def in_viability_kernel(p: float, v: float, u_max: float) -> bool:
    """Closed form: can maximal braking (accel +u_max) keep p >= 0 forever?"""
    if u_max <= 0.0:
        raise ValueError("u_max must be positive")
    if p < 0.0:
        return False
    if v >= 0.0:
        return True
    return v >= -np.sqrt(2.0 * u_max * p)


def kernel_mask(p, v, u_max: float) -> np.ndarray:
    """Vectorized in_viability_kernel."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    return (p >= 0.0) & ((v >= 0.0) | (v >= -np.sqrt(2.0 * u_max * np.maximum(p, 0.0))))


def kernel_oracle_grid(p, v, u_max: float, dt: float = 1e-4) -> np.ndarray:
    """Simulate maximal braking with Euler steps; True where p never goes
    negative before the velocity turns around. Independent of the closed form.
    """
    p = np.array(p, dtype=float)
    v = np.array(v, dtype=float)
    safe = np.ones(p.shape, dtype=bool)
    safe[p < 0.0] = False
    undecided = safe & (v < 0.0)
    while np.any(undecided):
        p_next = p + dt * v
        v_next = v + dt * u_max
        p = np.where(undecided, p_next, p)
        v = np.where(undecided, v_next, v)
        crashed = undecided & (p < 0.0)
        safe[crashed] = False
        undecided = undecided & ~crashed & (v < 0.0)
    return safe


def kernel_oracle_check(p: float, v: float, u_max: float, dt: float = 1e-4) -> bool:
    return bool(kernel_oracle_grid(np.array([p]), np.array([v]), u_max, dt)[0])
