"""Closed-loop trials and Monte-Carlo sweep tables.

TrialEngine is the single runtime used everywhere a trajectory is produced:
the CLI trial command, the sweep workers, and the interactive playground all
step the same engine, so their traces agree to the last bit. Row assembly is
vectorized over barriers but mirrors the per-barrier formulas in
filters.build_rows term by term; a unit test pins the two routes against
each other.

Sweeps enumerate (cell, trial) pairs with seeds derived from a SeedSequence
spawn key, so every trial is reproducible in isolation and results do not
depend on worker scheduling. Aggregation is integer counting, which makes
the emitted tables byte-identical for any --jobs value.
"""

from __future__ import annotations

import json
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from . import filters, models, qp, world
from .filters import FilterSpec
from .models import (
    DOUBLE_INTEGRATOR,
    MANIPULATOR,
    SINGLE_INTEGRATOR,
    SimConfig,
    SystemModel,
)
from .world import Environment

GAMMA_GRID = (1.0, 2.0, 3.0, 4.0, 5.0)
VMAX_GRID = (1.0, 2.0, 3.0, 4.0, 5.0)

# A trajectory that converges onto a barrier boundary slides along it
# with a small clearance undershoot: the constraint row is linear in u
# while the true distance has curvature, so each dt step undershoots by
# O(dt^2 * ||u||^2) and the undershoot equilibrates near curv*dt*||u||^2
# / gain. A strict `clearance < 0` collision test would therefore flag
# boundary tracking itself. With the arm's rate cap the equilibrium
# stays under ~2 mm; genuine filter failures (late braking, pass-through)
# penetrate by 5 cm or more. One centimeter separates the regimes with
# comfortable margin on both sides.
COLLISION_TOL = 1e-2


@dataclass(frozen=True)
class TrialConfig:
    """Everything needed to reproduce one closed-loop trial."""

    system: str
    family: str
    seed: int
    gamma: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None
    v_max: float | None = None  # velocity-bound barrier (double integrator)
    sim: SimConfig = field(default_factory=SimConfig)
    n_obstacles: int = 10
    obstacle_radius: float = 0.4
    robot_radius: float = 0.25
    workspace: float = 10.0
    # default None = per-system benchmark policy: point robots start far
    # from the goal so every run crosses the obstacle field; the arm's
    # reach caps what is achievable
    min_goal_separation: float | None = None
    obstacle_spacing: float = 1.5
    nominal: str = "goal"  # "goal" seeks the goal, "zero" requests no motion

    def __post_init__(self):
        self.filter_spec()  # validates family/gain combination
        if self.system == DOUBLE_INTEGRATOR and self.v_max is None:
            raise ValueError("double-integrator trials need v_max for the velocity bound")
        if self.nominal not in ("goal", "zero"):
            raise ValueError(f"unknown nominal policy {self.nominal!r}")

    def goal_separation(self) -> float:
        if self.min_goal_separation is not None:
            return self.min_goal_separation
        return 1.0 if self.system == MANIPULATOR else 9.0

    def filter_spec(self) -> FilterSpec:
        return FilterSpec(
            family=self.family,
            gamma=self.gamma,
            gamma1=self.gamma1,
            gamma2=self.gamma2,
            dt=self.sim.dt,
        )

    def model(self) -> SystemModel:
        return models.model_from_kind(self.system)

    def sample_environment(self) -> Environment:
        return world.sample_environment(
            self.system,
            self.seed,
            n_obstacles=self.n_obstacles,
            obstacle_radius=self.obstacle_radius,
            robot_radius=self.robot_radius,
            workspace=self.workspace,
            min_goal_separation=self.goal_separation(),
            obstacle_spacing=self.obstacle_spacing,
        )

    def to_json(self) -> dict:
        out = {
            "system": self.system,
            "family": self.family,
            "seed": int(self.seed),
            "dt": self.sim.dt,
            "max_steps": self.sim.max_steps,
            "goal_tolerance": self.sim.goal_tolerance,
            "n_obstacles": self.n_obstacles,
            "obstacle_radius": self.obstacle_radius,
            "robot_radius": self.robot_radius,
            "workspace": self.workspace,
            "min_goal_separation": self.min_goal_separation,
            "obstacle_spacing": self.obstacle_spacing,
            "nominal": self.nominal,
        }
        for key in ("gamma", "gamma1", "gamma2", "v_max"):
            value = getattr(self, key)
            if value is not None:
                out[key] = float(value)
        return out


@dataclass(frozen=True)
class TrialResult:
    """Classified outcome of one closed-loop trial.

    collided means some step's clearance dropped below -COLLISION_TOL
    (see that constant for why boundary contact needs a tolerance).

    infeasible_steps counts QP failures that happen while the trial is
    still collision-free: that is the window in which an undefined
    controller is a well-posedness defect. Once the robot has already
    penetrated an obstacle the barrier premise is void and the simulator
    merely logs the remaining steps (the per-step feasible flag stays in
    the trace), so later failures do not reclassify the trial.
    """

    config: TrialConfig
    collided: bool
    infeasible_any: bool
    reached_goal: bool
    steps_used: int
    min_clearance_seen: float
    infeasible_steps: int

    def to_json(self) -> dict:
        return {
            "config": self.config.to_json(),
            "collided": self.collided,
            "infeasible_any": self.infeasible_any,
            "reached_goal": self.reached_goal,
            "steps_used": self.steps_used,
            "min_clearance_seen": self.min_clearance_seen,
            "infeasible_steps": self.infeasible_steps,
        }


def trace_record(t, x, u, h, feasible, clearance) -> dict:
    """One trace entry; shared by the benchmark and the playground."""
    return {
        "t": float(t),
        "x": [float(v) for v in x],
        "u": [float(v) for v in u],
        "h": [float(v) for v in h],
        "feasible": bool(feasible),
        "clearance": float(clearance),
    }


class _Values:
    """Barrier values and bookkeeping at one state."""

    __slots__ = ("h", "clearance", "goal_dist", "aux")

    def __init__(self, h, clearance, goal_dist, aux):
        self.h = h
        self.clearance = clearance
        self.goal_dist = goal_dist
        self.aux = aux


class TrialEngine:
    """Steps one safety filter through one environment.

    Per step: nominal control toward the goal, one constraint row per
    barrier, minimal QP adjustment (zero input on infeasibility), clamp to
    the input box, explicit Euler step, then record the post-step state.
    Collisions latch but never stop the run; only reaching the goal or the
    step budget does.
    """

    def __init__(self, config: TrialConfig, env: Environment | None = None):
        self.config = config
        self.model = config.model()
        self.env = env if env is not None else config.sample_environment()
        if self.env.model_kind != self.model.kind:
            raise ValueError("environment was sampled for a different system")
        self.spec = config.filter_spec()
        self.barriers = world.environment_barriers(
            self.env, self.model, v_max=config.v_max
        )
        self.box = filters.filter_box(self.model, self.spec)
        self.goal = self.env.goal

        self._centers = self.env.obstacle_centers
        combined = self.env.combined_radius
        self._combined = combined
        self._cr2 = combined**2
        if self.model.kind == MANIPULATOR:
            n = len(self._centers)
            self._links = np.tile(np.arange(3), n)
            self._centers30 = np.repeat(self._centers, 3, axis=0)
        if self.model.kind == DOUBLE_INTEGRATOR:
            self._vmax2 = float(config.v_max) ** 2
        dt = config.sim.dt
        self._dt = dt
        horizon = 2.0 * dt
        self._horizon = horizon
        self._half_t2 = 0.5 * horizon * horizon

        self.x = np.asarray(self.env.start_state, dtype=float).copy()
        self.steps = 0
        self.collided = False
        self.reached_goal = False
        self.infeasible_steps = 0
        self._vals = self._values(self.x)
        self.min_clearance = self._vals.clearance

    # -- geometry ---------------------------------------------------------

    def _values(self, x) -> _Values:
        kind = self.model.kind
        if kind == MANIPULATOR:
            pts = models.joint_positions(self.model, x)
            a = pts[self._links]
            b = pts[self._links + 1]
            seg = b - a
            denom = (seg * seg).sum(axis=1)
            t = np.clip(((self._centers30 - a) * seg).sum(axis=1) / denom, 0.0, 1.0)
            c = a + t[:, None] * seg
            diff = c - self._centers30
            dist2 = (diff * diff).sum(axis=1)
            h = dist2 - self._cr2
            clearance = (
                float(np.sqrt(dist2).min() - self._combined) if dist2.size else np.inf
            )
            goal_dist = float(np.linalg.norm(pts[3] - self.goal))
            return _Values(h, clearance, goal_dist, (t, diff, pts))
        d = x[:2] - self._centers
        dist2 = (d * d).sum(axis=1)
        h_obs = dist2 - self._cr2
        clearance = (
            float(np.sqrt(dist2).min() - self._combined) if dist2.size else np.inf
        )
        goal_dist = float(np.linalg.norm(x[:2] - self.goal))
        if kind == DOUBLE_INTEGRATOR:
            v = x[2:4]
            h_vel = self._vmax2 - float(x[2] ** 2 + x[3] ** 2)
            h = np.append(h_obs, h_vel)
            return _Values(h, clearance, goal_dist, (d, v, h_obs, h_vel))
        return _Values(h_obs, clearance, goal_dist, (d,))

    def _rows(self, x, vals: _Values):
        """Constraint rows (A, b) mirroring filters.build_rows term by term."""
        family = self.spec.family
        kind = self.model.kind
        if kind == MANIPULATOR:
            t, diff, _ = vals.aux
            jac = models.joint_jacobians(self.model, x)
            jc = (1.0 - t)[:, None, None] * jac[self._links] + t[:, None, None] * jac[
                self._links + 1
            ]
            grads = 2.0 * np.einsum("mi,mij->mj", diff, jc)
            if family == "cbf":
                return grads, -self.spec.gamma * vals.h
            return self._dt * grads, -vals.h  # naive-rd1
        if kind == SINGLE_INTEGRATOR:
            (d,) = vals.aux
            if family == "cbf":
                return 2.0 * d, -self.spec.gamma * vals.h
            return self._dt * (2.0 * d), -vals.h  # naive-rd1
        # double integrator: obstacle rows are relative degree 2, the
        # velocity bound stays a degree-1 row in both families
        d, v, h_obs, h_vel = vals.aux
        h_dot = 2.0 * (d @ v)
        lf2 = 2.0 * float(v @ v)
        if family == "hocbf":
            g1, g2 = self.spec.gamma1, self.spec.gamma2
            a_obs = 2.0 * d
            b_obs = -lf2 - (g1 + g2) * h_dot - g1 * g2 * h_obs
            a_vel = -2.0 * v
            b_vel = -g1 * h_vel
        else:  # naive-rd2 with a naive-rd1 velocity row
            a_obs = self._half_t2 * (2.0 * d)
            b_obs = -h_obs - self._horizon * h_dot - self._half_t2 * lf2
            a_vel = self._dt * (-2.0 * v)
            b_vel = -h_vel
        A = np.vstack([a_obs, a_vel[None, :]])
        b = np.append(b_obs, b_vel)
        return A, b

    def rows_at(self, x):
        """Constraint rows at an arbitrary state (playground queries)."""
        x = np.asarray(x, dtype=float)
        return self._rows(x, self._values(x))

    def _nominal(self, x, vals: _Values) -> np.ndarray:
        if self.config.nominal == "zero":
            return np.zeros(self.model.input_dim)
        if self.model.kind == MANIPULATOR:
            # same arithmetic as filters.nominal_control, reusing the
            # forward kinematics already computed for the rows
            _, _, pts = vals.aux
            jac = models.joint_jacobians(self.model, x)[3]
            err = self.goal - pts[3]
            jjt = jac @ jac.T + (0.01**2) * np.eye(2)
            u = jac.T @ np.linalg.solve(jjt, err)
            peak = np.max(np.abs(u))
            if peak > filters.MANIPULATOR_RATE_CAP:
                u = u * (filters.MANIPULATOR_RATE_CAP / peak)
            return models.clamp_input(self.model, u)
        return filters.nominal_control(self.model, self.goal, x)

    # -- stepping ---------------------------------------------------------

    def step_once(self) -> dict:
        x = self.x
        vals = self._vals
        u_nom = self._nominal(x, vals)
        A, b = self._rows(x, vals)
        out = qp.solve_arrays(u_nom, A, b, self.box)
        if out.status == qp.OPTIMAL:
            u = out.u_star
            feasible = True
        else:
            u = np.zeros(self.model.input_dim)
            feasible = False
        u = models.clamp_input(self.model, u)
        x1 = models.step(self.model, x, u, self._dt)
        self.steps += 1
        vals1 = self._values(x1)
        self.x = x1
        self._vals = vals1
        if not feasible and not self.collided:
            self.infeasible_steps += 1
        if vals1.clearance < -COLLISION_TOL:
            self.collided = True
        if vals1.clearance < self.min_clearance:
            self.min_clearance = vals1.clearance
        if vals1.goal_dist <= self.config.sim.goal_tolerance:
            self.reached_goal = True
        return trace_record(
            self.steps * self._dt, x1, u, vals1.h, feasible, vals1.clearance
        )

    def result(self) -> TrialResult:
        return TrialResult(
            config=self.config,
            collided=self.collided,
            infeasible_any=self.infeasible_steps > 0,
            reached_goal=self.reached_goal,
            steps_used=self.steps,
            min_clearance_seen=float(self.min_clearance),
            infeasible_steps=self.infeasible_steps,
        )


def run_trial(
    config: TrialConfig,
    env: Environment | None = None,
    collect_trace: bool = False,
):
    """Run one trial to goal or step budget; returns (result, trace|None)."""
    engine = TrialEngine(config, env)
    trace = [] if collect_trace else None
    for _ in range(config.sim.max_steps):
        record = engine.step_once()
        if trace is not None:
            trace.append(record)
        if engine.reached_goal:
            break
    return engine.result(), trace


# -- sweep tables ----------------------------------------------------------


@dataclass(frozen=True)
class _Cell:
    row: int
    col: int
    template: TrialConfig  # seed field is a placeholder, replaced per trial


def _cfg(**kw) -> TrialConfig:
    return TrialConfig(seed=0, **kw)


def table_cells(table: int):
    """(row_labels, col_labels, cells) for one benchmark table.

    Table 1: degree-1 systems, cbf rows aggregated over the gain grid
    against one-step lookahead rows. Table 2: double integrator under
    two-step lookahead across speed limits. Table 3: double integrator
    under second-order cbf rows, gain grid against speed limits.
    """
    if table == 1:
        rows = [
            ("single-integrator / cbf", SINGLE_INTEGRATOR, "cbf"),
            ("single-integrator / naive-rd1", SINGLE_INTEGRATOR, "naive-rd1"),
            ("manipulator / cbf", MANIPULATOR, "cbf"),
            ("manipulator / naive-rd1", MANIPULATOR, "naive-rd1"),
        ]
        cells = []
        for r, (_, system, family) in enumerate(rows):
            if family == "cbf":
                for g in GAMMA_GRID:
                    cells.append(_Cell(r, 0, _cfg(system=system, family="cbf", gamma=g)))
            else:
                cells.append(_Cell(r, 0, _cfg(system=system, family=family)))
        return [label for label, _, _ in rows], ["overall"], cells
    if table == 2:
        cells = [
            _Cell(i, 0, _cfg(system=DOUBLE_INTEGRATOR, family="naive-rd2", v_max=v))
            for i, v in enumerate(VMAX_GRID)
        ]
        return [f"v_max={v:g}" for v in VMAX_GRID], ["overall"], cells
    if table == 3:
        cells = []
        for i, g in enumerate(GAMMA_GRID):
            for j, v in enumerate(VMAX_GRID):
                cells.append(
                    _Cell(
                        i,
                        j,
                        _cfg(
                            system=DOUBLE_INTEGRATOR,
                            family="hocbf",
                            gamma1=g,
                            gamma2=g,
                            v_max=v,
                        ),
                    )
                )
        return (
            [f"gamma={g:g}" for g in GAMMA_GRID],
            [f"v_max={v:g}" for v in VMAX_GRID],
            cells,
        )
    raise ValueError(f"unknown table {table!r} (expected 1, 2 or 3)")


@dataclass(frozen=True)
class SweepResult:
    table: int
    row_labels: tuple
    col_labels: tuple
    trials: np.ndarray  # (R, C) int
    collisions: np.ndarray
    infeasible: np.ndarray
    reached: np.ndarray
    master_seed: int
    trials_per_cell: int

    def rates(self):
        """(collision_pct, infeasibility_pct) as float arrays."""
        t = np.maximum(self.trials, 1)
        return 100.0 * self.collisions / t, 100.0 * self.infeasible / t


def trial_seed(master_seed: int, table: int, cell_index: int, trial_index: int) -> int:
    """Stable per-trial seed; independent of execution order and worker count."""
    ss = np.random.SeedSequence([master_seed, table, cell_index, trial_index])
    return int(ss.generate_state(1, np.uint64)[0])


def _sweep_task(args):
    cell_row, cell_col, template, seed = args
    config = replace(template, seed=seed)
    result, _ = run_trial(config)
    return (
        cell_row,
        cell_col,
        int(result.collided),
        int(result.infeasible_any),
        int(result.reached_goal),
    )


def run_sweep(
    table: int,
    trials: int = 100,
    master_seed: int = 0,
    jobs: int = 1,
    progress=None,
    **env_overrides,
) -> SweepResult:
    """Monte-Carlo sweep over one table's cells.

    env_overrides are forwarded to every TrialConfig (for example
    min_goal_separation). progress, if given, is called as
    progress(done, total) from the aggregating process.
    """
    row_labels, col_labels, cells = table_cells(table)
    if env_overrides:
        cells = [
            _Cell(c.row, c.col, replace(c.template, **env_overrides)) for c in cells
        ]
    shape = (len(row_labels), len(col_labels))
    counts = {
        name: np.zeros(shape, dtype=int)
        for name in ("trials", "collisions", "infeasible", "reached")
    }
    tasks = [
        (c.row, c.col, c.template, trial_seed(master_seed, table, ci, ti))
        for ci, c in enumerate(cells)
        for ti in range(trials)
    ]
    total = len(tasks)
    done = 0

    def absorb(outcome):
        nonlocal done
        r, c, collided, infeasible, reached = outcome
        counts["trials"][r, c] += 1
        counts["collisions"][r, c] += collided
        counts["infeasible"][r, c] += infeasible
        counts["reached"][r, c] += reached
        done += 1
        if progress is not None:
            progress(done, total)

    if jobs <= 1:
        for task in tasks:
            absorb(_sweep_task(task))
    else:
        ctx = multiprocessing.get_context("fork")
        chunk = max(1, total // (jobs * 8))
        with ctx.Pool(jobs) as pool:
            for outcome in pool.imap_unordered(_sweep_task, tasks, chunksize=chunk):
                absorb(outcome)

    return SweepResult(
        table=table,
        row_labels=tuple(row_labels),
        col_labels=tuple(col_labels),
        trials=counts["trials"],
        collisions=counts["collisions"],
        infeasible=counts["infeasible"],
        reached=counts["reached"],
        master_seed=master_seed,
        trials_per_cell=trials,
    )


# -- emission ---------------------------------------------------------------


def _pct(count: int, trials: int) -> str:
    if trials <= 0:
        return "-"
    return f"{100.0 * count / trials:.0f}"


def format_csv(res: SweepResult) -> str:
    lines = ["row,col,trials,collisions,infeasible,collision_pct,infeasibility_pct"]
    for i, rl in enumerate(res.row_labels):
        for j, cl in enumerate(res.col_labels):
            t = int(res.trials[i, j])
            c = int(res.collisions[i, j])
            f = int(res.infeasible[i, j])
            lines.append(f"{rl},{cl},{t},{c},{f},{_pct(c, t)},{_pct(f, t)}")
    return "\n".join(lines) + "\n"


def format_markdown(res: SweepResult) -> str:
    """Grid of `collision% / infeasibility%` cells."""
    header = ["table " + str(res.table)] + list(res.col_labels)
    rows = [header, ["---"] * len(header)]
    for i, rl in enumerate(res.row_labels):
        cells = [rl]
        for j in range(len(res.col_labels)):
            t = int(res.trials[i, j])
            cells.append(
                f"{_pct(int(res.collisions[i, j]), t)}% / "
                f"{_pct(int(res.infeasible[i, j]), t)}%"
            )
        rows.append(cells)
    return "\n".join("| " + " | ".join(r) + " |" for r in rows) + "\n"


def to_json_doc(res: SweepResult) -> dict:
    coll_pct, inf_pct = res.rates()
    return {
        "schema_version": 1,
        "table": res.table,
        "master_seed": res.master_seed,
        "trials_per_cell": res.trials_per_cell,
        "row_labels": list(res.row_labels),
        "col_labels": list(res.col_labels),
        "trials": res.trials.tolist(),
        "collisions": res.collisions.tolist(),
        "infeasible": res.infeasible.tolist(),
        "reached": res.reached.tolist(),
        "collision_pct": coll_pct.tolist(),
        "infeasibility_pct": inf_pct.tolist(),
    }


def format_json(res: SweepResult) -> str:
    return json.dumps(to_json_doc(res), indent=2, sort_keys=True) + "\n"


def write_outputs(res: SweepResult, outdir, figures: bool = True):
    """Write table files (+ figures) under outdir; returns the paths."""
    import os

    os.makedirs(outdir, exist_ok=True)
    stem = os.path.join(outdir, f"table{res.table}")
    paths = []
    for suffix, text in (
        (".csv", format_csv(res)),
        (".md", format_markdown(res)),
        (".json", format_json(res)),
    ):
        path = stem + suffix
        with open(path, "w") as fh:
            fh.write(text)
        paths.append(path)
    if figures:
        from . import plots

        paths.extend(plots.sweep_figures(res, stem))
    return paths
