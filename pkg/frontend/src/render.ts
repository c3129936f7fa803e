// Scene construction: ViewState in, a flat list of draw operations out.
// Ops carry world coordinates (or inset-panel coordinates for the input set
// and feasibility field); the canvas adapter in main.ts maps them to pixels.
// Keeping this a pure data transform means the whole scene is testable
// without a browser, and every number in it traces back to a protocol reply.

import { MANIPULATOR, DOUBLE_INTEGRATOR } from './actions'
import { admissiblePolygon, armJointPoints, pointDistance, segmentDistance } from './geometry'
import type { Vec2 } from './geometry'
import type { Snapshot } from './protocol'
import type { ViewState } from './state'

export const OBSTACLE_COLOR = '#d64550'
export const GOAL_COLOR = '#1c9c50'
export const ROBOT_COLOR = '#2c6cf5'
export const TRACE_COLOR = 'rgba(44, 108, 245, 0.55)'
export const VELOCITY_COLOR = '#f0a030'
export const CONTOUR_COLOR = 'rgba(214, 69, 80, 0.45)'
export const NEGATIVE_CELL_COLOR = 'rgba(214, 69, 80, 0.35)'
export const POSITIVE_CELL_COLOR = 'rgba(28, 156, 80, 0.18)'
export const INPUT_SET_FILL = 'rgba(28, 156, 80, 0.15)'
export const INPUT_SET_STROKE = 'rgba(28, 156, 80, 0.6)'

/** Seconds of lookahead the velocity arrow previews. */
export const VELOCITY_PREVIEW = 0.5

/** Extra clearance rings drawn around the zero level set of each obstacle. */
export const CONTOUR_OFFSETS = [0.25, 0.5]

export type Space = 'world' | 'input' | 'field'

export type DrawOp =
  | { op: 'clear' }
  | {
      op: 'field-cells'
      space: 'field'
      dims: number[]
      xs: number[]
      ys: number[]
      values: number[][]
      negativeColor: string
      positiveColor: string
    }
  | {
      op: 'circle'
      space: Space
      role: string
      center: Vec2
      radius: number
      fill: string | null
      stroke: string | null
      width?: number
    }
  | { op: 'cross'; space: 'world'; role: 'goal'; center: Vec2; size: number; color: string }
  | { op: 'segment'; space: 'world'; role: string; from: Vec2; to: Vec2; color: string; width: number }
  | { op: 'polyline'; space: 'world'; role: 'trace'; points: Vec2[]; color: string; width: number }
  | { op: 'arrow'; space: Space; role: string; from: Vec2; to: Vec2; color: string; width: number }
  | { op: 'polygon'; space: 'input'; role: 'admissible-set'; points: Vec2[]; fill: string; stroke: string }
  | { op: 'point'; space: 'input'; role: 'u-nominal' | 'u-filtered'; at: Vec2; color: string }
  | { op: 'panel'; space: 'input'; role: 'input-panel'; halfSpan: number; feasible: boolean }
  | { op: 'badge'; role: string; text: string; tone: string }
  | { op: 'label'; role: string; text: string }

function fmt(value: number): string {
  return Math.abs(value) >= 1000 ? value.toFixed(0) : value.toPrecision(3)
}

/** Display-side overlap check using the drawn geometry (robot disk or arm
 * links against obstacle disks). Mirrors the clearance convention of the
 * replies: negative exactly when the sprites overlap on screen. */
export function overlapClearance(snapshot: Snapshot): number {
  const env = snapshot.environment
  const combined = env.obstacle_radius + env.robot_radius
  const centers = env.obstacle_centers
  if (centers.length === 0) {
    return Infinity
  }
  if (snapshot.model.kind === MANIPULATOR) {
    const links = armJointPoints(
      (snapshot.model.base ?? [0, 0]) as Vec2,
      snapshot.model.link_lengths ?? [],
      snapshot.x,
    )
    let best = Infinity
    for (let k = 0; k + 1 < links.length; k += 1) {
      for (const c of centers) {
        best = Math.min(best, segmentDistance([c[0], c[1]], links[k], links[k + 1]) - combined)
      }
    }
    return best
  }
  const p: Vec2 = [snapshot.x[0], snapshot.x[1]]
  let best = Infinity
  for (const c of centers) {
    best = Math.min(best, pointDistance(p, [c[0], c[1]]) - combined)
  }
  return best
}

function fieldOps(view: ViewState, ops: DrawOp[]): void {
  if (!view.overlays.field || !view.field) {
    return
  }
  ops.push({
    op: 'field-cells',
    space: 'field',
    dims: view.field.dims,
    xs: view.field.axes[0],
    ys: view.field.axes[1],
    values: view.field.margins,
    negativeColor: NEGATIVE_CELL_COLOR,
    positiveColor: POSITIVE_CELL_COLOR,
  })
}

function contourOps(view: ViewState, snapshot: Snapshot, ops: DrawOp[]): void {
  if (!view.overlays.contours) {
    return
  }
  const seen = new Set<string>()
  for (const barrier of snapshot.barriers) {
    if (!barrier.center || barrier.combined_radius === undefined) {
      continue
    }
    const key = `${barrier.center[0]},${barrier.center[1]}`
    if (seen.has(key)) {
      continue
    }
    seen.add(key)
    const center: Vec2 = [barrier.center[0], barrier.center[1]]
    for (const extra of [0, ...CONTOUR_OFFSETS]) {
      ops.push({
        op: 'circle',
        space: 'world',
        role: 'barrier-contour',
        center,
        radius: barrier.combined_radius + extra,
        fill: null,
        stroke: CONTOUR_COLOR,
        width: extra === 0 ? 1.6 : 0.8,
      })
    }
  }
}

function worldOps(view: ViewState, snapshot: Snapshot, ops: DrawOp[]): void {
  const env = snapshot.environment
  for (const c of env.obstacle_centers) {
    ops.push({
      op: 'circle',
      space: 'world',
      role: 'obstacle',
      center: [c[0], c[1]],
      radius: env.obstacle_radius,
      fill: OBSTACLE_COLOR,
      stroke: null,
    })
  }
  ops.push({
    op: 'cross',
    space: 'world',
    role: 'goal',
    center: [env.goal[0], env.goal[1]],
    size: 0.3,
    color: GOAL_COLOR,
  })

  if (view.overlays.trace && view.trace.length > 1) {
    const arm = snapshot.model.kind === MANIPULATOR
    const base = (snapshot.model.base ?? [0, 0]) as Vec2
    const lengths = snapshot.model.link_lengths ?? []
    const points: Vec2[] = view.trace.map((r) => {
      if (arm) {
        const joints = armJointPoints(base, lengths, r.x)
        return joints[joints.length - 1]
      }
      return [r.x[0], r.x[1]]
    })
    ops.push({ op: 'polyline', space: 'world', role: 'trace', points, color: TRACE_COLOR, width: 1.2 })
  }

  if (snapshot.model.kind === MANIPULATOR) {
    const joints = armJointPoints(
      (snapshot.model.base ?? [0, 0]) as Vec2,
      snapshot.model.link_lengths ?? [],
      snapshot.x,
    )
    for (let k = 0; k + 1 < joints.length; k += 1) {
      ops.push({
        op: 'segment',
        space: 'world',
        role: 'arm-link',
        from: joints[k],
        to: joints[k + 1],
        color: ROBOT_COLOR,
        width: 0.12,
      })
    }
    for (const joint of joints) {
      ops.push({
        op: 'circle',
        space: 'world',
        role: 'arm-joint',
        center: joint,
        radius: 0.09,
        fill: ROBOT_COLOR,
        stroke: null,
      })
    }
    return
  }

  ops.push({
    op: 'circle',
    space: 'world',
    role: 'robot',
    center: [snapshot.x[0], snapshot.x[1]],
    radius: env.robot_radius,
    fill: ROBOT_COLOR,
    stroke: null,
  })

  if (snapshot.model.kind === DOUBLE_INTEGRATOR) {
    const from: Vec2 = [snapshot.x[0], snapshot.x[1]]
    const to: Vec2 = [
      snapshot.x[0] + snapshot.x[2] * VELOCITY_PREVIEW,
      snapshot.x[1] + snapshot.x[3] * VELOCITY_PREVIEW,
    ]
    ops.push({
      op: 'arrow',
      space: 'world',
      role: 'velocity',
      from,
      to,
      color: VELOCITY_COLOR,
      width: 2,
    })
  }
}

function inputSetOps(view: ViewState, ops: DrawOp[]): void {
  if (!view.overlays.inputSet || !view.inputSet) {
    return
  }
  const result = view.inputSet
  const finite = result.box.filter((v): v is number => v !== null)
  const fallback = finite.length ? Math.max(...finite) : 6
  const halfSpan = Math.max(...finite, fallback) * 1.15
  ops.push({
    op: 'panel',
    space: 'input',
    role: 'input-panel',
    halfSpan,
    feasible: result.feasible,
  })
  const polygon = admissiblePolygon(
    result.rows.map((r) => ({ a: [r.a[0], r.a[1]] as Vec2, b: r.b })),
    result.box,
    halfSpan,
  )
  if (polygon.length >= 3) {
    ops.push({
      op: 'polygon',
      space: 'input',
      role: 'admissible-set',
      points: polygon,
      fill: INPUT_SET_FILL,
      stroke: INPUT_SET_STROKE,
    })
  }
  ops.push({
    op: 'point',
    space: 'input',
    role: 'u-nominal',
    at: [result.u_nom[0], result.u_nom[1]],
    color: OBSTACLE_COLOR,
  })
  if (result.u) {
    const u: Vec2 = [result.u[0], result.u[1]]
    ops.push({
      op: 'arrow',
      space: 'input',
      role: 'filter-correction',
      from: [result.u_nom[0], result.u_nom[1]],
      to: u,
      color: INPUT_SET_STROKE,
      width: 1.4,
    })
    ops.push({ op: 'point', space: 'input', role: 'u-filtered', at: u, color: GOAL_COLOR })
  }
}

function badgeOps(view: ViewState, snapshot: Snapshot, ops: DrawOp[]): void {
  if (view.connection === 'disconnected') {
    ops.push({ op: 'badge', role: 'disconnected', text: 'disconnected', tone: '#888888' })
  }
  if (snapshot.collided || overlapClearance(snapshot) < 0) {
    ops.push({ op: 'badge', role: 'collision', text: 'collision', tone: OBSTACLE_COLOR })
  }
  const lastInfeasible = view.lastRecord !== null && !view.lastRecord.feasible
  if (lastInfeasible || snapshot.infeasible_steps > 0) {
    ops.push({
      op: 'badge',
      role: 'infeasible',
      text: `filter infeasible (${snapshot.infeasible_steps} steps)`,
      tone: VELOCITY_COLOR,
    })
  }
  if (snapshot.reached_goal) {
    ops.push({ op: 'badge', role: 'goal-reached', text: 'goal reached', tone: GOAL_COLOR })
  }
}

function labelOps(view: ViewState, snapshot: Snapshot, ops: DrawOp[]): void {
  ops.push({
    op: 'label',
    role: 'clock',
    text: `t = ${snapshot.t.toFixed(2)} s, step ${snapshot.steps}`,
  })
  if (view.lastRecord) {
    const h = view.lastRecord.h
    if (h.length) {
      ops.push({
        op: 'label',
        role: 'barrier-values',
        text: `min h = ${fmt(Math.min(...h))} over ${h.length} barriers`,
      })
    }
  }
  ops.push({
    op: 'label',
    role: 'clearance',
    text: `min clearance = ${fmt(snapshot.min_clearance)}`,
  })
}

/** Build the scene for the current view. With no snapshot yet, only a
 * connection notice is drawn; with a stale (disconnected) snapshot, the last
 * scene is still produced, plus the disconnected badge. */
export function renderScene(view: ViewState): DrawOp[] {
  const ops: DrawOp[] = [{ op: 'clear' }]
  const snapshot = view.snapshot
  if (!snapshot) {
    ops.push({
      op: 'label',
      role: 'connection',
      text: view.connection === 'connecting' ? 'connecting...' : 'disconnected',
    })
    return ops
  }
  fieldOps(view, ops)
  contourOps(view, snapshot, ops)
  worldOps(view, snapshot, ops)
  inputSetOps(view, ops)
  badgeOps(view, snapshot, ops)
  labelOps(view, snapshot, ops)
  if (view.toast) {
    ops.push({ op: 'label', role: 'toast', text: view.toast })
  }
  return ops
}
