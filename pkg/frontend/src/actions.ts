// User actions and the protocol messages they emit. The mapping is a pure
// function of (action, view, id allocator), so a replayed action script
// always produces an identical message log.
//
// Documented action -> message table:
//   connect                -> init
//   pick-model / new-world -> init (fresh sampled environment, via connect)
//   drag-robot             -> set_state (position replaced, rest kept)
//   drag-velocity          -> set_state (velocity replaced; double integrator)
//   drag/add/remove obstacle -> init with the edited environment
//   slider-commit          -> set_params, then active overlay refreshes
//   family-commit          -> set_params, then active overlay refreshes
//   step                   -> exactly one step message (count 1)
//   run                    -> run
//   pause                  -> pause, then active overlay refreshes
//   reset                  -> reset, then active overlay refreshes
//   toggle-overlay on      -> the overlay's query (field / input set)
//   toggle-overlay off, trace/contour toggles -> no messages
//   refresh-overlays       -> active overlay queries (used after re-init)
//   fetch-trace            -> get_trace
//
// Overlay refreshes are ordered field first, then input set. Stepping never
// auto-refreshes overlays; pause or an explicit toggle brings them current.

import type { EnvironmentDoc, Request, Snapshot } from './protocol'
import type { OverlayToggles, ViewState } from './state'

export const SINGLE_INTEGRATOR = 'single-integrator-2d'
export const DOUBLE_INTEGRATOR = 'double-integrator-2d'
export const MANIPULATOR = 'planar-manipulator-3dof'

export const FIELD_RESOLUTION = 25

export interface IdAllocator {
  next(): number
}

export function makeIdAllocator(start = 1): IdAllocator {
  let current = start
  return {
    next() {
      const id = current
      current += 1
      return id
    },
  }
}

export interface ConnectAction {
  kind: 'connect'
  model: string
  family: string
  seed: number
  gamma?: number
  gamma1?: number
  gamma2?: number
  vMax?: number
  environment?: EnvironmentDoc
}

export type UserAction =
  | ConnectAction
  | { kind: 'drag-robot'; position: [number, number] }
  | { kind: 'drag-velocity'; velocity: [number, number] }
  | { kind: 'drag-obstacle'; index: number; center: [number, number] }
  | { kind: 'add-obstacle'; center: [number, number] }
  | { kind: 'remove-obstacle'; index: number }
  | { kind: 'slider-commit'; name: 'gamma' | 'gamma1' | 'gamma2' | 'v_max'; value: number }
  | { kind: 'family-commit'; family: string }
  | { kind: 'step' }
  | { kind: 'run' }
  | { kind: 'pause' }
  | { kind: 'reset' }
  | { kind: 'toggle-overlay'; name: keyof OverlayToggles; on: boolean }
  | { kind: 'refresh-overlays' }
  | { kind: 'fetch-trace'; count: number }

export interface FieldQuery {
  dims: [number, number]
  axes: [[number, number, number], [number, number, number]]
}

/** Default feasibility-field slice for a session. The double integrator
 * shows the (p_x, v_x) plane; planar robots show the position plane; the
 * arm shows its first two joint angles. */
export function defaultFieldQuery(snapshot: Snapshot): FieldQuery {
  const workspace = snapshot.environment.workspace
  if (snapshot.model.kind === DOUBLE_INTEGRATOR) {
    const vMax = snapshot.v_max ?? 5
    return {
      dims: [0, 2],
      axes: [
        [0, workspace, FIELD_RESOLUTION],
        [-vMax, vMax, FIELD_RESOLUTION],
      ],
    }
  }
  if (snapshot.model.kind === MANIPULATOR) {
    return {
      dims: [0, 1],
      axes: [
        [-Math.PI, Math.PI, FIELD_RESOLUTION],
        [-Math.PI, Math.PI, FIELD_RESOLUTION],
      ],
    }
  }
  return {
    dims: [0, 1],
    axes: [
      [0, workspace, FIELD_RESOLUTION],
      [0, workspace, FIELD_RESOLUTION],
    ],
  }
}

function request(
  ids: IdAllocator,
  type: Request['type'],
  session: string | undefined,
  payload: Record<string, unknown>,
): Request {
  const msg: Request = { type, id: ids.next(), payload }
  if (session !== undefined) {
    msg.session = session
  }
  return msg
}

function overlayRefreshes(
  view: ViewState,
  snapshot: Snapshot,
  ids: IdAllocator,
): Request[] {
  const out: Request[] = []
  if (view.overlays.field) {
    out.push(
      request(ids, 'query_feasibility_field', snapshot.session, {
        ...defaultFieldQuery(snapshot),
      }),
    )
  }
  if (view.overlays.inputSet) {
    out.push(request(ids, 'query_input_set', snapshot.session, {}))
  }
  return out
}

function initPayload(action: ConnectAction): Record<string, unknown> {
  const payload: Record<string, unknown> = {
    model: action.model,
    family: action.family,
    seed: action.seed,
  }
  if (action.gamma !== undefined) payload.gamma = action.gamma
  if (action.gamma1 !== undefined) payload.gamma1 = action.gamma1
  if (action.gamma2 !== undefined) payload.gamma2 = action.gamma2
  if (action.vMax !== undefined) payload.v_max = action.vMax
  if (action.environment !== undefined) payload.environment = action.environment
  return payload
}

/** Re-init payload for environment edits: same model, filter, and seed as
 * the live session, with the edited environment document. */
function reinitPayload(snapshot: Snapshot, environment: EnvironmentDoc): Record<string, unknown> {
  const filter = snapshot.filter
  const payload: Record<string, unknown> = {
    model: snapshot.model.kind,
    family: filter.family,
    seed: snapshot.environment.seed,
    environment,
  }
  if (filter.gamma !== undefined) payload.gamma = filter.gamma
  if (filter.gamma1 !== undefined) payload.gamma1 = filter.gamma1
  if (filter.gamma2 !== undefined) payload.gamma2 = filter.gamma2
  if (snapshot.v_max !== null) payload.v_max = snapshot.v_max
  return payload
}

function editedCenters(doc: EnvironmentDoc, edit: (centers: number[][]) => number[][]): EnvironmentDoc {
  return { ...doc, obstacle_centers: edit(doc.obstacle_centers.map((c) => c.slice())) }
}

/** The messages a user action emits, in send order. Actions that need a live
 * session produce nothing until the init reply has arrived. */
export function messagesForAction(
  action: UserAction,
  view: ViewState,
  ids: IdAllocator,
): Request[] {
  if (action.kind === 'connect') {
    return [request(ids, 'init', undefined, initPayload(action))]
  }

  const snapshot = view.snapshot
  if (!snapshot) {
    return []
  }
  const sid = snapshot.session

  switch (action.kind) {
    case 'drag-robot': {
      const x = snapshot.x.slice()
      x[0] = action.position[0]
      x[1] = action.position[1]
      return [
        request(ids, 'set_state', sid, { x }),
        ...overlayRefreshes(view, snapshot, ids),
      ]
    }
    case 'drag-velocity': {
      if (snapshot.model.kind !== DOUBLE_INTEGRATOR) {
        return []
      }
      const x = snapshot.x.slice()
      x[2] = action.velocity[0]
      x[3] = action.velocity[1]
      return [
        request(ids, 'set_state', sid, { x }),
        ...overlayRefreshes(view, snapshot, ids),
      ]
    }
    case 'drag-obstacle': {
      const doc = editedCenters(snapshot.environment, (centers) => {
        if (action.index < 0 || action.index >= centers.length) {
          return centers
        }
        centers[action.index] = [action.center[0], action.center[1]]
        return centers
      })
      return [request(ids, 'init', undefined, reinitPayload(snapshot, doc))]
    }
    case 'add-obstacle': {
      const doc = editedCenters(snapshot.environment, (centers) => {
        centers.push([action.center[0], action.center[1]])
        return centers
      })
      return [request(ids, 'init', undefined, reinitPayload(snapshot, doc))]
    }
    case 'remove-obstacle': {
      // The session math expects at least one obstacle, so the last one
      // cannot be removed.
      if (
        snapshot.environment.obstacle_centers.length <= 1 ||
        action.index < 0 ||
        action.index >= snapshot.environment.obstacle_centers.length
      ) {
        return []
      }
      const doc = editedCenters(snapshot.environment, (centers) => {
        centers.splice(action.index, 1)
        return centers
      })
      return [request(ids, 'init', undefined, reinitPayload(snapshot, doc))]
    }
    case 'slider-commit':
      return [
        request(ids, 'set_params', sid, { [action.name]: action.value }),
        ...overlayRefreshes(view, snapshot, ids),
      ]
    case 'family-commit':
      return [
        request(ids, 'set_params', sid, { family: action.family }),
        ...overlayRefreshes(view, snapshot, ids),
      ]
    case 'step':
      return [request(ids, 'step', sid, { count: 1 })]
    case 'run':
      return [request(ids, 'run', sid, { rate_hz: view.sliders.rateHz })]
    case 'pause':
      return [
        request(ids, 'pause', sid, {}),
        ...overlayRefreshes(view, snapshot, ids),
      ]
    case 'reset':
      return [
        request(ids, 'reset', sid, {}),
        ...overlayRefreshes(view, snapshot, ids),
      ]
    case 'toggle-overlay': {
      if (!action.on) {
        return []
      }
      if (action.name === 'field') {
        return [
          request(ids, 'query_feasibility_field', sid, {
            ...defaultFieldQuery(snapshot),
          }),
        ]
      }
      if (action.name === 'inputSet') {
        return [request(ids, 'query_input_set', sid, {})]
      }
      return []
    }
    case 'refresh-overlays':
      return overlayRefreshes(view, snapshot, ids)
    case 'fetch-trace':
      return [request(ids, 'get_trace', sid, { count: action.count })]
  }
}
