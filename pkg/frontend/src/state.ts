// ViewState and the reducers that evolve it. Everything here is derived
// from protocol replies plus local UI inputs; no numeric state evolution
// happens on this side of the socket. Reducers are pure: they return a new
// ViewState and never mutate their argument.

import type {
  FieldResult,
  Handshake,
  InputSetResult,
  Reply,
  RequestTag,
  Snapshot,
  StepResult,
  StreamFrame,
  TraceRecord,
  TraceResult,
} from './protocol'

export const TRACE_RING = 5000

export type ConnectionStatus = 'connecting' | 'connected' | 'disconnected'

export type DragMode = 'robot' | 'obstacle' | 'velocity-arrow'

export interface OverlayToggles {
  inputSet: boolean
  field: boolean
  trace: boolean
  contours: boolean
}

export interface SliderValues {
  gamma: number
  gamma1: number
  gamma2: number
  vMax: number
  rateHz: number
}

export interface ViewState {
  connection: ConnectionStatus
  protocolVersion: number | null
  supportedModels: string[]
  supportedFamilies: string[]
  selectedModel: string
  selectedFamily: string
  sliders: SliderValues
  dragMode: DragMode
  overlays: OverlayToggles
  snapshot: Snapshot | null
  trace: TraceRecord[]
  lastRecord: TraceRecord | null
  field: FieldResult | null
  inputSet: InputSetResult | null
  toast: string | null
}

export function initialViewState(): ViewState {
  return {
    connection: 'connecting',
    protocolVersion: null,
    supportedModels: [],
    supportedFamilies: [],
    selectedModel: 'double-integrator-2d',
    selectedFamily: 'hocbf',
    sliders: { gamma: 1, gamma1: 1, gamma2: 1, vMax: 5, rateHz: 50 },
    dragMode: 'robot',
    overlays: { inputSet: false, field: false, trace: true, contours: false },
    snapshot: null,
    trace: [],
    lastRecord: null,
    field: null,
    inputSet: null,
    toast: null,
  }
}

// -- local UI inputs --------------------------------------------------------

export function setConnection(view: ViewState, status: ConnectionStatus): ViewState {
  return { ...view, connection: status }
}

export function setOverlay(
  view: ViewState,
  name: keyof OverlayToggles,
  on: boolean,
): ViewState {
  return { ...view, overlays: { ...view.overlays, [name]: on } }
}

export function setDragMode(view: ViewState, mode: DragMode): ViewState {
  return { ...view, dragMode: mode }
}

export function setSlider(
  view: ViewState,
  name: keyof SliderValues,
  value: number,
): ViewState {
  return { ...view, sliders: { ...view.sliders, [name]: value } }
}

export function selectModel(view: ViewState, kind: string): ViewState {
  return { ...view, selectedModel: kind }
}

export function selectFamily(view: ViewState, family: string): ViewState {
  return { ...view, selectedFamily: family }
}

// -- protocol replies -------------------------------------------------------

function appended(trace: TraceRecord[], records: TraceRecord[]): TraceRecord[] {
  const merged = trace.concat(records)
  return merged.length > TRACE_RING ? merged.slice(merged.length - TRACE_RING) : merged
}

function syncSliders(sliders: SliderValues, snapshot: Snapshot): SliderValues {
  return {
    ...sliders,
    gamma: snapshot.filter.gamma ?? sliders.gamma,
    gamma1: snapshot.filter.gamma1 ?? sliders.gamma1,
    gamma2: snapshot.filter.gamma2 ?? sliders.gamma2,
    vMax: snapshot.v_max ?? sliders.vMax,
  }
}

/** Fold one reply into the view. `tag` is the request tag the reply answers
 * (replies arrive in request order, so the transport keeps that pairing). A
 * rejected message only raises the toast; the rest of the view is unchanged. */
export function applyReply(view: ViewState, tag: RequestTag, reply: Reply): ViewState {
  if (!reply.ok) {
    return { ...view, toast: reply.error }
  }
  const result = reply.result
  switch (tag) {
    case 'init': {
      const handshake = result as unknown as Handshake
      return {
        ...view,
        connection: 'connected',
        protocolVersion: handshake.protocol_version,
        supportedModels: handshake.supported_models,
        supportedFamilies: handshake.supported_families,
        selectedModel: handshake.model.kind,
        selectedFamily: handshake.filter.family,
        sliders: syncSliders(view.sliders, handshake),
        snapshot: handshake,
        trace: [],
        lastRecord: null,
        field: null,
        inputSet: null,
        toast: null,
      }
    }
    case 'set_params':
    case 'set_state': {
      const snapshot = result as unknown as Snapshot
      return {
        ...view,
        snapshot,
        selectedFamily: snapshot.filter.family,
        sliders: syncSliders(view.sliders, snapshot),
        toast: null,
      }
    }
    case 'reset': {
      const snapshot = result as unknown as Snapshot
      return {
        ...view,
        snapshot,
        trace: [],
        lastRecord: null,
        sliders: syncSliders(view.sliders, snapshot),
        toast: null,
      }
    }
    case 'step': {
      const step = result as unknown as StepResult
      if (!view.snapshot) {
        return { ...view, toast: null }
      }
      const records = step.records
      const infeasible = records.filter((r) => !r.feasible).length
      const clearances = records.map((r) => r.clearance)
      return {
        ...view,
        snapshot: {
          ...view.snapshot,
          x: step.x,
          t: step.t,
          steps: view.snapshot.steps + records.length,
          collided: step.collided,
          reached_goal: step.reached_goal,
          infeasible_steps: view.snapshot.infeasible_steps + infeasible,
          min_clearance: Math.min(view.snapshot.min_clearance, ...clearances),
        },
        trace: appended(view.trace, records),
        lastRecord: records.length ? records[records.length - 1] : view.lastRecord,
        toast: null,
      }
    }
    case 'run': {
      if (!view.snapshot) {
        return { ...view, toast: null }
      }
      return { ...view, snapshot: { ...view.snapshot, running: true }, toast: null }
    }
    case 'pause': {
      if (!view.snapshot) {
        return { ...view, toast: null }
      }
      const steps = (result as { steps: number }).steps
      return {
        ...view,
        snapshot: { ...view.snapshot, running: false, steps },
        toast: null,
      }
    }
    case 'get_trace': {
      const trace = result as unknown as TraceResult
      const last = trace.records.length
        ? trace.records[trace.records.length - 1]
        : view.lastRecord
      const snapshot = view.snapshot
        ? { ...view.snapshot, steps: trace.total_steps }
        : view.snapshot
      return { ...view, snapshot, trace: trace.records, lastRecord: last, toast: null }
    }
    case 'query_feasibility_field':
      return { ...view, field: result as unknown as FieldResult, toast: null }
    case 'query_input_set':
      return { ...view, inputSet: result as unknown as InputSetResult, toast: null }
  }
}

/** Fold one run-mode stream frame into the view. Stream records carry the
 * post-step state; authoritative collided/min_clearance flags resync on the
 * next snapshot-bearing reply. */
export function applyStream(view: ViewState, frame: StreamFrame): ViewState {
  if (!view.snapshot || frame.session !== view.snapshot.session) {
    return view
  }
  const records = frame.records
  if (!records.length) {
    return frame.done
      ? { ...view, snapshot: { ...view.snapshot, running: false } }
      : view
  }
  const last = records[records.length - 1]
  const infeasible = records.filter((r) => !r.feasible).length
  return {
    ...view,
    snapshot: {
      ...view.snapshot,
      x: last.x,
      t: last.t,
      steps: view.snapshot.steps + records.length,
      running: frame.done ? false : view.snapshot.running,
      reached_goal: frame.done ? true : view.snapshot.reached_goal,
      infeasible_steps: view.snapshot.infeasible_steps + infeasible,
    },
    trace: appended(view.trace, records),
    lastRecord: last,
  }
}
