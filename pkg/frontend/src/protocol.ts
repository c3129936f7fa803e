// Playground session protocol, version 1. Field names mirror the wire
// format exactly; one JSON object per frame.
//
//   request:  {"type": <tag>, "id": <int>, "session": <sid>, "payload": {...}}
//   reply:    {"type": "reply", "id": <echoed>, "ok": true, "result": {...}}
//             {"type": "reply", "id": <echoed>, "ok": false, "error": "..."}
//   stream:   {"type": "stream", "session": <sid>, "records": [...], "done": bool}

export const PROTOCOL_VERSION = 1

export type RequestTag =
  | 'init'
  | 'set_params'
  | 'set_state'
  | 'step'
  | 'run'
  | 'pause'
  | 'reset'
  | 'get_trace'
  | 'query_feasibility_field'
  | 'query_input_set'

export interface Request {
  type: RequestTag
  id: number
  session?: string
  payload: Record<string, unknown>
}

export interface ReplyOk {
  type: 'reply'
  id: number | null
  ok: true
  result: Record<string, unknown>
}

export interface ReplyErr {
  type: 'reply'
  id: number | null
  ok: false
  error: string
}

export type Reply = ReplyOk | ReplyErr

export interface TraceRecord {
  t: number
  x: number[]
  u: number[]
  h: number[]
  feasible: boolean
  clearance: number
}

export interface StreamFrame {
  type: 'stream'
  session: string
  records: TraceRecord[]
  done: boolean
}

export type ServerMessage = Reply | StreamFrame

export interface ModelInfo {
  kind: string
  state_dim: number
  input_dim: number
  input_box: number[]
  link_lengths: number[] | null
  base: number[] | null
}

export interface EnvironmentDoc {
  schema_version: number
  model: string
  seed: number
  workspace: number
  obstacle_centers: number[][]
  obstacle_radius: number
  robot_radius: number
  start_state: number[]
  goal: number[]
}

export interface FilterInfo {
  family: string
  gamma?: number
  gamma1?: number
  gamma2?: number
  dt?: number
}

export interface BarrierInfo {
  kind: string
  relative_degree: number
  center?: number[]
  combined_radius?: number
  v_max?: number
  link_index?: number
  normal?: number[]
  offset?: number
}

export interface Snapshot {
  session: string
  model: ModelInfo
  environment: EnvironmentDoc
  filter: FilterInfo
  v_max: number | null
  dt: number
  goal_tolerance: number
  x: number[]
  t: number
  steps: number
  running: boolean
  collided: boolean
  reached_goal: boolean
  infeasible_steps: number
  min_clearance: number
  barriers: BarrierInfo[]
}

export interface Handshake extends Snapshot {
  protocol_version: number
  supported_models: string[]
  supported_families: string[]
}

export interface StepResult {
  records: TraceRecord[]
  x: number[]
  t: number
  collided: boolean
  reached_goal: boolean
}

export interface TraceResult {
  records: TraceRecord[]
  total_steps: number
}

export interface FieldResult {
  dims: number[]
  shape: number[]
  axes: number[][]
  margins: number[][]
}

export interface InputSetRow {
  a: number[]
  b: number
}

export interface InputSetResult {
  rows: InputSetRow[]
  box: Array<number | null>
  u_nom: number[]
  u: number[] | null
  feasible: boolean
}

export function isReply(msg: ServerMessage): msg is Reply {
  return msg.type === 'reply'
}

export function isStream(msg: ServerMessage): msg is StreamFrame {
  return msg.type === 'stream'
}

export function parseServerMessage(raw: string): ServerMessage | null {
  let doc: unknown
  try {
    doc = JSON.parse(raw)
  } catch {
    return null
  }
  if (typeof doc !== 'object' || doc === null) {
    return null
  }
  const tag = (doc as { type?: unknown }).type
  if (tag !== 'reply' && tag !== 'stream') {
    return null
  }
  return doc as ServerMessage
}
