// Shared fixture loading and the script replayer. A fixture is a recorded
// protocol session: the action script, every request/reply exchange it
// produced, and any stream frames, plus standalone exchanges for reducer
// tests. The replayer re-derives the outbound messages from the scripted
// actions and folds the recorded replies into a ViewState, collecting both
// message logs so tests can assert they are identical.

import { readFileSync } from 'node:fs'
import { fileURLToPath } from 'node:url'

import { makeIdAllocator, messagesForAction } from '../src/actions'
import type { UserAction } from '../src/actions'
import type { Reply, Request, StreamFrame } from '../src/protocol'
import {
  applyReply,
  applyStream,
  initialViewState,
  setOverlay,
  setSlider,
} from '../src/state'
import type { SliderValues, ViewState } from '../src/state'

export interface FixtureExchange {
  request: Request
  reply: Reply
}

export type FixtureEvent =
  | { kind: 'local'; name: string; value: number }
  | { kind: 'action'; action: UserAction }
  | { kind: 'exchange'; request: Request; reply: Reply }
  | { kind: 'stream'; frame: StreamFrame }

export interface FixtureDoc {
  name: string
  script: FixtureEvent[]
  extras: FixtureExchange[]
}

export function loadFixture(filename: string): FixtureDoc {
  const path = fileURLToPath(new URL(`./fixtures/${filename}`, import.meta.url))
  return JSON.parse(readFileSync(path, 'utf8')) as FixtureDoc
}

export interface ReplayResult {
  view: ViewState
  /** Messages the action pipeline derived, in send order. */
  sent: Request[]
  /** Messages the fixture recorded, in the same order. */
  recorded: Request[]
}

/** Replay a fixture script: local inputs go through the local reducers,
 * actions through messagesForAction, recorded replies through applyReply,
 * stream frames through applyStream. Stops (inclusive) after the exchange
 * whose request id is `upToId`, when given. */
export function replayScript(doc: FixtureDoc, upToId?: number): ReplayResult {
  let view = initialViewState()
  const ids = makeIdAllocator()
  const sent: Request[] = []
  const recorded: Request[] = []
  const events = doc.script
  let i = 0
  while (i < events.length) {
    const event = events[i]
    if (event.kind === 'local') {
      view = setSlider(view, event.name as keyof SliderValues, event.value)
      i += 1
      continue
    }
    if (event.kind === 'stream') {
      view = applyStream(view, event.frame)
      i += 1
      continue
    }
    if (event.kind === 'exchange') {
      throw new Error(`exchange at index ${i} not owned by an action`)
    }
    // action event: the UI applies overlay toggles locally, then derives
    // the messages, then consumes one recorded exchange per message.
    if (event.action.kind === 'toggle-overlay') {
      view = setOverlay(view, event.action.name, event.action.on)
    }
    const derived = messagesForAction(event.action, view, ids)
    i += 1
    for (const message of derived) {
      const next = events[i]
      if (!next || next.kind !== 'exchange') {
        throw new Error(
          `action ${event.action.kind} derived ${derived.length} messages but the fixture recorded fewer exchanges`,
        )
      }
      sent.push(message)
      recorded.push(next.request)
      view = applyReply(view, next.request.type, next.reply)
      i += 1
      if (upToId !== undefined && next.request.id === upToId) {
        return { view, sent, recorded }
      }
    }
  }
  return { view, sent, recorded }
}

/** The recorded reply of the exchange with the given request id. */
export function replyOf(doc: FixtureDoc, id: number): Reply {
  for (const event of doc.script) {
    if (event.kind === 'exchange' && event.request.id === id) {
      return event.reply
    }
  }
  throw new Error(`no exchange with id ${id}`)
}

/** The ok-result of the exchange with the given request id. */
export function resultOf<T>(doc: FixtureDoc, id: number): T {
  for (const event of doc.script) {
    if (event.kind === 'exchange' && event.request.id === id) {
      if (!event.reply.ok) {
        throw new Error(`exchange ${id} is an error reply`)
      }
      return event.reply.result as T
    }
  }
  throw new Error(`no exchange with id ${id}`)
}

export function countNegative(margins: number[][]): number {
  let count = 0
  for (const row of margins) {
    for (const value of row) {
      if (value < 0) {
        count += 1
      }
    }
  }
  return count
}
