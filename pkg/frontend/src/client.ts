// WebSocket transport: sends requests, pairs each reply with the tag of the
// request it answers (the bridge replies in request order), and forwards
// stream frames. The socket is abstracted behind SocketLike so tests can
// drive the client with a scripted fake.

import { isStream, parseServerMessage } from './protocol'
import type { Reply, Request, RequestTag, StreamFrame } from './protocol'

export const SOCKET_OPEN = 1

export interface SocketLike {
  readyState: number
  send(data: string): void
  close(): void
  onopen: ((ev?: unknown) => void) | null
  onmessage: ((ev: { data: unknown }) => void) | null
  onclose: ((ev?: unknown) => void) | null
  onerror: ((ev?: unknown) => void) | null
}

export interface ClientDelegate {
  onOpen(): void
  onReply(tag: RequestTag, reply: Reply): void
  onStream(frame: StreamFrame): void
  onClose(): void
  /** Frames that parse to nothing or match no outstanding request. */
  onProtocolNoise(detail: string): void
}

interface PendingEntry {
  id: number
  tag: RequestTag
}

export class PlaygroundClient {
  private readonly pending: PendingEntry[] = []

  constructor(
    private readonly socket: SocketLike,
    private readonly delegate: ClientDelegate,
  ) {
    socket.onopen = () => this.delegate.onOpen()
    socket.onclose = () => this.delegate.onClose()
    socket.onerror = () => this.delegate.onClose()
    socket.onmessage = (ev) => this.receive(ev.data)
  }

  /** Send one request; false (and nothing queued) when the socket is not
   * open, so a dropped action never desynchronizes reply pairing. */
  send(request: Request): boolean {
    if (this.socket.readyState !== SOCKET_OPEN) {
      return false
    }
    this.pending.push({ id: request.id, tag: request.type })
    this.socket.send(JSON.stringify(request))
    return true
  }

  sendAll(requests: Request[]): boolean {
    let all = true
    for (const request of requests) {
      all = this.send(request) && all
    }
    return all
  }

  pendingCount(): number {
    return this.pending.length
  }

  close(): void {
    this.socket.close()
  }

  private receive(data: unknown): void {
    if (typeof data !== 'string') {
      this.delegate.onProtocolNoise('non-text frame')
      return
    }
    const message = parseServerMessage(data)
    if (message === null) {
      this.delegate.onProtocolNoise(`unparseable frame: ${data.slice(0, 80)}`)
      return
    }
    if (isStream(message)) {
      this.delegate.onStream(message)
      return
    }
    this.dispatchReply(message)
  }

  private dispatchReply(reply: Reply): void {
    if (reply.id === null) {
      // Unsolicited (for example the transport's bad-frame notice); the
      // pending queue stays aligned.
      this.delegate.onProtocolNoise(reply.ok ? 'unsolicited reply' : reply.error)
      return
    }
    const index = this.pending.findIndex((entry) => entry.id === reply.id)
    if (index === -1) {
      this.delegate.onProtocolNoise(`reply to unknown id ${reply.id}`)
      return
    }
    const entry = this.pending[index]
    this.pending.splice(0, index + 1)
    this.delegate.onReply(entry.tag, reply)
  }
}

export function connectPlayground(
  url: string,
  delegate: ClientDelegate,
  factory: (url: string) => SocketLike = (u) => new WebSocket(u) as unknown as SocketLike,
): PlaygroundClient {
  return new PlaygroundClient(factory(url), delegate)
}
