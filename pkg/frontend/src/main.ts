// Browser entry point: wires DOM controls and the canvas to the protocol
// client. All state changes flow through the reducers in state.ts on
// replies; this file only forwards user input and executes draw ops.

import { makeIdAllocator, messagesForAction, DOUBLE_INTEGRATOR } from './actions'
import type { UserAction } from './actions'
import { connectPlayground, PlaygroundClient } from './client'
import type { Vec2 } from './geometry'
import { renderScene, VELOCITY_PREVIEW } from './render'
import type { DrawOp } from './render'
import {
  applyReply,
  applyStream,
  initialViewState,
  selectFamily,
  selectModel,
  setConnection,
  setDragMode,
  setOverlay,
  setSlider,
} from './state'
import type { DragMode, OverlayToggles, SliderValues, ViewState } from './state'

const DRAG_SEND_INTERVAL_MS = 60

interface Rect {
  x: number
  y: number
  w: number
  h: number
}

class Mapper {
  constructor(
    private readonly rect: Rect,
    private readonly xRange: [number, number],
    private readonly yRange: [number, number],
  ) {}

  toCanvas(p: Vec2): Vec2 {
    const fx = (p[0] - this.xRange[0]) / (this.xRange[1] - this.xRange[0])
    const fy = (p[1] - this.yRange[0]) / (this.yRange[1] - this.yRange[0])
    return [this.rect.x + fx * this.rect.w, this.rect.y + (1 - fy) * this.rect.h]
  }

  fromCanvas(p: Vec2): Vec2 {
    const fx = (p[0] - this.rect.x) / this.rect.w
    const fy = 1 - (p[1] - this.rect.y) / this.rect.h
    return [
      this.xRange[0] + fx * (this.xRange[1] - this.xRange[0]),
      this.yRange[0] + fy * (this.yRange[1] - this.yRange[0]),
    ]
  }

  scale(): number {
    return this.rect.w / (this.xRange[1] - this.xRange[0])
  }

  contains(p: Vec2): boolean {
    return (
      p[0] >= this.rect.x &&
      p[0] <= this.rect.x + this.rect.w &&
      p[1] >= this.rect.y &&
      p[1] <= this.rect.y + this.rect.h
    )
  }
}

class CanvasAdapter {
  private readonly ctx: CanvasRenderingContext2D
  private world: Mapper | null = null

  constructor(private readonly canvas: HTMLCanvasElement) {
    const ctx = canvas.getContext('2d')
    if (!ctx) {
      throw new Error('canvas 2d context unavailable')
    }
    this.ctx = ctx
  }

  resize(): void {
    const rect = this.canvas.getBoundingClientRect()
    const ratio = window.devicePixelRatio || 1
    this.canvas.width = Math.max(1, Math.round(rect.width * ratio))
    this.canvas.height = Math.max(1, Math.round(rect.height * ratio))
    this.ctx.setTransform(ratio, 0, 0, ratio, 0, 0)
  }

  worldFromClient(clientX: number, clientY: number): Vec2 | null {
    if (!this.world) {
      return null
    }
    const rect = this.canvas.getBoundingClientRect()
    return this.world.fromCanvas([clientX - rect.left, clientY - rect.top])
  }

  draw(ops: DrawOp[], view: ViewState): void {
    const width = this.canvas.clientWidth
    const height = this.canvas.clientHeight
    if (width <= 0 || height <= 0) {
      return
    }
    const workspace = view.snapshot?.environment.workspace ?? 10
    const margin = 16
    const side = Math.min(width, height) - 2 * margin
    this.world = new Mapper(
      { x: (width - side) / 2, y: (height - side) / 2, w: side, h: side },
      [0, workspace],
      [0, workspace],
    )
    const panelSide = Math.min(190, side * 0.4)
    const inputRect: Rect = {
      x: width - panelSide - 12,
      y: height - panelSide - 12,
      w: panelSide,
      h: panelSide,
    }
    const fieldRect: Rect = { x: 12, y: height - panelSide - 12, w: panelSide, h: panelSide }

    let input: Mapper | null = null
    let badgeY = 14
    let labelY = 18

    for (const op of ops) {
      switch (op.op) {
        case 'clear':
          this.ctx.fillStyle = '#fcfdff'
          this.ctx.fillRect(0, 0, width, height)
          this.drawWorkspaceFrame()
          break
        case 'field-cells':
          this.drawFieldPanel(op, fieldRect)
          break
        case 'circle': {
          const m = this.world
          const c = m.toCanvas(op.center)
          this.ctx.beginPath()
          this.ctx.arc(c[0], c[1], op.radius * m.scale(), 0, 2 * Math.PI)
          if (op.fill) {
            this.ctx.fillStyle = op.fill
            this.ctx.fill()
          }
          if (op.stroke) {
            this.ctx.strokeStyle = op.stroke
            this.ctx.lineWidth = op.width ?? 1
            this.ctx.stroke()
          }
          break
        }
        case 'cross': {
          const m = this.world
          const c = m.toCanvas(op.center)
          const s = op.size * m.scale()
          this.ctx.beginPath()
          this.ctx.moveTo(c[0] - s, c[1] - s)
          this.ctx.lineTo(c[0] + s, c[1] + s)
          this.ctx.moveTo(c[0] - s, c[1] + s)
          this.ctx.lineTo(c[0] + s, c[1] - s)
          this.ctx.strokeStyle = op.color
          this.ctx.lineWidth = 3
          this.ctx.stroke()
          break
        }
        case 'segment': {
          const m = this.world
          const a = m.toCanvas(op.from)
          const b = m.toCanvas(op.to)
          this.ctx.beginPath()
          this.ctx.moveTo(a[0], a[1])
          this.ctx.lineTo(b[0], b[1])
          this.ctx.strokeStyle = op.color
          this.ctx.lineWidth = Math.max(1.5, op.width * m.scale())
          this.ctx.lineCap = 'round'
          this.ctx.stroke()
          break
        }
        case 'polyline': {
          const m = this.world
          this.ctx.beginPath()
          op.points.forEach((p, i) => {
            const c = m.toCanvas(p)
            if (i === 0) this.ctx.moveTo(c[0], c[1])
            else this.ctx.lineTo(c[0], c[1])
          })
          this.ctx.strokeStyle = op.color
          this.ctx.lineWidth = op.width
          this.ctx.stroke()
          break
        }
        case 'arrow': {
          const m = op.space === 'input' ? input : this.world
          if (!m) break
          this.drawArrow(m.toCanvas(op.from), m.toCanvas(op.to), op.color, op.width)
          break
        }
        case 'panel': {
          input = new Mapper(inputRect, [-op.halfSpan, op.halfSpan], [-op.halfSpan, op.halfSpan])
          this.ctx.fillStyle = 'rgba(255,255,255,0.92)'
          this.ctx.fillRect(inputRect.x, inputRect.y, inputRect.w, inputRect.h)
          this.ctx.strokeStyle = op.feasible ? '#b9c6d8' : '#d64550'
          this.ctx.lineWidth = op.feasible ? 1 : 2
          this.ctx.strokeRect(inputRect.x, inputRect.y, inputRect.w, inputRect.h)
          this.ctx.fillStyle = '#51616f'
          this.ctx.font = '11px sans-serif'
          this.ctx.fillText(
            op.feasible ? 'admissible inputs' : 'admissible inputs: empty',
            inputRect.x + 6,
            inputRect.y + 14,
          )
          break
        }
        case 'polygon': {
          if (!input) break
          this.ctx.beginPath()
          op.points.forEach((p, i) => {
            const c = (input as Mapper).toCanvas(p)
            if (i === 0) this.ctx.moveTo(c[0], c[1])
            else this.ctx.lineTo(c[0], c[1])
          })
          this.ctx.closePath()
          this.ctx.fillStyle = op.fill
          this.ctx.fill()
          this.ctx.strokeStyle = op.stroke
          this.ctx.lineWidth = 1.2
          this.ctx.stroke()
          break
        }
        case 'point': {
          if (!input) break
          const c = input.toCanvas(op.at)
          this.ctx.beginPath()
          this.ctx.arc(c[0], c[1], 3.5, 0, 2 * Math.PI)
          this.ctx.fillStyle = op.color
          this.ctx.fill()
          break
        }
        case 'badge': {
          this.ctx.font = '600 12px sans-serif'
          const w = this.ctx.measureText(op.text).width + 14
          this.ctx.fillStyle = op.tone
          this.ctx.globalAlpha = 0.15
          this.ctx.fillRect(width - w - 12, badgeY, w, 20)
          this.ctx.globalAlpha = 1
          this.ctx.fillStyle = op.tone
          this.ctx.fillText(op.text, width - w - 5, badgeY + 14)
          badgeY += 24
          break
        }
        case 'label': {
          this.ctx.font = '12px sans-serif'
          this.ctx.fillStyle = op.role === 'toast' ? '#d64550' : '#51616f'
          this.ctx.fillText(op.text, 14, labelY)
          labelY += 16
          break
        }
      }
    }
  }

  private drawWorkspaceFrame(): void {
    if (!this.world) return
    const a = this.world.toCanvas([0, 0])
    const b = this.world.toCanvas([10, 10])
    this.ctx.strokeStyle = '#d7e0ec'
    this.ctx.lineWidth = 1
    this.ctx.strokeRect(Math.min(a[0], b[0]), Math.min(a[1], b[1]), Math.abs(b[0] - a[0]), Math.abs(b[1] - a[1]))
  }

  private drawFieldPanel(
    op: Extract<DrawOp, { op: 'field-cells' }>,
    rect: Rect,
  ): void {
    const nx = op.xs.length
    const ny = op.ys.length
    if (nx === 0 || ny === 0) return
    const cw = rect.w / nx
    const ch = rect.h / ny
    for (let i = 0; i < nx; i += 1) {
      for (let j = 0; j < ny; j += 1) {
        this.ctx.fillStyle = op.values[i][j] < 0 ? op.negativeColor : op.positiveColor
        this.ctx.fillRect(rect.x + i * cw, rect.y + rect.h - (j + 1) * ch, cw, ch)
      }
    }
    this.ctx.strokeStyle = '#b9c6d8'
    this.ctx.lineWidth = 1
    this.ctx.strokeRect(rect.x, rect.y, rect.w, rect.h)
    this.ctx.fillStyle = '#51616f'
    this.ctx.font = '11px sans-serif'
    this.ctx.fillText(`margin field, dims (${op.dims[0]}, ${op.dims[1]})`, rect.x + 4, rect.y - 4)
  }

  private drawArrow(from: Vec2, to: Vec2, color: string, width: number): void {
    const d = Math.hypot(to[0] - from[0], to[1] - from[1])
    if (d < 1) return
    const angle = Math.atan2(to[1] - from[1], to[0] - from[0])
    const head = Math.min(9, Math.max(5, width * 3))
    this.ctx.beginPath()
    this.ctx.moveTo(from[0], from[1])
    this.ctx.lineTo(to[0], to[1])
    this.ctx.strokeStyle = color
    this.ctx.lineWidth = width
    this.ctx.lineCap = 'round'
    this.ctx.stroke()
    this.ctx.beginPath()
    this.ctx.moveTo(to[0], to[1])
    this.ctx.lineTo(to[0] - head * Math.cos(angle - Math.PI / 7), to[1] - head * Math.sin(angle - Math.PI / 7))
    this.ctx.lineTo(to[0] - head * Math.cos(angle + Math.PI / 7), to[1] - head * Math.sin(angle + Math.PI / 7))
    this.ctx.closePath()
    this.ctx.fillStyle = color
    this.ctx.fill()
  }
}

function byId<T extends HTMLElement>(id: string): T {
  const el = document.getElementById(id)
  if (!el) {
    throw new Error(`missing element #${id}`)
  }
  return el as T
}

function wsUrl(): string {
  const proto = location.protocol === 'https:' ? 'wss' : 'ws'
  return `${proto}://${location.host}/ws`
}

function start(): void {
  let view = initialViewState()
  const ids = makeIdAllocator()
  const canvas = byId<HTMLCanvasElement>('scene')
  const adapter = new CanvasAdapter(canvas)
  const status = byId<HTMLSpanElement>('status')

  let dirty = true
  const invalidate = () => {
    dirty = true
  }
  const setView = (next: ViewState) => {
    view = next
    invalidate()
  }

  let client: PlaygroundClient | null = null

  const dispatch = (action: UserAction) => {
    if (!client) {
      return
    }
    const messages = messagesForAction(action, view, ids)
    client.sendAll(messages)
  }

  const delegate = {
    onOpen() {
      setView(setConnection(view, 'connected'))
      status.textContent = 'connected'
      dispatch(connectActionFromControls())
    },
    onReply(tag: Parameters<typeof applyReply>[1], reply: Parameters<typeof applyReply>[2]) {
      const wasSession = view.snapshot?.session
      setView(applyReply(view, tag, reply))
      syncControls()
      // A re-init (environment edit) lands in a fresh session; bring the
      // active overlays current against it.
      if (tag === 'init' && reply.ok && wasSession && view.snapshot?.session !== wasSession) {
        dispatch({ kind: 'refresh-overlays' })
      }
    },
    onStream(frame: Parameters<typeof applyStream>[1]) {
      setView(applyStream(view, frame))
    },
    onClose() {
      setView(setConnection(view, 'disconnected'))
      status.textContent = 'disconnected'
    },
    onProtocolNoise(detail: string) {
      console.warn('protocol noise:', detail)
    },
  }

  const connectSocket = () => {
    status.textContent = 'connecting...'
    setView(setConnection(view, 'connecting'))
    client = connectPlayground(wsUrl(), delegate)
  }

  // -- controls -------------------------------------------------------------

  const modelSelect = byId<HTMLSelectElement>('model')
  const familySelect = byId<HTMLSelectElement>('family')
  const seedInput = byId<HTMLInputElement>('seed')
  const sliders: Record<string, HTMLInputElement> = {
    gamma: byId<HTMLInputElement>('gamma'),
    gamma1: byId<HTMLInputElement>('gamma1'),
    gamma2: byId<HTMLInputElement>('gamma2'),
    vMax: byId<HTMLInputElement>('vmax'),
    rateHz: byId<HTMLInputElement>('rate'),
  }

  function connectActionFromControls(): UserAction {
    const model = modelSelect.value
    const family = familySelect.value
    const action: UserAction = {
      kind: 'connect',
      model,
      family,
      seed: Math.max(0, Math.trunc(Number(seedInput.value) || 0)),
    }
    if (family === 'hocbf' || (family === 'naive' && model === DOUBLE_INTEGRATOR)) {
      action.gamma1 = view.sliders.gamma1
      action.gamma2 = view.sliders.gamma2
    }
    if (family === 'cbf') {
      action.gamma = view.sliders.gamma
    }
    if (model === DOUBLE_INTEGRATOR) {
      action.vMax = view.sliders.vMax
    }
    return action
  }

  function syncControls(): void {
    const snapshot = view.snapshot
    if (!snapshot) {
      return
    }
    if (modelSelect.value !== snapshot.model.kind) {
      modelSelect.value = snapshot.model.kind
    }
    if (familySelect.value !== snapshot.filter.family) {
      familySelect.value = snapshot.filter.family
    }
    sliders.gamma.value = String(view.sliders.gamma)
    sliders.gamma1.value = String(view.sliders.gamma1)
    sliders.gamma2.value = String(view.sliders.gamma2)
    sliders.vMax.value = String(view.sliders.vMax)
    const isDi = snapshot.model.kind === DOUBLE_INTEGRATOR
    byId<HTMLDivElement>('row-vmax').style.display = isDi ? '' : 'none'
    const pairGains = snapshot.filter.gamma1 !== undefined
    byId<HTMLDivElement>('row-gamma').style.display = pairGains ? 'none' : ''
    byId<HTMLDivElement>('row-gamma1').style.display = pairGains ? '' : 'none'
    byId<HTMLDivElement>('row-gamma2').style.display = pairGains ? '' : 'none'
    byId<HTMLDivElement>('row-drag-velocity').style.display = isDi ? '' : 'none'
  }

  const sliderName = (key: string): keyof SliderValues =>
    key as keyof SliderValues

  for (const [key, el] of Object.entries(sliders)) {
    el.addEventListener('input', () => {
      setView(setSlider(view, sliderName(key), Number(el.value)))
    })
    if (key === 'rateHz') {
      continue
    }
    el.addEventListener('change', () => {
      const value = Number(el.value)
      setView(setSlider(view, sliderName(key), value))
      const wire = key === 'vMax' ? 'v_max' : key
      dispatch({
        kind: 'slider-commit',
        name: wire as 'gamma' | 'gamma1' | 'gamma2' | 'v_max',
        value,
      })
    })
  }

  modelSelect.addEventListener('change', () => {
    setView(selectModel(view, modelSelect.value))
    dispatch(connectActionFromControls())
  })
  familySelect.addEventListener('change', () => {
    setView(selectFamily(view, familySelect.value))
    dispatch({ kind: 'family-commit', family: familySelect.value })
  })
  seedInput.addEventListener('change', () => {
    dispatch(connectActionFromControls())
  })

  byId<HTMLButtonElement>('btn-run').addEventListener('click', () => dispatch({ kind: 'run' }))
  byId<HTMLButtonElement>('btn-pause').addEventListener('click', () => dispatch({ kind: 'pause' }))
  byId<HTMLButtonElement>('btn-step').addEventListener('click', () => dispatch({ kind: 'step' }))
  byId<HTMLButtonElement>('btn-reset').addEventListener('click', () => dispatch({ kind: 'reset' }))
  byId<HTMLButtonElement>('btn-new-world').addEventListener('click', () => {
    seedInput.value = String(Math.trunc(Number(seedInput.value) || 0) + 1)
    dispatch(connectActionFromControls())
  })

  const overlayBoxes: Array<[string, keyof OverlayToggles]> = [
    ['ov-input-set', 'inputSet'],
    ['ov-field', 'field'],
    ['ov-trace', 'trace'],
    ['ov-contours', 'contours'],
  ]
  for (const [id, name] of overlayBoxes) {
    const box = byId<HTMLInputElement>(id)
    box.checked = view.overlays[name]
    box.addEventListener('change', () => {
      setView(setOverlay(view, name, box.checked))
      dispatch({ kind: 'toggle-overlay', name, on: box.checked })
    })
  }

  for (const mode of ['robot', 'obstacle', 'velocity-arrow'] as DragMode[]) {
    const radio = byId<HTMLInputElement>(`drag-${mode}`)
    radio.checked = view.dragMode === mode
    radio.addEventListener('change', () => {
      if (radio.checked) {
        setView(setDragMode(view, mode))
      }
    })
  }

  // -- canvas drag ----------------------------------------------------------

  let dragging = false
  let draggedObstacle = -1
  let lastSent = 0

  const sendDrag = (point: Vec2, force: boolean) => {
    const now = performance.now()
    if (!force && now - lastSent < DRAG_SEND_INTERVAL_MS) {
      return
    }
    lastSent = now
    if (view.dragMode === 'robot') {
      dispatch({ kind: 'drag-robot', position: [point[0], point[1]] })
    } else if (view.dragMode === 'velocity-arrow' && view.snapshot) {
      const x = view.snapshot.x
      dispatch({
        kind: 'drag-velocity',
        velocity: [
          (point[0] - x[0]) / VELOCITY_PREVIEW,
          (point[1] - x[1]) / VELOCITY_PREVIEW,
        ],
      })
    }
  }

  canvas.addEventListener('mousedown', (ev) => {
    const point = adapter.worldFromClient(ev.clientX, ev.clientY)
    if (!point || !view.snapshot) {
      return
    }
    dragging = true
    if (view.dragMode === 'obstacle') {
      const env = view.snapshot.environment
      draggedObstacle = -1
      env.obstacle_centers.forEach((c, i) => {
        if (Math.hypot(c[0] - point[0], c[1] - point[1]) <= env.obstacle_radius + 0.15) {
          draggedObstacle = i
        }
      })
    } else {
      sendDrag(point, true)
    }
  })
  canvas.addEventListener('mousemove', (ev) => {
    if (!dragging || view.dragMode === 'obstacle') {
      return
    }
    const point = adapter.worldFromClient(ev.clientX, ev.clientY)
    if (point) {
      sendDrag(point, false)
    }
  })
  window.addEventListener('mouseup', (ev) => {
    if (!dragging) {
      return
    }
    dragging = false
    const point = adapter.worldFromClient(ev.clientX, ev.clientY)
    if (!point) {
      return
    }
    if (view.dragMode === 'obstacle' && draggedObstacle >= 0) {
      dispatch({ kind: 'drag-obstacle', index: draggedObstacle, center: [point[0], point[1]] })
      draggedObstacle = -1
    } else if (view.dragMode !== 'obstacle') {
      sendDrag(point, true)
    }
  })
  canvas.addEventListener('dblclick', (ev) => {
    if (view.dragMode !== 'obstacle') {
      return
    }
    const point = adapter.worldFromClient(ev.clientX, ev.clientY)
    if (point) {
      dispatch({ kind: 'add-obstacle', center: [point[0], point[1]] })
    }
  })
  canvas.addEventListener('contextmenu', (ev) => {
    if (view.dragMode !== 'obstacle' || !view.snapshot) {
      return
    }
    ev.preventDefault()
    const point = adapter.worldFromClient(ev.clientX, ev.clientY)
    if (!point) {
      return
    }
    const env = view.snapshot.environment
    let nearest = -1
    env.obstacle_centers.forEach((c, i) => {
      if (Math.hypot(c[0] - point[0], c[1] - point[1]) <= env.obstacle_radius + 0.15) {
        nearest = i
      }
    })
    if (nearest >= 0) {
      dispatch({ kind: 'remove-obstacle', index: nearest })
    }
  })

  // -- frame loop -----------------------------------------------------------

  const frame = () => {
    if (dirty) {
      dirty = false
      adapter.draw(renderScene(view), view)
    }
    requestAnimationFrame(frame)
  }

  window.addEventListener('resize', () => {
    adapter.resize()
    invalidate()
  })

  adapter.resize()
  connectSocket()
  requestAnimationFrame(frame)
}

start()
