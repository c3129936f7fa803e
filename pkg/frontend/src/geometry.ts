// Drawing geometry: forward kinematics for the arm sprite, halfspace
// clipping for the admissible-input polygon, and point/segment clearance
// for the overlap badge. All inputs come from protocol replies; nothing
// here advances state.

export type Vec2 = [number, number]

export interface Halfspace {
  a: Vec2
  b: number
}

/** Base plus the three joint points of the arm, from its joint angles.
 * Angles are cumulative: each link continues from the previous heading. */
export function armJointPoints(base: Vec2, linkLengths: number[], q: number[]): Vec2[] {
  const points: Vec2[] = [[base[0], base[1]]]
  let heading = 0
  let x = base[0]
  let y = base[1]
  for (let k = 0; k < linkLengths.length; k += 1) {
    heading += q[k]
    x += linkLengths[k] * Math.cos(heading)
    y += linkLengths[k] * Math.sin(heading)
    points.push([x, y])
  }
  return points
}

/** Clip a convex polygon to one halfspace a . u >= b (Sutherland-Hodgman). */
export function clipToHalfspace(polygon: Vec2[], hs: Halfspace): Vec2[] {
  const out: Vec2[] = []
  const n = polygon.length
  for (let i = 0; i < n; i += 1) {
    const p = polygon[i]
    const q = polygon[(i + 1) % n]
    const sp = hs.a[0] * p[0] + hs.a[1] * p[1] - hs.b
    const sq = hs.a[0] * q[0] + hs.a[1] * q[1] - hs.b
    if (sp >= 0) {
      out.push(p)
    }
    if ((sp >= 0) !== (sq >= 0)) {
      const t = sp / (sp - sq)
      out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])])
    }
  }
  return out
}

/** Intersection of halfspaces with a bounding box, as a convex polygon in
 * counterclockwise order; empty array when the set is empty. Box entries may
 * be null (unbounded); those sides fall back to `unboundedSpan`. */
export function admissiblePolygon(
  rows: Halfspace[],
  box: Array<number | null>,
  unboundedSpan: number,
): Vec2[] {
  const bx = box[0] ?? unboundedSpan
  const by = box[1] ?? unboundedSpan
  let polygon: Vec2[] = [
    [-bx, -by],
    [bx, -by],
    [bx, by],
    [-bx, by],
  ]
  for (const row of rows) {
    polygon = clipToHalfspace(polygon, row)
    if (polygon.length === 0) {
      return []
    }
  }
  return polygon
}

export function pointDistance(p: Vec2, q: Vec2): number {
  return Math.hypot(p[0] - q[0], p[1] - q[1])
}

/** Distance from a point to a segment. */
export function segmentDistance(point: Vec2, a: Vec2, b: Vec2): number {
  const dx = b[0] - a[0]
  const dy = b[1] - a[1]
  const denom = dx * dx + dy * dy
  let t = 0
  if (denom > 0) {
    t = ((point[0] - a[0]) * dx + (point[1] - a[1]) * dy) / denom
    t = Math.min(1, Math.max(0, t))
  }
  return Math.hypot(point[0] - (a[0] + t * dx), point[1] - (a[1] + t * dy))
}
