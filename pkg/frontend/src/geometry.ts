/**
 * Pure geometry used by the viewer: arrow layout with a frame-wide shared
 * scale, pick-ray to wire-piece anchoring, and pointer-drag to world-space
 * force conversion. No DOM or renderer dependencies, so all of it is
 * unit-testable; the scene module just draws what these return.
 */

import type { Vec3 } from "./protocol.js";

export interface ArrowSegment {
  from: Vec3;
  to: Vec3;
}

const sub = (a: Vec3, b: Vec3): Vec3 => [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
const add = (a: Vec3, b: Vec3): Vec3 => [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
const scale = (a: Vec3, s: number): Vec3 => [a[0] * s, a[1] * s, a[2] * s];
const dot = (a: Vec3, b: Vec3): number => a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
export const norm = (a: Vec3): number => Math.hypot(a[0], a[1], a[2]);

/**
 * One scale factor for every arrow in a frame: the largest force maps to
 * `targetLength` meters. Keeping actual and estimated vectors on the same
 * scale is what makes them visually comparable.
 */
export function sharedArrowScale(forces: Vec3[], targetLength: number): number {
  let largest = 0;
  for (const f of forces) largest = Math.max(largest, norm(f));
  return largest > 0 ? targetLength / largest : 0;
}

export function arrowSegment(anchor: Vec3, force: Vec3, arrowScale: number): ArrowSegment {
  return { from: anchor, to: add(anchor, scale(force, arrowScale)) };
}

export interface PickResult {
  piece: number;
  r: number;
  distance: number;
  point: Vec3;
}

/**
 * Closest wire piece to a pick ray. Pieces in `excluded` (clamp pieces)
 * are skipped so a drag near a clamp anchors to the nearest free piece.
 */
export function pickPiece(
  rayOrigin: Vec3,
  rayDirection: Vec3,
  nodes: Vec3[],
  excluded: Set<number> = new Set(),
): PickResult | null {
  let best: PickResult | null = null;
  const d = scale(rayDirection, 1 / (norm(rayDirection) || 1));
  for (let i = 0; i + 1 < nodes.length; i++) {
    if (excluded.has(i)) continue;
    const a = nodes[i];
    const u = sub(nodes[i + 1], a);
    const w = sub(a, rayOrigin);
    const uu = dot(u, u);
    const du = dot(d, u);
    const denom = uu - du * du; // |d| = 1
    let s: number;
    if (denom > 1e-12 * uu) {
      s = (dot(w, d) * du - dot(w, u)) / denom;
    } else {
      s = 0;
    }
    s = Math.min(1, Math.max(0, s));
    const point = add(a, scale(u, s));
    const t = Math.max(0, dot(sub(point, rayOrigin), d));
    const onRay = add(rayOrigin, scale(d, t));
    const distance = norm(sub(point, onRay));
    if (best === null || distance < best.distance) {
      best = { piece: i, r: s, distance, point };
    }
  }
  return best;
}

export interface CameraFixture {
  position: Vec3;
  /** Unit forward direction (camera looks along this). */
  forward: Vec3;
  /** Unit up direction, perpendicular to forward. */
  up: Vec3;
  /** Vertical field of view in radians. */
  fovY: number;
  viewportWidth: number;
  viewportHeight: number;
}

/**
 * World-space displacement of a pointer drag, evaluated on the plane
 * through `anchor` perpendicular to the camera forward axis. Screen y
 * grows downward; world up follows the camera up vector.
 */
export function dragWorldDisplacement(
  camera: CameraFixture,
  anchor: Vec3,
  dxPixels: number,
  dyPixels: number,
): Vec3 {
  const depth = dot(sub(anchor, camera.position), camera.forward);
  const worldPerPixel =
    (2 * depth * Math.tan(camera.fovY / 2)) / camera.viewportHeight;
  const right: Vec3 = [
    camera.forward[1] * camera.up[2] - camera.forward[2] * camera.up[1],
    camera.forward[2] * camera.up[0] - camera.forward[0] * camera.up[2],
    camera.forward[0] * camera.up[1] - camera.forward[1] * camera.up[0],
  ];
  return add(
    scale(right, dxPixels * worldPerPixel),
    scale(camera.up, -dyPixels * worldPerPixel),
  );
}

export type AxisLock = "x" | "y" | "z" | null;

/**
 * Pointer drag to force vector: displacement in the camera-facing plane at
 * the anchor depth, times the gain (newtons per meter of world
 * displacement at that depth... the gain is specified as N per pixel, so
 * it multiplies the raw pixel length along the drag direction).
 *
 * With an axis lock the force keeps its magnitude but snaps to the world
 * axis, signed by the projection.
 */
export function dragToForce(
  camera: CameraFixture,
  anchor: Vec3,
  dxPixels: number,
  dyPixels: number,
  gainNewtonPerPixel: number,
  lock: AxisLock = null,
): Vec3 {
  const pixels = Math.hypot(dxPixels, dyPixels);
  if (pixels === 0) return [0, 0, 0];
  const displacement = dragWorldDisplacement(camera, anchor, dxPixels, dyPixels);
  const magnitude = gainNewtonPerPixel * pixels;
  const direction = scale(displacement, 1 / (norm(displacement) || 1));
  if (lock === null) return scale(direction, magnitude);
  const axisIndex = { x: 0, y: 1, z: 2 }[lock];
  const axis: Vec3 = [0, 0, 0];
  axis[axisIndex] = Math.sign(direction[axisIndex]) || 1;
  return scale(axis, magnitude);
}

/** Largest |endpoint(actual) - endpoint(estimate)| over |arrow|, for tests. */
export function arrowEndpointGap(
  actualAnchor: Vec3,
  actualForce: Vec3,
  estimateAnchor: Vec3,
  estimateForce: Vec3,
  arrowScale: number,
): number {
  const a = arrowSegment(actualAnchor, actualForce, arrowScale);
  const e = arrowSegment(estimateAnchor, estimateForce, arrowScale);
  const gap = norm(sub(a.to, e.to));
  const length = norm(sub(a.to, a.from));
  return length > 0 ? gap / length : Infinity;
}
