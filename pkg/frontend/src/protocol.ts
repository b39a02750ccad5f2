/**
 * Frame types for the probing-session WebSocket protocol and runtime guards
 * for the frames the viewer consumes. Wire format is documented in
 * schemas/protocol.md of the backend package.
 */

export type Vec3 = [number, number, number];

export interface AppliedForce {
  piece: number;
  r: number;
  force: Vec3;
  position: Vec3;
}

export interface ClampInfo {
  node: number;
  position: Vec3;
  reaction: Vec3;
}

export interface EstimateInfo {
  section_index: number;
  first_piece: number;
  last_piece: number;
  boundary: boolean;
  force: Vec3;
  mode: string | null;
  position: Vec3 | null;
  torque: Vec3 | null;
  residual: number;
}

export interface MetricsInfo {
  id: string;
  rel_l2: number;
  angle_rad: number | null;
  angle_deg: number | null;
  angle_defined: boolean;
  pos_diff_m: number | null;
}

export interface StateUpdate {
  type: "state_update";
  revision: number;
  converged: boolean;
  residual: number;
  energy: number;
  nodes: Vec3[];
  clamps: ClampInfo[];
  actual_forces: AppliedForce[];
  estimates: EstimateInfo[];
  estimate_error: string | null;
  metrics: MetricsInfo[];
}

export interface ErrorFrame {
  type: "error";
  category: string;
  message: string;
}

export type ServerFrame = StateUpdate | ErrorFrame | { type: "pong"; revision: number };

export interface ApplyForceFrame {
  type: "apply_force";
  piece: number;
  r: number;
  force: Vec3;
}

export type ClientFrame =
  | ApplyForceFrame
  | { type: "clear_forces" }
  | { type: "set_config"; estimator?: Record<string, number | boolean>; mode?: string }
  | { type: "ping" };

function isVec3(v: unknown): v is Vec3 {
  return Array.isArray(v) && v.length === 3 && v.every((x) => typeof x === "number");
}

export function isStateUpdate(frame: unknown): frame is StateUpdate {
  if (typeof frame !== "object" || frame === null) return false;
  const f = frame as Record<string, unknown>;
  return (
    f.type === "state_update" &&
    typeof f.revision === "number" &&
    Array.isArray(f.nodes) &&
    f.nodes.every(isVec3) &&
    Array.isArray(f.estimates) &&
    Array.isArray(f.actual_forces)
  );
}

export function isErrorFrame(frame: unknown): frame is ErrorFrame {
  if (typeof frame !== "object" || frame === null) return false;
  const f = frame as Record<string, unknown>;
  return f.type === "error" && typeof f.message === "string";
}

export function parseServerFrame(text: string): ServerFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(text);
  } catch {
    return null;
  }
  if (isStateUpdate(data) || isErrorFrame(data)) return data;
  const f = data as Record<string, unknown>;
  if (f && f.type === "pong") return data as ServerFrame;
  return null;
}

export function applyForceFrame(piece: number, r: number, force: Vec3): string {
  const frame: ApplyForceFrame = { type: "apply_force", piece, r, force };
  return JSON.stringify(frame);
}
