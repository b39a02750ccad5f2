import { describe, expect, it } from "vitest";

import {
  arrowEndpointGap,
  arrowSegment,
  dragToForce,
  dragWorldDisplacement,
  pickPiece,
  sharedArrowScale,
  type CameraFixture,
} from "../src/geometry.js";
import type { Vec3 } from "../src/protocol.js";

// Fixed camera fixture: at (0, 0, 5) looking down -z with +y up,
// 50 degree vertical fov, 800x600 viewport.
const FIXTURE: CameraFixture = {
  position: [0, 0, 5],
  forward: [0, 0, -1],
  up: [0, 1, 0],
  fovY: (50 * Math.PI) / 180,
  viewportWidth: 800,
  viewportHeight: 600,
};

describe("dragWorldDisplacement", () => {
  it("matches the analytic world-per-pixel at anchor depth", () => {
    const anchor: Vec3 = [0, 0, 0]; // depth 5 in front of the camera
    const d = 120;
    const out = dragWorldDisplacement(FIXTURE, anchor, 0, d);
    const worldPerPixel = (2 * 5 * Math.tan(FIXTURE.fovY / 2)) / 600;
    // Screen y grows downward, so a downward drag points along -up.
    expect(out[0]).toBeCloseTo(0, 12);
    expect(out[1]).toBeCloseTo(-d * worldPerPixel, 12);
    expect(out[2]).toBeCloseTo(0, 12);
  });

  it("right on screen is camera right in world", () => {
    const out = dragWorldDisplacement(FIXTURE, [0, 0, 0], 50, 0);
    // forward x up = (0,0,-1) x (0,1,0) = (1, 0, 0)
    expect(out[0]).toBeGreaterThan(0);
    expect(out[1]).toBeCloseTo(0, 12);
    expect(out[2]).toBeCloseTo(0, 12);
  });
});

describe("dragToForce", () => {
  it("click-release without movement produces zero force", () => {
    expect(dragToForce(FIXTURE, [0, 0, 0], 0, 0, 0.01)).toEqual([0, 0, 0]);
  });

  it("vertical drag of d pixels at gain g gives |f| = g*d along world up", () => {
    const g = 0.01;
    const d = 80;
    const f = dragToForce(FIXTURE, [0, 0, 0], 0, -d, g); // drag up on screen
    expect(f[1]).toBeCloseTo(g * d, 9);
    expect(f[0]).toBeCloseTo(0, 9);
    expect(f[2]).toBeCloseTo(0, 9);
  });

  it("axis lock snaps direction but keeps magnitude", () => {
    const g = 0.02;
    const f = dragToForce(FIXTURE, [0, 0, 0], 30, -40, g, "y");
    expect(Math.hypot(...f)).toBeCloseTo(g * 50, 9);
    expect(f[0]).toBe(0);
    expect(f[2]).toBe(0);
    expect(f[1]).toBeGreaterThan(0);
  });
});

describe("pickPiece", () => {
  const nodes: Vec3[] = [
    [0, 0, 0],
    [0.1, 0, 0],
    [0.2, 0, 0],
    [0.3, 0, 0],
    [0.4, 0, 0],
  ];

  it("finds the piece and ratio under the ray", () => {
    const hit = pickPiece([0.25, 0, 1], [0, 0, -1], nodes);
    expect(hit).not.toBeNull();
    expect(hit!.piece).toBe(2);
    expect(hit!.r).toBeCloseTo(0.5, 6);
    expect(hit!.distance).toBeCloseTo(0, 9);
  });

  it("skips excluded clamp pieces", () => {
    const hit = pickPiece([0.01, 0, 1], [0, 0, -1], nodes, new Set([0]));
    expect(hit!.piece).toBe(1);
    expect(hit!.r).toBe(0);
  });
});

describe("arrow layout", () => {
  it("shares one scale across all arrows in a frame", () => {
    const forces: Vec3[] = [
      [0, 0, -2],
      [0, 1, 0],
    ];
    const scale = sharedArrowScale(forces, 0.12);
    expect(scale).toBeCloseTo(0.06, 12);
    const big = arrowSegment([0, 0, 0], forces[0], scale);
    const small = arrowSegment([0, 0, 0], forces[1], scale);
    const len = (s: { from: Vec3; to: Vec3 }) =>
      Math.hypot(s.to[0] - s.from[0], s.to[1] - s.from[1], s.to[2] - s.from[2]);
    expect(len(big)).toBeCloseTo(0.12, 12);
    expect(len(small)).toBeCloseTo(0.06, 12);
  });

  it("endpoint gap is relative to arrow length", () => {
    const gap = arrowEndpointGap(
      [0, 0, 0],
      [0, 0, 1],
      [0, 0, 0],
      [0, 0.03, 1],
      0.1,
    );
    expect(gap).toBeCloseTo(0.03, 6);
  });
});
