/**
 * three.js scene: wire polyline, force arrows, clamp markers.
 *
 * Color convention: black = actual applied force, green = estimated
 * external force, red = estimated end-clamp force. All arrows in one frame
 * share a single scale so actual and estimated magnitudes compare by eye.
 */

import * as THREE from "three";

import { arrowSegment, norm, sharedArrowScale } from "./geometry.js";
import type { StateUpdate, Vec3 } from "./protocol.js";

export const COLORS = {
  actual: 0x111111,
  estimate: 0x1faa3e,
  clamp: 0xd22727,
  wire: 0x3366cc,
  ghost: 0x999999,
};

const ARROW_TARGET_LENGTH = 0.12; // meters at the largest force

export class WireScene {
  readonly scene = new THREE.Scene();
  private wire: THREE.Line;
  private arrows: THREE.ArrowHelper[] = [];
  private clampMarkers: THREE.Mesh[] = [];

  constructor() {
    this.scene.background = new THREE.Color(0xf4f4f0);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.9));
    const sun = new THREE.DirectionalLight(0xffffff, 1.2);
    sun.position.set(1, -2, 3);
    this.scene.add(sun);
    const wireMaterial = new THREE.LineBasicMaterial({
      color: COLORS.wire,
      linewidth: 2,
    });
    this.wire = new THREE.Line(new THREE.BufferGeometry(), wireMaterial);
    this.scene.add(this.wire);
    const grid = new THREE.GridHelper(1.0, 20, 0xcccccc, 0xe4e4e0);
    grid.rotation.x = Math.PI / 2; // z is up in the rod world
    grid.position.z = -0.25;
    this.scene.add(grid);
  }

  /** Rebuild the dynamic content from one snapshot. */
  update(state: StateUpdate) {
    const positions = new Float32Array(state.nodes.length * 3);
    state.nodes.forEach((node, i) => positions.set(node, i * 3));
    this.wire.geometry.dispose();
    const geometry = new THREE.BufferGeometry();
    geometry.setAttribute("position", new THREE.BufferAttribute(positions, 3));
    this.wire.geometry = geometry;

    for (const arrow of this.arrows) this.scene.remove(arrow);
    this.arrows = [];
    for (const marker of this.clampMarkers) this.scene.remove(marker);
    this.clampMarkers = [];

    const allForces: Vec3[] = [
      ...state.actual_forces.map((f) => f.force),
      ...state.estimates.map((e) => e.force),
    ];
    const scale = sharedArrowScale(allForces, ARROW_TARGET_LENGTH);

    for (const actual of state.actual_forces) {
      this.addArrow(actual.position, actual.force, scale, COLORS.actual);
    }
    for (const estimate of state.estimates) {
      const anchor = estimate.position ?? this.sectionMidpoint(state, estimate.first_piece, estimate.last_piece);
      const color = estimate.boundary ? COLORS.clamp : COLORS.estimate;
      this.addArrow(anchor, estimate.force, scale, color);
    }
    for (const clamp of state.clamps) {
      const marker = new THREE.Mesh(
        new THREE.SphereGeometry(0.006, 12, 12),
        new THREE.MeshStandardMaterial({ color: 0x333333 }),
      );
      marker.position.set(...clamp.position);
      this.scene.add(marker);
      this.clampMarkers.push(marker);
    }
  }

  private sectionMidpoint(state: StateUpdate, first: number, last: number): Vec3 {
    const a = state.nodes[first];
    const b = state.nodes[Math.min(last + 1, state.nodes.length - 1)];
    return [(a[0] + b[0]) / 2, (a[1] + b[1]) / 2, (a[2] + b[2]) / 2];
  }

  private addArrow(anchor: Vec3, force: Vec3, scale: number, color: number) {
    const magnitude = norm(force);
    if (magnitude === 0 || scale === 0) return;
    const segment = arrowSegment(anchor, force, scale);
    const direction = new THREE.Vector3(
      segment.to[0] - segment.from[0],
      segment.to[1] - segment.from[1],
      segment.to[2] - segment.from[2],
    );
    const length = direction.length();
    direction.normalize();
    const arrow = new THREE.ArrowHelper(
      direction,
      new THREE.Vector3(...segment.from),
      length,
      color,
      Math.min(0.02, 0.3 * length),
      Math.min(0.01, 0.15 * length),
    );
    this.scene.add(arrow);
    this.arrows.push(arrow);
  }

  /** Dashed preview of the force being dragged out. */
  private preview: THREE.ArrowHelper | null = null;

  showPreview(anchor: Vec3, force: Vec3, referenceForces: Vec3[]) {
    this.clearPreview();
    const scale = sharedArrowScale([...referenceForces, force], ARROW_TARGET_LENGTH);
    const magnitude = norm(force);
    if (magnitude === 0 || scale === 0) return;
    const segment = arrowSegment(anchor, force, scale);
    const direction = new THREE.Vector3(
      segment.to[0] - segment.from[0],
      segment.to[1] - segment.from[1],
      segment.to[2] - segment.from[2],
    ).normalize();
    this.preview = new THREE.ArrowHelper(
      direction,
      new THREE.Vector3(...segment.from),
      magnitude * scale,
      COLORS.ghost,
    );
    this.scene.add(this.preview);
  }

  clearPreview() {
    if (this.preview !== null) {
      this.scene.remove(this.preview);
      this.preview = null;
    }
  }
}
