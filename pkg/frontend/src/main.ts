/**
 * Viewer entry point: renderer, a small orbit camera, the drag-to-force
 * gesture, and the metrics strip. Forces are entered in the camera-facing
 * plane by default; holding x/y/z locks the force to that world axis so
 * single-axis probes are reproducible by hand.
 */

import * as THREE from "three";

import { Connection } from "./connection.js";
import {
  dragToForce,
  pickPiece,
  type AxisLock,
  type CameraFixture,
} from "./geometry.js";
import { WireScene } from "./scene.js";
import type { StateUpdate, Vec3 } from "./protocol.js";

const GAIN_N_PER_PIXEL = 0.01;
const PICK_RADIUS_M = 0.03;

const canvas = document.getElementById("view") as HTMLCanvasElement;
const metricsStrip = document.getElementById("metrics") as HTMLDivElement;
const statusLine = document.getElementById("status") as HTMLDivElement;

const renderer = new THREE.WebGLRenderer({ canvas, antialias: true });
const camera = new THREE.PerspectiveCamera(50, 1, 0.01, 50);
camera.up.set(0, 0, 1);

// Orbit state: spherical coordinates around a target point.
const target = new THREE.Vector3(0.15, 0, -0.08);
let radius = 0.7;
let theta = -Math.PI / 2; // azimuth
let phi = 1.2; // polar

function applyCamera() {
  camera.position.set(
    target.x + radius * Math.sin(phi) * Math.cos(theta),
    target.y + radius * Math.sin(phi) * Math.sin(theta),
    target.z + radius * Math.cos(phi),
  );
  camera.lookAt(target);
}

function resize() {
  const width = canvas.clientWidth || window.innerWidth;
  const height = canvas.clientHeight || window.innerHeight - 60;
  renderer.setSize(width, height, false);
  camera.aspect = width / height;
  camera.updateProjectionMatrix();
}
window.addEventListener("resize", resize);

const scene = new WireScene();
const url = `ws://${location.host}/ws`;

let axisLock: AxisLock = null;
window.addEventListener("keydown", (e) => {
  if (e.key === "x" || e.key === "y" || e.key === "z") axisLock = e.key;
});
window.addEventListener("keyup", (e) => {
  if (e.key === axisLock) axisLock = null;
});

interface DragState {
  piece: number;
  r: number;
  anchor: Vec3;
  startX: number;
  startY: number;
  lastForce: Vec3;
}
let drag: DragState | null = null;

const connection = new Connection(url, {
  onState: (state) => {
    scene.update(state);
    renderMetrics(state);
    statusLine.textContent =
      `rev ${state.revision} | residual ${state.residual.toExponential(1)} N` +
      (state.converged ? "" : " (NOT CONVERGED)") +
      (state.estimate_error ? ` | ${state.estimate_error}` : "");
  },
  onError: (category, message) => {
    statusLine.textContent = `error [${category}]: ${message}`;
  },
  onClose: () => {
    statusLine.textContent = "connection closed";
  },
});

function renderMetrics(state: StateUpdate) {
  if (!state.metrics.length) {
    metricsStrip.textContent = "metrics: apply a force to compare";
    return;
  }
  const m = state.metrics[0];
  const angle = m.angle_defined && m.angle_deg !== null ? m.angle_deg.toFixed(2) : "n/a";
  const pos = m.pos_diff_m !== null ? (m.pos_diff_m * 1e3).toFixed(1) : "n/a";
  metricsStrip.textContent =
    `largest force - rel L2: ${m.rel_l2.toFixed(4)} | angle: ${angle} deg | position: ${pos} mm`;
}

function cameraFixture(): CameraFixture {
  const forward = new THREE.Vector3();
  camera.getWorldDirection(forward);
  const up = camera.up.clone().projectOnPlane(forward).normalize();
  return {
    position: [camera.position.x, camera.position.y, camera.position.z],
    forward: [forward.x, forward.y, forward.z],
    up: [up.x, up.y, up.z],
    fovY: (camera.fov * Math.PI) / 180,
    viewportWidth: renderer.domElement.width,
    viewportHeight: renderer.domElement.height,
  };
}

function pickAtPointer(event: PointerEvent) {
  const rect = canvas.getBoundingClientRect();
  const ndc = new THREE.Vector2(
    ((event.clientX - rect.left) / rect.width) * 2 - 1,
    -((event.clientY - rect.top) / rect.height) * 2 + 1,
  );
  const raycaster = new THREE.Raycaster();
  raycaster.setFromCamera(ndc, camera);
  const state = connection.latest;
  if (state === null) return null;
  // Clamp pieces are excluded: a grab near a clamp anchors to the nearest
  // free piece instead.
  const excluded = new Set<number>([0, state.nodes.length - 2]);
  const origin = raycaster.ray.origin;
  const direction = raycaster.ray.direction;
  return pickPiece(
    [origin.x, origin.y, origin.z],
    [direction.x, direction.y, direction.z],
    state.nodes,
    excluded,
  );
}

canvas.addEventListener("pointerdown", (event) => {
  if (event.button === 2) return; // right button orbits
  const hit = pickAtPointer(event);
  if (hit === null || hit.distance > PICK_RADIUS_M) return;
  drag = {
    piece: hit.piece,
    r: hit.r,
    anchor: hit.point,
    startX: event.clientX,
    startY: event.clientY,
    lastForce: [0, 0, 0],
  };
  canvas.setPointerCapture(event.pointerId);
});

canvas.addEventListener("pointermove", (event) => {
  if (drag !== null) {
    const force = dragToForce(
      cameraFixture(),
      drag.anchor,
      event.clientX - drag.startX,
      event.clientY - drag.startY,
      GAIN_N_PER_PIXEL,
      axisLock,
    );
    const delta: Vec3 = [
      force[0] - drag.lastForce[0],
      force[1] - drag.lastForce[1],
      force[2] - drag.lastForce[2],
    ];
    if (Math.hypot(...delta) > 1e-9) {
      connection.sendThrottled({
        type: "apply_force",
        piece: drag.piece,
        r: drag.r,
        force: delta,
      });
      drag.lastForce = force;
    }
    const reference = connection.latest
      ? connection.latest.actual_forces.map((f) => f.force)
      : [];
    scene.showPreview(drag.anchor, force, reference);
    return;
  }
  if ((event.buttons & 2) !== 0) {
    theta -= event.movementX * 0.005;
    phi = Math.min(Math.PI - 0.05, Math.max(0.05, phi - event.movementY * 0.005));
    applyCamera();
  }
});

canvas.addEventListener("pointerup", (event) => {
  if (drag === null) return;
  const force = dragToForce(
    cameraFixture(),
    drag.anchor,
    event.clientX - drag.startX,
    event.clientY - drag.startY,
    GAIN_N_PER_PIXEL,
    axisLock,
  );
  const delta: Vec3 = [
    force[0] - drag.lastForce[0],
    force[1] - drag.lastForce[1],
    force[2] - drag.lastForce[2],
  ];
  // Click-release with no movement: zero force, no message at all.
  if (Math.hypot(...force) > 1e-9 && Math.hypot(...delta) > 1e-9) {
    connection.send({
      type: "apply_force",
      piece: drag.piece,
      r: drag.r,
      force: delta,
    });
  }
  scene.clearPreview();
  drag = null;
});

canvas.addEventListener("wheel", (event) => {
  radius = Math.min(3, Math.max(0.1, radius * (1 + event.deltaY * 0.001)));
  applyCamera();
  event.preventDefault();
});

canvas.addEventListener("contextmenu", (e) => e.preventDefault());

document.getElementById("clear")?.addEventListener("click", () => {
  connection.send({ type: "clear_forces" });
});

applyCamera();
resize();

function animate() {
  requestAnimationFrame(animate);
  renderer.render(scene.scene, camera);
}
animate();
