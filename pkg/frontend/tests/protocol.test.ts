import { describe, expect, it } from "vitest";

import {
  applyForceFrame,
  isStateUpdate,
  parseServerFrame,
} from "../src/protocol.js";

const STATE = {
  type: "state_update",
  revision: 3,
  converged: true,
  residual: 1e-9,
  energy: 0.4,
  nodes: [
    [0, 0, 0],
    [0.1, 0, 0],
  ],
  clamps: [],
  actual_forces: [],
  estimates: [],
  estimate_error: null,
  metrics: [],
};

describe("parseServerFrame", () => {
  it("accepts a state update", () => {
    const frame = parseServerFrame(JSON.stringify(STATE));
    expect(frame).not.toBeNull();
    expect(frame!.type).toBe("state_update");
    expect(isStateUpdate(frame)).toBe(true);
  });

  it("accepts error frames", () => {
    const frame = parseServerFrame(
      JSON.stringify({ type: "error", category: "bad_message", message: "no" }),
    );
    expect(frame!.type).toBe("error");
  });

  it("rejects garbage", () => {
    expect(parseServerFrame("not json")).toBeNull();
    expect(parseServerFrame('{"type": "state_update"}')).toBeNull();
    expect(
      parseServerFrame(JSON.stringify({ ...STATE, nodes: [[0, 0]] })),
    ).toBeNull();
  });
});

describe("applyForceFrame", () => {
  it("serializes the exact wire shape", () => {
    const text = applyForceFrame(14, 0.5, [0, 0.4, -0.8]);
    expect(JSON.parse(text)).toEqual({
      type: "apply_force",
      piece: 14,
      r: 0.5,
      force: [0, 0.4, -0.8],
    });
  });
});
