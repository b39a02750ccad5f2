/**
 * WebSocket client: atomic snapshot swap plus a throttled sender for the
 * continuous drag stream. The latest snapshot is replaced whole, never
 * merged, so a render always sees one consistent revision.
 */

import { parseServerFrame, type ClientFrame, type StateUpdate } from "./protocol.js";

export interface ConnectionEvents {
  onState: (state: StateUpdate) => void;
  onError?: (category: string, message: string) => void;
  onClose?: () => void;
}

export class Connection {
  private ws: WebSocket;
  private lastSent = 0;
  private pending: string | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  latest: StateUpdate | null = null;

  constructor(url: string, private events: ConnectionEvents, private throttleMs = 60) {
    this.ws = new WebSocket(url);
    this.ws.onmessage = (event) => this.handle(String(event.data));
    this.ws.onclose = () => this.events.onClose?.();
  }

  private handle(text: string) {
    const frame = parseServerFrame(text);
    if (frame === null) return;
    if (frame.type === "state_update") {
      if (this.latest === null || frame.revision >= this.latest.revision) {
        this.latest = frame;
        this.events.onState(frame);
      }
    } else if (frame.type === "error") {
      this.events.onError?.(frame.category, frame.message);
    }
  }

  send(frame: ClientFrame) {
    if (this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(frame));
    }
  }

  /** Throttled variant used while a drag is in progress. */
  sendThrottled(frame: ClientFrame) {
    const text = JSON.stringify(frame);
    const now = Date.now();
    if (now - this.lastSent >= this.throttleMs) {
      this.lastSent = now;
      if (this.ws.readyState === WebSocket.OPEN) this.ws.send(text);
      return;
    }
    this.pending = text;
    if (this.timer === null) {
      this.timer = setTimeout(() => {
        this.timer = null;
        if (this.pending !== null && this.ws.readyState === WebSocket.OPEN) {
          this.lastSent = Date.now();
          this.ws.send(this.pending);
          this.pending = null;
        }
      }, this.throttleMs);
    }
  }

  close() {
    this.ws.close();
  }
}
