import { ServiceError, StreamHandle, StreamHandlers, Transport, Scheduler } from "../src/session.js";
import type { ViewerState } from "../src/types.js";

export class VirtualScheduler implements Scheduler {
  private timers = new Map<number, { fn: () => void; due: number }>();
  private nextId = 1;
  private time = 0;

  setTimeout(fn: () => void, ms: number): number {
    const id = this.nextId++;
    this.timers.set(id, { fn, due: this.time + ms });
    return id;
  }

  clearTimeout(id: number): void {
    this.timers.delete(id);
  }

  now(): number {
    return this.time;
  }

  async advance(ms: number): Promise<void> {
    const target = this.time + ms;
    for (;;) {
      const due = [...this.timers.entries()]
        .filter(([, t]) => t.due <= target)
        .sort((a, b) => a[1].due - b[1].due);
      if (due.length === 0) {
        break;
      }
      const [id, timer] = due[0];
      this.timers.delete(id);
      this.time = timer.due;
      timer.fn();
      await Promise.resolve();
      await Promise.resolve();
    }
    this.time = target;
  }
}

export function makeState(seq: number, over: Partial<ViewerState> = {}): ViewerState {
  return {
    assetId: "head",
    weights: [0, 0],
    camera: {
      position: [3, 0, 0],
      orientation: [[0, 1, 0], [0, 0, -1], [-1, 0, 0]],
      vertical_fov_degrees: 33,
      width: 64,
      height: 64,
      near: 0.01,
      far: 100,
    },
    pruneThreshold: 0,
    background: [0, 0, 0],
    seq,
    ...over,
  };
}

export class FakeTransport implements Transport {
  state: ViewerState = makeState(1);
  assets = [{ id: "head", points: 100, blendshapes: 2, shDegree: 1 }];
  posts: unknown[] = [];
  failNextPost: { status: number; detail: { field: string; message: string } } | null = null;
  down = false;
  streamHandlers: StreamHandlers | null = null;
  streamsOpened = 0;
  postDelayPromise: Promise<void> | null = null;

  async getJson(path: string): Promise<unknown> {
    if (this.down) {
      throw new Error("connection refused");
    }
    if (path === "/assets") {
      return this.assets;
    }
    if (path === "/state") {
      return this.state;
    }
    if (path === "/metrics") {
      return { renders: 1, lastFrameMs: 5, meanFrameMs: 5, assetId: "head",
               totalPoints: 100, visiblePoints: 80, seq: this.state.seq };
    }
    throw new Error(`no handler for ${path}`);
  }

  async postJson(_path: string, body: unknown): Promise<unknown> {
    if (this.down) {
      throw new Error("connection refused");
    }
    if (this.postDelayPromise) {
      await this.postDelayPromise;
    }
    if (this.failNextPost) {
      const fail = this.failNextPost;
      this.failNextPost = null;
      throw new ServiceError(fail.status, fail.detail);
    }
    this.posts.push(body);
    const b = body as Partial<ViewerState>;
    this.state = makeState(this.state.seq + 1, {
      assetId: b.assetId, weights: b.weights, camera: b.camera,
      pruneThreshold: b.pruneThreshold, background: b.background,
    });
    return this.state;
  }

  openStream(handlers: StreamHandlers): StreamHandle {
    this.streamsOpened += 1;
    this.streamHandlers = handlers;
    return { close: () => undefined };
  }

  pushFrame(seq: number, bytes = new Uint8Array([1, 2, 3])): void {
    this.streamHandlers?.onMeta(seq);
    this.streamHandlers?.onFrame(bytes);
  }

  dropStream(): void {
    this.streamHandlers?.onClose();
  }
}
