/** Connection + state logic for the live viewer, kept free of DOM concerns so
 * the sequencing rules are unit-testable: a debounced single-flight POST of
 * control changes, stale-frame rejection by sequence number, and stream
 * reconnection with backoff. */

import type {
  AssetInfo, ConnectionStatus, FieldError, Metrics, ViewerState,
} from "./types.js";

export interface StreamHandle {
  close(): void;
}

export interface StreamHandlers {
  onMeta(seq: number): void;
  onFrame(png: Uint8Array): void;
  onClose(): void;
}

export interface Transport {
  getJson(path: string): Promise<unknown>;
  postJson(path: string, body: unknown): Promise<unknown>;
  openStream(handlers: StreamHandlers): StreamHandle;
}

export interface Scheduler {
  setTimeout(fn: () => void, ms: number): number;
  clearTimeout(id: number): void;
  now(): number;
}

export class ServiceError extends Error {
  status: number;
  detail: FieldError | null;

  constructor(status: number, detail: FieldError | null, message?: string) {
    super(message ?? `service error ${status}`);
    this.status = status;
    this.detail = detail;
  }
}

export interface DisplayedFrame {
  seq: number;
  png: Uint8Array;
  state: ViewerState | null;
  latencyMs: number | null;
}

export interface SessionOptions {
  debounceMs?: number;
  reconnectBackoffMs?: number[];
}

const DEFAULT_BACKOFF = [250, 500, 1000, 2000, 5000];

export class ViewerSession {
  assets: AssetInfo[] = [];
  state: ViewerState | null = null;       // last acknowledged server state
  status: ConnectionStatus = "connecting";
  fieldErrors: Record<string, string> = {};
  lastFrame: DisplayedFrame | null = null;

  onFrame: ((frame: DisplayedFrame) => void) | null = null;
  onStatus: ((status: ConnectionStatus) => void) | null = null;
  onState: ((state: ViewerState) => void) | null = null;
  onFieldErrors: ((errors: Record<string, string>) => void) | null = null;

  private transport: Transport;
  private scheduler: Scheduler;
  private debounceMs: number;
  private backoff: number[];

  private pending: Record<string, unknown> = {};
  private debounceId: number | null = null;
  private postInFlight = false;
  private postQueued = false;
  private lastAckedSeq = 0;
  private statesBySeq = new Map<number, ViewerState>();
  private pendingMetaSeq: number | null = null;
  private postSentAt = new Map<number, number>();
  private stream: StreamHandle | null = null;
  private reconnectAttempt = 0;
  private closed = false;

  constructor(transport: Transport, scheduler: Scheduler, opts: SessionOptions = {}) {
    this.transport = transport;
    this.scheduler = scheduler;
    this.debounceMs = opts.debounceMs ?? 50;
    this.backoff = opts.reconnectBackoffMs ?? DEFAULT_BACKOFF;
  }

  async connect(): Promise<void> {
    this.setStatus("connecting");
    try {
      this.assets = (await this.transport.getJson("/assets")) as AssetInfo[];
      const state = (await this.transport.getJson("/state")) as ViewerState;
      this.acceptState(state);
      this.openStream();
      this.setStatus("connected");
      this.reconnectAttempt = 0;
    } catch (err) {
      this.setStatus("failed");
      this.scheduleReconnect();
      throw err;
    }
  }

  close(): void {
    this.closed = true;
    this.stream?.close();
  }

  get blendshapeCount(): number {
    const asset = this.assets.find((a) => a.id === this.state?.assetId);
    return asset ? asset.blendshapes : this.state?.weights.length ?? 0;
  }

  /** Record a control change; the POST is debounced and latest-wins. */
  setControl(path: string, value: unknown): void {
    if (!this.state) {
      return;
    }
    if (path.startsWith("weights.")) {
      const index = Number(path.slice("weights.".length));
      const weights = (this.pending.weights as number[] | undefined)
        ?? [...this.state.weights];
      weights[index] = clamp01(value as number);
      this.pending.weights = weights;
    } else if (path === "pruneThreshold") {
      this.pending.pruneThreshold = Math.max(0, Math.min(0.999, value as number));
    } else {
      this.pending[path] = value;
    }
    if (this.debounceId !== null) {
      this.scheduler.clearTimeout(this.debounceId);
    }
    this.debounceId = this.scheduler.setTimeout(() => {
      this.debounceId = null;
      void this.flush();
    }, this.debounceMs);
  }

  /** Send pending changes now (single in-flight POST, latest wins). */
  async flush(): Promise<void> {
    if (!this.state || Object.keys(this.pending).length === 0) {
      return;
    }
    if (this.postInFlight) {
      this.postQueued = true;
      return;
    }
    const body = {
      assetId: this.state.assetId,
      weights: this.state.weights,
      camera: this.state.camera,
      pruneThreshold: this.state.pruneThreshold,
      background: this.state.background,
      ...this.pending,
    };
    this.pending = {};
    this.postInFlight = true;
    const sentAt = this.scheduler.now();
    try {
      const acked = (await this.transport.postJson("/state", body)) as ViewerState;
      if (Object.keys(this.fieldErrors).length) {
        this.fieldErrors = {};
        this.onFieldErrors?.(this.fieldErrors);
      }
      this.postSentAt.set(acked.seq, sentAt);
      this.acceptState(acked);
    } catch (err) {
      if (err instanceof ServiceError && err.detail) {
        this.fieldErrors[err.detail.field] = err.detail.message;
        this.onFieldErrors?.(this.fieldErrors);
      } else {
        this.setStatus("reconnecting");
        this.scheduleReconnect();
      }
    } finally {
      this.postInFlight = false;
      if (this.postQueued) {
        this.postQueued = false;
        void this.flush();
      }
    }
  }

  async fetchMetrics(): Promise<Metrics> {
    return (await this.transport.getJson("/metrics")) as Metrics;
  }

  private acceptState(state: ViewerState): void {
    this.state = state;
    this.lastAckedSeq = Math.max(this.lastAckedSeq, state.seq);
    this.statesBySeq.set(state.seq, state);
    if (this.statesBySeq.size > 64) {
      const oldest = Math.min(...this.statesBySeq.keys());
      this.statesBySeq.delete(oldest);
    }
    this.onState?.(state);
  }

  private openStream(): void {
    this.stream = this.transport.openStream({
      onMeta: (seq) => {
        this.pendingMetaSeq = seq;
      },
      onFrame: (png) => {
        const seq = this.pendingMetaSeq ?? this.lastAckedSeq;
        this.pendingMetaSeq = null;
        if (seq < this.lastAckedSeq) {
          return; // stale: rendered from an older state than the acked one
        }
        const sent = this.postSentAt.get(seq);
        const frame: DisplayedFrame = {
          seq,
          png,
          state: this.statesBySeq.get(seq) ?? null,
          latencyMs: sent === undefined ? null : this.scheduler.now() - sent,
        };
        this.lastFrame = frame;
        this.onFrame?.(frame);
      },
      onClose: () => {
        if (!this.closed) {
          this.setStatus("reconnecting");
          this.scheduleReconnect();
        }
      },
    });
  }

  private scheduleReconnect(): void {
    if (this.closed) {
      return;
    }
    const delay = this.backoff[Math.min(this.reconnectAttempt, this.backoff.length - 1)];
    this.reconnectAttempt += 1;
    this.scheduler.setTimeout(() => {
      if (!this.closed) {
        void this.connect().catch(() => undefined);
      }
    }, delay);
  }

  private setStatus(status: ConnectionStatus): void {
    if (this.status !== status) {
      this.status = status;
      this.onStatus?.(status);
    }
  }
}

function clamp01(x: number): number {
  return Math.max(0, Math.min(1, x));
}
