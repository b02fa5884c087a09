import { ApiError } from "./api.js";
import type { Axis, Orientation, PickResult, TracePayload, TraceRequest } from "./types.js";

export type Phase =
  | { kind: "idle" }
  | { kind: "startPicked"; fragment: number; orientation: Orientation };

export interface UiTrace {
  color: string;
  /** Raw service payload; rendering must not modify its geometry. */
  payload: TracePayload;
}

/** Distinct, id-stable trace colors. */
export const TRACE_PALETTE = [
  "#e6194b", "#3cb44b", "#4363d8", "#f58231", "#911eb4",
  "#46f0f0", "#f032e6", "#bcf60c", "#fabebe", "#008080",
];

export function traceColor(traceId: number): string {
  return TRACE_PALETTE[traceId % TRACE_PALETTE.length];
}

interface PickTraceApi {
  pick(xPx: number, yPx: number, axis: Axis): Promise<PickResult | null>;
  trace(request: TraceRequest): Promise<TracePayload>;
  deleteTrace(id: number): Promise<void>;
}

/**
 * Click-to-trace state machine.
 *
 * Transitions: idle -> startPicked on a successful first pick, then back to
 * idle with either a new trace or a visible error. A click that hits no
 * fragment leaves the phase unchanged. Network failures keep the pending pick
 * so the user can simply retry; only one request is in flight at a time.
 */
export class TraceController {
  phase: Phase = { kind: "idle" };
  traces: UiTrace[] = [];
  notice: string | null = null;
  busy = false;
  orientation: Orientation = "forward";

  constructor(private api: PickTraceApi) {}

  reset(): void {
    this.phase = { kind: "idle" };
    this.notice = null;
  }

  async clickAt(xPx: number, yPx: number, axis: Axis): Promise<void> {
    if (this.busy) return;
    this.busy = true;
    try {
      let picked: PickResult | null;
      try {
        picked = await this.api.pick(xPx, yPx, axis);
      } catch (err) {
        this.notice = this.describe(err);
        return; // pick state untouched; retry allowed
      }
      if (picked === null) {
        this.notice = "no fragment here";
        return; // pick state unchanged
      }
      if (this.phase.kind === "idle") {
        this.phase = {
          kind: "startPicked",
          fragment: picked.fragment,
          orientation: this.orientation,
        };
        this.notice = null;
        return;
      }
      await this.requestTrace(this.phase, picked.fragment);
    } finally {
      this.busy = false;
    }
  }

  private async requestTrace(
    start: Extract<Phase, { kind: "startPicked" }>,
    endFragment: number,
  ): Promise<void> {
    try {
      const payload = await this.api.trace({
        start_fragment: start.fragment,
        start_orientation: start.orientation,
        end_fragment: endFragment,
        end_orientation: this.orientation,
      });
      this.traces.push({ color: traceColor(payload.id), payload });
      this.phase = { kind: "idle" };
      this.notice = null;
    } catch (err) {
      if (err instanceof ApiError) {
        // 409 no path (or any rejected request): show it and clear the pick
        this.notice = err.status === 409 ? `no path: ${err.message}` : err.message;
        this.phase = { kind: "idle" };
      } else {
        // network trouble: keep the pending pick for a retry
        this.notice = this.describe(err);
      }
    }
  }

  renameTrace(id: number, name: string): void {
    const entry = this.traces.find((t) => t.payload.id === id);
    if (entry) entry.payload.name = name;
  }

  async removeTrace(id: number): Promise<void> {
    await this.api.deleteTrace(id);
    this.traces = this.traces.filter((t) => t.payload.id !== id);
  }

  private describe(err: unknown): string {
    if (err instanceof Error) return `request failed: ${err.message} (retry)`;
    return "request failed (retry)";
  }
}
