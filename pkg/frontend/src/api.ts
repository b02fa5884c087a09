import type {
  Axis,
  FragmentEndpoints,
  PickResult,
  SessionInfo,
  TracePayload,
  TraceRequest,
} from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

async function detailOf(resp: Response): Promise<string> {
  try {
    const body = await resp.json();
    return typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
  } catch {
    return resp.statusText;
  }
}

/** Thin typed client over the tracing session HTTP API. */
export class ApiClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async sessionInfo(): Promise<SessionInfo> {
    const resp = await fetch(this.url("/session/info"));
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    return resp.json();
  }

  mipUrl(axis: Axis): string {
    return this.url(`/mip?axis=${axis}`);
  }

  fragmentsOverlayUrl(axis: Axis): string {
    return this.url(`/fragments?axis=${axis}`);
  }

  traceSwcUrl(id: number): string {
    return this.url(`/trace/${id}/swc`);
  }

  async fragmentEndpoints(axis: Axis): Promise<FragmentEndpoints[]> {
    const resp = await fetch(this.url(`/fragments/endpoints?axis=${axis}`));
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    const body = await resp.json();
    return body.fragments;
  }

  /** Resolve a click to a fragment; null when nothing is near the pixel. */
  async pick(xPx: number, yPx: number, axis: Axis): Promise<PickResult | null> {
    const resp = await fetch(this.url("/pick"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ x_px: xPx, y_px: yPx, axis }),
    });
    if (resp.status === 404) return null;
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    return resp.json();
  }

  async trace(request: TraceRequest): Promise<TracePayload> {
    const resp = await fetch(this.url("/trace"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
    });
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    return resp.json();
  }

  async traces(): Promise<TracePayload[]> {
    const resp = await fetch(this.url("/traces"));
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
    const body = await resp.json();
    return body.traces;
  }

  async deleteTrace(id: number): Promise<void> {
    const resp = await fetch(this.url(`/trace/${id}`), { method: "DELETE" });
    if (!resp.ok) throw new ApiError(resp.status, await detailOf(resp));
  }
}
