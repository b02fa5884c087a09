import type { UiTrace } from "./state.js";
import type { Axis } from "./types.js";

/** The subset of CanvasRenderingContext2D the renderer needs (testable). */
export interface DrawSurface {
  lineWidth: number;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  fillStyle: string | CanvasGradient | CanvasPattern;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  stroke(): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  fill(): void;
}

export interface ViewTransform {
  axis: Axis;
  spacing: [number, number, number];
  zoom: number;
  panX: number;
  panY: number;
}

const AXIS_PLANES: Record<Axis, [number, number]> = {
  x: [1, 2],
  y: [0, 2],
  z: [0, 1],
};

/** Project a µm point to image pixels for the current axis. */
export function projectUmToPx(
  point: [number, number, number],
  view: ViewTransform,
): [number, number] {
  const [a, b] = AXIS_PLANES[view.axis];
  return [point[a] / view.spacing[a], point[b] / view.spacing[b]];
}

export function imagePxToScreen(px: [number, number], view: ViewTransform): [number, number] {
  return [px[0] * view.zoom + view.panX, px[1] * view.zoom + view.panY];
}

export function screenToImagePx(
  screen: [number, number],
  view: ViewTransform,
): [number, number] {
  return [(screen[0] - view.panX) / view.zoom, (screen[1] - view.panY) / view.zoom];
}

/**
 * Draw trace polylines over the projection. Geometry comes verbatim from the
 * service payloads; the only transformation applied is the view projection.
 */
export function drawTraces(surface: DrawSurface, traces: UiTrace[], view: ViewTransform): void {
  for (const trace of traces) {
    const points = trace.payload.polyline_um;
    if (points.length === 0) continue;
    surface.strokeStyle = trace.color;
    surface.lineWidth = 2;
    surface.beginPath();
    points.forEach((p, i) => {
      const [x, y] = imagePxToScreen(projectUmToPx(p, view), view);
      if (i === 0) surface.moveTo(x, y);
      else surface.lineTo(x, y);
    });
    surface.stroke();
  }
}

export function drawPendingPick(
  surface: DrawSurface,
  pick: { xPx: number; yPx: number } | null,
  view: ViewTransform,
): void {
  if (!pick) return;
  const [x, y] = imagePxToScreen([pick.xPx, pick.yPx], view);
  surface.fillStyle = "#ffd700";
  surface.beginPath();
  surface.arc(x, y, 5, 0, 2 * Math.PI);
  surface.fill();
}
