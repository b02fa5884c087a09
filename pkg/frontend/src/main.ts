import { ApiClient } from "./api.js";
import { drawPendingPick, drawTraces, screenToImagePx, ViewTransform } from "./render.js";
import { TraceController } from "./state.js";
import type { Axis, SessionInfo } from "./types.js";

const api = new ApiClient(
  new URLSearchParams(location.search).get("api") ?? "http://127.0.0.1:8000",
);
const controller = new TraceController(api);

const canvas = document.getElementById("view") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const axisSelect = document.getElementById("axis") as HTMLSelectElement;
const overlayToggle = document.getElementById("overlay") as HTMLInputElement;
const orientationToggle = document.getElementById("orientation") as HTMLInputElement;
const statusLine = document.getElementById("status") as HTMLElement;
const traceList = document.getElementById("traces") as HTMLElement;
const zoomInBtn = document.getElementById("zoom-in") as HTMLButtonElement;
const zoomOutBtn = document.getElementById("zoom-out") as HTMLButtonElement;

let info: SessionInfo;
let backdrop: HTMLImageElement | null = null;
let lastPickScreen: { xPx: number; yPx: number } | null = null;
const view: ViewTransform = {
  axis: "z",
  spacing: [1, 1, 1],
  zoom: 3,
  panX: 0,
  panY: 0,
};

function currentAxis(): Axis {
  return axisSelect.value as Axis;
}

function loadBackdrop(): void {
  const img = new Image();
  img.crossOrigin = "anonymous";
  img.onload = () => {
    backdrop = img;
    redraw();
  };
  img.src = overlayToggle.checked
    ? api.fragmentsOverlayUrl(currentAxis())
    : api.mipUrl(currentAxis());
}

function redraw(): void {
  ctx.fillStyle = "#111";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  if (backdrop) {
    ctx.imageSmoothingEnabled = false;
    ctx.drawImage(
      backdrop,
      view.panX,
      view.panY,
      backdrop.width * view.zoom,
      backdrop.height * view.zoom,
    );
  }
  drawTraces(ctx, controller.traces, view);
  drawPendingPick(ctx, lastPickScreen, view);
  renderStatus();
  renderTraceList();
}

function renderStatus(): void {
  if (controller.notice) {
    statusLine.textContent = controller.notice;
    statusLine.className = "status error";
  } else if (controller.phase.kind === "startPicked") {
    statusLine.textContent =
      `start: fragment ${controller.phase.fragment} (${controller.phase.orientation}) ` +
      "- click the end fragment";
    statusLine.className = "status pending";
  } else {
    statusLine.textContent = "click a fragment to start a trace";
    statusLine.className = "status";
  }
}

function renderTraceList(): void {
  traceList.replaceChildren();
  for (const trace of controller.traces) {
    const row = document.createElement("li");
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = trace.color;
    const name = document.createElement("input");
    name.value = trace.payload.name;
    name.onchange = () => controller.renameTrace(trace.payload.id, name.value);
    const exportLink = document.createElement("a");
    exportLink.textContent = "swc";
    exportLink.href = api.traceSwcUrl(trace.payload.id);
    exportLink.download = `${trace.payload.name}.swc`;
    const del = document.createElement("button");
    del.textContent = "delete";
    del.onclick = async () => {
      await controller.removeTrace(trace.payload.id);
      redraw();
    };
    row.append(swatch, name, exportLink, del);
    traceList.append(row);
  }
}

canvas.addEventListener("click", async (event) => {
  const [xPx, yPx] = screenToImagePx([event.offsetX, event.offsetY], view);
  const wasIdle = controller.phase.kind === "idle";
  await controller.clickAt(xPx, yPx, currentAxis());
  lastPickScreen =
    controller.phase.kind === "startPicked" && wasIdle ? { xPx, yPx } : null;
  redraw();
});

canvas.addEventListener("mousemove", (event) => {
  if (event.buttons & 1 && event.shiftKey) {
    view.panX += event.movementX;
    view.panY += event.movementY;
    redraw();
  }
});

zoomInBtn.onclick = () => {
  view.zoom *= 1.25;
  redraw();
};
zoomOutBtn.onclick = () => {
  view.zoom /= 1.25;
  redraw();
};
axisSelect.onchange = () => {
  view.axis = currentAxis();
  controller.reset();
  lastPickScreen = null;
  loadBackdrop();
};
overlayToggle.onchange = loadBackdrop;
orientationToggle.onchange = () => {
  controller.orientation = orientationToggle.checked ? "reversed" : "forward";
};

async function start(): Promise<void> {
  info = await api.sessionInfo();
  view.spacing = info.spacing;
  statusLine.textContent =
    `session: ${info.dims.join("x")} voxels, ${info.n_fragments} fragments`;
  loadBackdrop();
}

start().catch((err) => {
  statusLine.textContent = `cannot reach session API: ${err}`;
  statusLine.className = "status error";
});
