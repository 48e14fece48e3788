// Wire-up: load an image (demo or upload), click two points, track, overlay.

import { ApiError, Client } from "./api.js";
import { draw } from "./render.js";
import { SessionView } from "./state.js";

const client = new Client("");
const view = new SessionView();

const canvas = document.getElementById("view") as HTMLCanvasElement;
const statusEl = document.getElementById("status") as HTMLElement;
const trackBtn = document.getElementById("track") as HTMLButtonElement;
const priorToggle = document.getElementById("prior") as HTMLInputElement;
const betaInput = document.getElementById("beta") as HTMLInputElement;
const alphaInput = document.getElementById("alpha") as HTMLInputElement;
const fileInput = document.getElementById("file") as HTMLInputElement;
const demoBtn = document.getElementById("demo") as HTMLButtonElement;
const clearBtn = document.getElementById("clear") as HTMLButtonElement;

let bitmap: ImageBitmap | null = null;

function setStatus(text: string): void {
  statusEl.textContent = text;
}

function refresh(): void {
  draw(view, canvas, bitmap);
  trackBtn.disabled = !view.canTrack;
  if (view.error) setStatus(view.error);
}

async function loadBlob(blob: Blob): Promise<void> {
  const info = await client.uploadImage(blob);
  bitmap = await createImageBitmap(blob);
  view.reset(info.session, info.width, info.height);
  const scale = Math.min(canvas.width / info.width, canvas.height / info.height);
  view.setZoom(scale, [0, 0]);
  setStatus(`session ${info.session}: click a source and a target point ` +
            `(drag to set the direction)`);
  refresh();
}

async function runTrack(): Promise<void> {
  if (!view.session || view.busy) {
    view.pendingRerun = view.busy;
    return;
  }
  view.busy = true;
  trackBtn.disabled = true;
  setStatus("solving...");
  try {
    const resp = await client.track(
      view.session,
      view.trackRequest(Number(betaInput.value), Number(alphaInput.value),
                        priorToggle.checked));
    view.storePath(resp);
    setStatus(`${resp.variant}: arrival value ${resp.distance.toFixed(2)}, ` +
              `${resp.solve.accepted} nodes in ${resp.solve.wall_time.toFixed(1)}s`);
  } catch (e) {
    if (e instanceof ApiError) {
      setStatus(`error ${e.status}: ${e.message}`);
    } else {
      setStatus(`error: ${e}`);
    }
  } finally {
    view.busy = false;
    refresh();
    if (view.pendingRerun) {
      view.pendingRerun = false;
      void runTrack();
    }
  }
}

let downAt: [number, number] | null = null;
canvas.addEventListener("mousedown", (ev) => {
  const r = canvas.getBoundingClientRect();
  downAt = [ev.clientX - r.left, ev.clientY - r.top];
});
canvas.addEventListener("mouseup", (ev) => {
  if (!downAt) return;
  const r = canvas.getBoundingClientRect();
  const upAt: [number, number] = [ev.clientX - r.left, ev.clientY - r.top];
  if (view.placePoint(downAt, upAt)) refresh();
  else if (view.error) setStatus(view.error);
  downAt = null;
});
canvas.addEventListener("wheel", (ev) => {
  ev.preventDefault();
  const r = canvas.getBoundingClientRect();
  const anchor: [number, number] = [ev.clientX - r.left, ev.clientY - r.top];
  const factor = ev.deltaY < 0 ? 1.25 : 0.8;
  view.setZoom(view.transform.scale * factor, anchor);
  refresh();
});

trackBtn.addEventListener("click", () => void runTrack());
clearBtn.addEventListener("click", () => {
  view.markers = [];
  view.paths = [];
  view.error = null;
  refresh();
});
priorToggle.addEventListener("change", () => {
  if (view.canTrack && view.paths.length) void runTrack();
});
demoBtn.addEventListener("click", async () => {
  const r = await fetch(client.demoImageUrl());
  await loadBlob(await r.blob());
});
fileInput.addEventListener("change", async () => {
  const f = fileInput.files?.[0];
  if (f) await loadBlob(f);
});

setStatus("load the demo image or upload a grayscale PNG/PGM");
