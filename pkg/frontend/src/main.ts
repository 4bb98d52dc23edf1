/** Browser wiring: dial + mode buttons + image panels against the service. */

import { ApiClient, type Frame, type Meta } from "./api.js";
import { Dial } from "./dial.js";
import { DEFAULT_DEBOUNCE_MS, RenderScheduler } from "./scheduler.js";
import {
  applyFrame,
  initialState,
  type Mode,
  normalizeYaw,
  type ViewerState,
  withDial,
  withError,
  withLocation,
  withMode,
} from "./state.js";

const MODES: Mode[] = ["prediction", "ground-truth", "side-by-side", "residue"];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setImage(img: HTMLImageElement, blob: Blob): void {
  const url = URL.createObjectURL(blob);
  const old = img.dataset.objectUrl;
  img.src = url;
  img.dataset.objectUrl = url;
  if (old) URL.revokeObjectURL(old);
}

async function boot(): Promise<void> {
  const base = (window.location.hash || "#").slice(1) || "";
  const api = new ApiClient(base);
  const meta: Meta = await api.fetchMeta();

  let state: ViewerState = initialState(meta.locations[0]);

  const primary = el<HTMLImageElement>("panel-primary");
  const secondary = el<HTMLImageElement>("panel-secondary");
  const statusLine = el<HTMLDivElement>("status");
  const errorBadge = el<HTMLDivElement>("error-badge");
  const dialCanvas = el<HTMLCanvasElement>("dial");
  const modeBar = el<HTMLDivElement>("modes");
  const locationSelect = el<HTMLSelectElement>("location");

  for (const loc of meta.locations) {
    const opt = document.createElement("option");
    opt.value = String(loc);
    opt.textContent = `location ${loc}`;
    locationSelect.appendChild(opt);
  }

  const dial = new Dial(dialCanvas, meta.reference_yaws, (yaw) => {
    state = withDial(state, yaw);
    render();
    scheduler.schedule(state.dialYaw);
  });

  async function fetchForMode(yaw: number, signal: AbortSignal): Promise<Frame[]> {
    const loc = state.location;
    switch (state.mode) {
      case "prediction":
        return [await api.fetchPrediction(loc, yaw, signal)];
      case "ground-truth":
        return [await api.fetchGroundTruth(loc, yaw, signal)];
      case "residue":
        return [await api.fetchResidue(loc, yaw, signal)];
      case "side-by-side": {
        const pred = await api.fetchPrediction(loc, yaw, signal);
        const gt = await api.fetchGroundTruth(loc, pred.snappedYaw, signal);
        return [pred, gt];
      }
    }
  }

  const scheduler = new RenderScheduler<Frame[]>(
    fetchForMode,
    (frames) => {
      state = applyFrame(state, frames[0]);
      setImage(primary, frames[0].blob);
      if (frames.length > 1) setImage(secondary, frames[1].blob);
      secondary.style.display = frames.length > 1 ? "inline-block" : "none";
      render();
    },
    (err) => {
      state = withError(state, err instanceof Error ? err.message : String(err));
      render();
    },
    DEFAULT_DEBOUNCE_MS,
  );

  for (const mode of MODES) {
    const button = document.createElement("button");
    button.textContent = mode;
    button.dataset.mode = mode;
    button.addEventListener("click", () => {
      state = withMode(state, mode);
      render();
      scheduler.schedule(state.dialYaw);
    });
    modeBar.appendChild(button);
  }

  locationSelect.addEventListener("change", () => {
    state = withLocation(state, parseInt(locationSelect.value, 10));
    scheduler.schedule(state.dialYaw);
  });

  function render(): void {
    dial.draw(state.dialYaw, state.snappedYaw);
    const snap = state.snappedYaw === null ? "-" : `${state.snappedYaw}`;
    const kind = state.frameKind ?? "-";
    statusLine.textContent =
      `dial ${state.dialYaw.toFixed(1)}  snapped ${snap}  showing ${kind}  mode ${state.mode}`;
    errorBadge.textContent = state.lastError ?? "";
    errorBadge.style.display = state.lastError ? "inline-block" : "none";
    for (const button of modeBar.querySelectorAll("button")) {
      button.classList.toggle("active", button.dataset.mode === state.mode);
    }
  }

  render();
  await scheduler.fireNow(normalizeYaw(state.dialYaw));
}

void boot().catch((err) => {
  const badge = document.getElementById("error-badge");
  if (badge) {
    badge.textContent = `failed to start: ${err}`;
    (badge as HTMLElement).style.display = "inline-block";
  }
});
