/** Viewer state: a single immutable owner updated by pure transitions. */

import type { Frame, Meta } from "./api.js";

export type Mode = "prediction" | "ground-truth" | "side-by-side" | "residue";

export interface ViewerState {
  location: number;
  dialYaw: number;
  /** Server-reported snap; never recomputed client-side. */
  snappedYaw: number | null;
  mode: Mode;
  frameKind: Frame["kind"] | null;
  lastError: string | null;
}

export function normalizeYaw(yaw: number): number {
  const y = yaw % 360;
  return y < 0 ? y + 360 : y;
}

export function initialState(location = 0): ViewerState {
  return {
    location,
    dialYaw: 90,
    snappedYaw: null,
    mode: "prediction",
    frameKind: null,
    lastError: null,
  };
}

/** Dial movement keeps the current mode and the last good frame info. */
export function withDial(state: ViewerState, yaw: number): ViewerState {
  return { ...state, dialYaw: normalizeYaw(yaw) };
}

export function withLocation(state: ViewerState, location: number): ViewerState {
  return { ...state, location, snappedYaw: null, frameKind: null };
}

export function withMode(state: ViewerState, mode: Mode): ViewerState {
  return { ...state, mode };
}

export function applyFrame(state: ViewerState, frame: Frame): ViewerState {
  return {
    ...state,
    snappedYaw: frame.snappedYaw,
    frameKind: frame.kind,
    lastError: null,
  };
}

/** Failures keep the previous frame; only the error badge changes. */
export function withError(state: ViewerState, message: string): ViewerState {
  return { ...state, lastError: message };
}

export function isReferenceYaw(yaw: number, meta: Meta): boolean {
  return meta.reference_yaws.includes(normalizeYaw(yaw));
}

/** Ground-truth-dependent modes need a captured view at the snapped yaw. */
export function modeAvailable(mode: Mode, state: ViewerState, meta: Meta): boolean {
  if (mode === "prediction") return true;
  const yaw = state.snappedYaw ?? state.dialYaw;
  return normalizeYaw(yaw) % meta.step_deg === 0;
}
