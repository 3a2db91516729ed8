/**
 * Input mapping: pointer position on the canvas maps to the x-z workspace
 * plane, scroll / depth keys nudge y, and one key per grip class in the
 * session's class set selects the commanded grip.
 */

import type { Vec3 } from "./protocol.js";

export const FULL_GRIP_KEYS: Record<string, string> = {
  r: "Rest",
  o: "Open",
  p: "Power",
  k: "Key",
  t: "Tripod",
  i: "Pinch",
  n: "Pronate",
  s: "Supinate",
};

export interface Viewport {
  width: number;
  height: number;
  // workspace box projected to the canvas
  xMin: number;
  xMax: number;
  zMin: number;
  zMax: number;
}

export interface PoseState {
  pos: Vec3;
  grip: string;
}

export const DEPTH_STEP = 0.02;

export function makeViewport(
  width: number,
  height: number,
  workspace: { min: Vec3; max: Vec3 },
): Viewport {
  return {
    width,
    height,
    xMin: workspace.min[0],
    xMax: workspace.max[0],
    zMin: workspace.min[2],
    zMax: workspace.max[2],
  };
}

/** Canvas pixel -> workspace x-z. Canvas y grows downward, workspace z up. */
export function pointerToWorkspace(
  vp: Viewport,
  px: number,
  py: number,
): [number, number] {
  const x = vp.xMin + (px / vp.width) * (vp.xMax - vp.xMin);
  const z = vp.zMax - (py / vp.height) * (vp.zMax - vp.zMin);
  return [x, z];
}

/** Workspace point -> canvas pixel; inverse of pointerToWorkspace. */
export function workspaceToPointer(
  vp: Viewport,
  x: number,
  z: number,
): [number, number] {
  const px = ((x - vp.xMin) / (vp.xMax - vp.xMin)) * vp.width;
  const py = ((vp.zMax - z) / (vp.zMax - vp.zMin)) * vp.height;
  return [px, py];
}

export function movePointer(state: PoseState, vp: Viewport, px: number, py: number): PoseState {
  const [x, z] = pointerToWorkspace(vp, px, py);
  return { ...state, pos: [x, state.pos[1], z] };
}

/** Wheel/depth keys move along y; clamped to the workspace box. */
export function nudgeDepth(
  state: PoseState,
  direction: 1 | -1,
  workspace: { min: Vec3; max: Vec3 },
): PoseState {
  const y = Math.min(
    Math.max(state.pos[1] + direction * DEPTH_STEP, workspace.min[1]),
    workspace.max[1],
  );
  return { ...state, pos: [state.pos[0], y, state.pos[2]] };
}

/** Returns the grip class for a key, or null if the key is unbound or the
 * class is outside the session's class set. */
export function gripForKey(
  key: string,
  classSet: string[],
  bindings: Record<string, string> = FULL_GRIP_KEYS,
): string | null {
  const grip = bindings[key.toLowerCase()];
  if (grip === undefined || !classSet.includes(grip)) return null;
  return grip;
}

export function keyLegend(
  classSet: string[],
  bindings: Record<string, string> = FULL_GRIP_KEYS,
): { key: string; grip: string }[] {
  return Object.entries(bindings)
    .filter(([, grip]) => classSet.includes(grip))
    .map(([key, grip]) => ({ key, grip }));
}
