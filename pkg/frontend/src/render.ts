/**
 * Canvas rendering: 2.5-D orthographic front view (x-z plane) with depth
 * cued by marker scale. Pure functions over the scene model so rendering
 * can be exercised headlessly against a recording context.
 */

import type { SceneModel } from "./scene.js";
import type { EnvelopePanel } from "./envelope.js";
import { workspaceToPointer, type Viewport } from "./input.js";

/** Subset of CanvasRenderingContext2D the renderer touches; tests stub it. */
export interface DrawContext {
  fillStyle: string | CanvasGradient | CanvasPattern;
  strokeStyle: string | CanvasGradient | CanvasPattern;
  lineWidth: number;
  font: string;
  clearRect(x: number, y: number, w: number, h: number): void;
  fillRect(x: number, y: number, w: number, h: number): void;
  strokeRect(x: number, y: number, w: number, h: number): void;
  beginPath(): void;
  moveTo(x: number, y: number): void;
  lineTo(x: number, y: number): void;
  arc(x: number, y: number, r: number, a0: number, a1: number): void;
  stroke(): void;
  fill(): void;
  fillText(text: string, x: number, y: number): void;
}

/** Depth cue: marker radius grows as the hand comes toward the viewer. */
export function depthScale(y: number, base = 8): number {
  return base * (1 + Math.max(-0.5, Math.min(0.5, -y)));
}

export function renderScene(ctx: DrawContext, vp: Viewport, model: SceneModel): void {
  ctx.clearRect(0, 0, vp.width, vp.height);
  if (!model.frame) {
    ctx.fillStyle = "#888";
    ctx.fillText("waiting for server…", 10, 20);
    return;
  }

  // holders; the prompted start/target pair is highlighted
  for (const holder of model.frame.holders) {
    const [px, py] = workspaceToPointer(vp, holder.position[0], holder.position[2]);
    const prompted =
      model.prompt !== null &&
      (holder.id === model.prompt.startHolder || holder.id === model.prompt.targetHolder);
    ctx.fillStyle = prompted ? "#ffcc00" : "#4a4a4a";
    ctx.fillRect(px - 6, py - 6, 12, 12);
    if (prompted) {
      ctx.strokeStyle = "#ffcc00";
      ctx.strokeRect(px - 10, py - 10, 20, 20);
    }
  }

  // start/stop button
  const [bx, by] = workspaceToPointer(vp, model.frame.button[0], model.frame.button[2]);
  ctx.fillStyle = "#c0392b";
  ctx.beginPath();
  ctx.arc(bx, by, 7, 0, 2 * Math.PI);
  ctx.fill();

  // virtual hand with depth-scaled marker
  const [hx, hy] = workspaceToPointer(vp, model.hand[0], model.hand[2]);
  ctx.fillStyle = model.heldObject ? "#27ae60" : "#2980b9";
  ctx.beginPath();
  ctx.arc(hx, hy, depthScale(model.hand[1]), 0, 2 * Math.PI);
  ctx.fill();

  renderHud(ctx, vp, model);
}

export function renderHud(ctx: DrawContext, vp: Viewport, model: SceneModel): void {
  ctx.font = "14px sans-serif";
  ctx.fillStyle = "#eee";
  ctx.fillText(`phase: ${model.phase}`, 10, 18);
  ctx.fillText(
    `t ${model.elapsed.toFixed(1)} s  /  ${model.remaining.toFixed(1)} s left`,
    10,
    36,
  );
  if (model.prompt) {
    ctx.fillText(
      `move ${model.prompt.object}: ${model.prompt.startHolder} → ${model.prompt.targetHolder}`,
      10,
      54,
    );
  }
  if (model.card) {
    let row = 72;
    ctx.fillText(`trial ${model.card.outcome} (${model.card.totalTime} s)`, 10, row);
    for (const p of model.card.phases) {
      row += 18;
      ctx.fillText(
        `${p.name}: MT ${p.MT} s  PE ${p.PE} %  TP ${p.TP} bits/s`,
        10,
        row,
      );
    }
  }
  if (model.banner) {
    ctx.fillStyle = "#e74c3c";
    ctx.fillText(model.banner, vp.width / 2 - 40, vp.height / 2);
  }
}

export function renderEnvelopePanels(
  ctx: DrawContext,
  vp: Viewport,
  panels: EnvelopePanel[],
): void {
  ctx.clearRect(0, 0, vp.width, vp.height);
  const panelWidth = vp.width / Math.max(panels.length, 1);
  panels.forEach((panel, i) => {
    const x0 = i * panelWidth;
    ctx.fillStyle = "#eee";
    ctx.fillText(panel.condition, x0 + 8, 16);
    for (const band of panel.bands) {
      // outer range first, mean path on top
      ctx.strokeStyle = band.color;
      for (const series of [band.lo, band.hi, band.mean]) {
        ctx.lineWidth = series === band.mean ? 2 : 1;
        ctx.beginPath();
        series.forEach(([x, z], k) => {
          const [px, py] = workspaceToPointer(vp, x, z);
          const sx = x0 + (px / vp.width) * panelWidth;
          if (k === 0) ctx.moveTo(sx, py);
          else ctx.lineTo(sx, py);
        });
        ctx.stroke();
      }
    }
  });
}
