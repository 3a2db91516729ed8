/**
 * Browser entry point: connect, run a session, render at the broadcast rate.
 *
 * Raw TCP is not reachable from a page, so the browser build expects a
 * WebSocket bridge that relays newline-delimited JSON unchanged. Everything
 * below the transport is shared with the node test driver.
 */

import { ProtocolClient, type Transport } from "./protocol.js";
import {
  applyDisconnect,
  applyMessage,
  emptyScene,
  type SceneModel,
} from "./scene.js";
import {
  FULL_GRIP_KEYS,
  gripForKey,
  keyLegend,
  makeViewport,
  movePointer,
  nudgeDepth,
  type PoseState,
  type Viewport,
} from "./input.js";
import { renderScene, type DrawContext } from "./render.js";

class WebSocketTransport implements Transport {
  private dataCbs: ((chunk: string) => void)[] = [];
  private closeCbs: (() => void)[] = [];

  constructor(private ws: WebSocket) {
    ws.onmessage = (ev) => {
      for (const cb of this.dataCbs) cb(String(ev.data));
    };
    ws.onclose = () => {
      for (const cb of this.closeCbs) cb();
    };
  }

  send(data: string): void {
    this.ws.send(data);
  }

  onData(cb: (chunk: string) => void): void {
    this.dataCbs.push(cb);
  }

  onClose(cb: () => void): void {
    this.closeCbs.push(cb);
  }

  close(): void {
    this.ws.close();
  }
}

export function connectAndRun(
  canvas: HTMLCanvasElement,
  bridgeUrl: string,
  params = {
    protocol: "ch4" as const,
    trials: 4,
    condition: "live",
    scheme: "ThreePhase" as const,
  },
): void {
  const ctx = canvas.getContext("2d") as unknown as DrawContext;
  let model: SceneModel = emptyScene();
  let pose: PoseState = { pos: [0, 0, 0.45], grip: "Rest" };
  let viewport: Viewport | null = null;

  const client = new ProtocolClient(new WebSocketTransport(new WebSocket(bridgeUrl)));
  client.onMessage((msg) => {
    model = applyMessage(model, msg);
    if (viewport === null && model.frame) {
      viewport = makeViewport(canvas.width, canvas.height, model.frame.workspace);
    }
    if (msg.type === "SessionEnded" && msg.summary.log_path) {
      console.log(`session log: ${msg.summary.log_path}`);
    }
  });
  client.onClose(() => {
    model = applyDisconnect(model);
  });

  client.hello();
  client.startSession(params);

  canvas.addEventListener("pointermove", (ev) => {
    if (!viewport) return;
    pose = movePointer(pose, viewport, ev.offsetX, ev.offsetY);
    client.sendPose(pose.pos[0], pose.pos[1], pose.pos[2]);
  });
  canvas.addEventListener("wheel", (ev) => {
    if (!model.frame) return;
    pose = nudgeDepth(pose, ev.deltaY > 0 ? 1 : -1, model.frame.workspace);
    client.sendPose(pose.pos[0], pose.pos[1], pose.pos[2]);
  });
  window.addEventListener("keydown", (ev) => {
    if (ev.key === " ") {
      client.pressButton();
      return;
    }
    const classSet = legendClassSet(model);
    const grip = gripForKey(ev.key, classSet);
    if (grip !== null) {
      pose = { ...pose, grip };
      client.sendGrip(grip);
    }
  });

  const legend = keyLegend(legendClassSet(model), FULL_GRIP_KEYS)
    .map(({ key, grip }) => `${key}=${grip}`)
    .join("  ");
  console.log(`grip keys: ${legend}; space = start/stop button`);

  function frame(): void {
    if (viewport) renderScene(ctx, viewport, model);
    requestAnimationFrame(frame);
  }
  requestAnimationFrame(frame);
}

function legendClassSet(model: SceneModel): string[] {
  // the active task narrows the relevant grips; before a task every class is listed
  if (model.task) return [model.task.required_grip, "Open", "Rest"];
  return Object.values(FULL_GRIP_KEYS);
}
