/**
 * Wire protocol client: newline-delimited JSON over a byte transport.
 *
 * The client is transport-agnostic so the same code drives a browser
 * WebSocket bridge and the node TCP socket used in tests. Messages are
 * delivered to listeners in sequence-number order; the trial itself only
 * ever advances server-side.
 */

export const PROTOCOL_VERSION = 1;

export type Vec3 = [number, number, number];

export interface HolderInfo {
  id: string;
  position: Vec3;
  orientation: string;
}

export interface FrameInfo {
  button: Vec3;
  holders: HolderInfo[];
  workspace: { min: Vec3; max: Vec3 };
}

export interface TaskInfo {
  object: string;
  required_grip: string;
  start_holder: string;
  target_holder: string;
  distance: number;
  tolerance: number;
}

export interface SceneStateMsg {
  type: "SceneState";
  seq: number;
  frame: FrameInfo;
  task: TaskInfo | null;
  hand: Vec3;
  held_object: boolean;
  phase: string;
  elapsed: number;
  remaining: number;
}

export interface PromptMsg {
  type: "Prompt";
  seq: number;
  object: string;
  start_holder: string;
  target_holder: string;
}

export interface PhaseCard {
  name: string;
  MT: number;
  PE: number;
  ID: number;
  TP: number;
}

export interface TrialEndedMsg {
  type: "TrialEnded";
  seq: number;
  outcome: string;
  metrics: {
    success: boolean;
    total_time: number;
    phases: PhaseCard[];
  };
}

export interface SessionEndedMsg {
  type: "SessionEnded";
  seq: number;
  summary: {
    n_trials: number;
    completion_rate: number | null;
    log_path: string | null;
  };
}

export interface ErrorMsg {
  type: "Error";
  seq: number;
  code: string;
  message: string;
}

export type ServerMessage =
  | SceneStateMsg
  | PromptMsg
  | TrialEndedMsg
  | SessionEndedMsg
  | ErrorMsg;

export interface SessionParams {
  protocol: "ch3" | "ch4";
  trials: number;
  condition: string;
  scheme: "TwoPhase" | "ThreePhase";
  seed?: number;
}

/** Byte transport: the client writes strings, receives chunks, and hears
 * about the connection closing. */
export interface Transport {
  send(data: string): void;
  onData(cb: (chunk: string) => void): void;
  onClose(cb: () => void): void;
  close(): void;
}

export type MessageListener = (msg: ServerMessage) => void;

export class ProtocolClient {
  private buffer = "";
  private listeners: MessageListener[] = [];
  private closeListeners: (() => void)[] = [];
  // out-of-order arrivals are held back until the gap fills
  private pending = new Map<number, ServerMessage>();
  private nextSeq = 0;
  closed = false;

  constructor(private transport: Transport) {
    transport.onData((chunk) => this.feed(chunk));
    transport.onClose(() => {
      this.closed = true;
      for (const cb of this.closeListeners) cb();
    });
  }

  hello(): void {
    this.sendRaw({ type: "Hello", protocol_version: PROTOCOL_VERSION });
  }

  startSession(params: SessionParams): void {
    this.sendRaw({ type: "StartSession", ...params });
  }

  sendPose(x: number, y: number, z: number): void {
    this.sendRaw({ type: "PoseInput", x, y, z });
  }

  sendGrip(grip: string): void {
    this.sendRaw({ type: "GripInput", grip });
  }

  pressButton(): void {
    this.sendRaw({ type: "PressButton" });
  }

  abort(): void {
    this.sendRaw({ type: "Abort" });
  }

  onMessage(cb: MessageListener): void {
    this.listeners.push(cb);
  }

  onClose(cb: () => void): void {
    this.closeListeners.push(cb);
  }

  close(): void {
    this.transport.close();
  }

  private sendRaw(msg: Record<string, unknown>): void {
    this.transport.send(JSON.stringify(msg) + "\n");
  }

  /** Split the byte stream into lines and deliver messages in seq order. */
  feed(chunk: string): void {
    this.buffer += chunk;
    let idx: number;
    while ((idx = this.buffer.indexOf("\n")) >= 0) {
      const line = this.buffer.slice(0, idx).trim();
      this.buffer = this.buffer.slice(idx + 1);
      if (!line) continue;
      let msg: ServerMessage;
      try {
        msg = JSON.parse(line) as ServerMessage;
      } catch {
        continue; // a torn line mid-stream; the next line resyncs
      }
      this.enqueue(msg);
    }
  }

  private enqueue(msg: ServerMessage): void {
    if (typeof msg.seq !== "number") {
      this.deliver(msg);
      return;
    }
    this.pending.set(msg.seq, msg);
    while (this.pending.has(this.nextSeq)) {
      const next = this.pending.get(this.nextSeq)!;
      this.pending.delete(this.nextSeq);
      this.nextSeq += 1;
      this.deliver(next);
    }
  }

  private deliver(msg: ServerMessage): void {
    for (const cb of this.listeners) cb(msg);
  }
}
