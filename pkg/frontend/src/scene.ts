/**
 * Client-side scene model: a pure fold over the server message stream.
 *
 * The model renders only server-confirmed state — it never advances the
 * trial locally, so replaying a recorded broadcast yields an identical
 * model at every step (the golden-frame property).
 */

import type {
  FrameInfo,
  PhaseCard,
  ServerMessage,
  TaskInfo,
  Vec3,
} from "./protocol.js";

export interface MetricsCard {
  outcome: string;
  success: boolean;
  totalTime: string; // display-rounded, seconds
  phases: {
    name: string;
    MT: string;
    PE: string;
    ID: string;
    TP: string;
  }[];
}

export interface SessionSummary {
  nTrials: number;
  completionRate: number | null;
  logPath: string | null;
}

export interface SceneModel {
  frame: FrameInfo | null;
  task: TaskInfo | null;
  hand: Vec3;
  heldObject: boolean;
  phase: string;
  elapsed: number;
  remaining: number;
  prompt: { object: string; startHolder: string; targetHolder: string } | null;
  card: MetricsCard | null;
  summary: SessionSummary | null;
  banner: string | null;
  lastError: string | null;
}

export function emptyScene(): SceneModel {
  return {
    frame: null,
    task: null,
    hand: [0, 0, 0],
    heldObject: false,
    phase: "Idle",
    elapsed: 0,
    remaining: 30,
    prompt: null,
    card: null,
    summary: null,
    banner: null,
    lastError: null,
  };
}

/** Display rounding used on the end-of-trial card. */
export function fmt(value: number, digits = 2): string {
  return value.toFixed(digits);
}

export function buildCard(outcome: string, metrics: {
  success: boolean;
  total_time: number;
  phases: PhaseCard[];
}): MetricsCard {
  return {
    outcome,
    success: metrics.success,
    totalTime: fmt(metrics.total_time),
    phases: metrics.phases.map((p) => ({
      name: p.name,
      MT: fmt(p.MT),
      PE: fmt(p.PE),
      ID: fmt(p.ID),
      TP: fmt(p.TP),
    })),
  };
}

/** Apply one server message. Returns a new model; the input is not mutated. */
export function applyMessage(model: SceneModel, msg: ServerMessage): SceneModel {
  switch (msg.type) {
    case "SceneState":
      return {
        ...model,
        frame: msg.frame,
        task: msg.task,
        hand: msg.hand,
        heldObject: msg.held_object,
        phase: msg.phase,
        elapsed: msg.elapsed,
        remaining: msg.remaining,
      };
    case "Prompt":
      return {
        ...model,
        prompt: {
          object: msg.object,
          startHolder: msg.start_holder,
          targetHolder: msg.target_holder,
        },
        card: null,
      };
    case "TrialEnded":
      return { ...model, card: buildCard(msg.outcome, msg.metrics), prompt: null };
    case "SessionEnded":
      return {
        ...model,
        summary: {
          nTrials: msg.summary.n_trials,
          completionRate: msg.summary.completion_rate,
          logPath: msg.summary.log_path,
        },
      };
    case "Error":
      return { ...model, lastError: `${msg.code}: ${msg.message}` };
  }
}

/** Connection dropped: show a banner and freeze — no phantom continuation. */
export function applyDisconnect(model: SceneModel): SceneModel {
  return { ...model, banner: "connection lost", phase: "Disconnected" };
}

export function replayBroadcast(messages: ServerMessage[]): SceneModel {
  let model = emptyScene();
  for (const msg of messages) model = applyMessage(model, msg);
  return model;
}
