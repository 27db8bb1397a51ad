// Console state machine, kept free of the DOM so it is directly testable.
//
// Invariants: feedback controls are live only while a proposal is
// outstanding; a resolved or stale step never accepts input; exactly one
// feedback message leaves the console per proposal.

import {
  ProposalPayload,
  SceneDoc,
  WireMessage,
  controlMessage,
  feedbackMessage,
} from "./protocol.js";

export type Verdict = -1 | 0 | 1;

export const KEY_VERDICTS: Record<string, Verdict> = {
  g: 1, // good
  n: 0, // neutral
  b: -1, // bad
};

export interface StatsDoc {
  decision_steps?: number;
  executed_steps?: number;
  vetoed_steps?: number;
  successes?: number;
  feedback_counts?: Record<string, number>;
  safety_violations?: number;
  violation_ratio?: number;
  buffer?: { size: number; positive: number };
}

export interface ConsoleState {
  connection: "connecting" | "open" | "closed";
  sessionId: string | null;
  proposal: ProposalPayload | null;
  lastResolvedStep: number;
  scene: SceneDoc | null;
  stats: StatsDoc | null;
  lastVerdict: { step: number; value: Verdict } | null;
  toast: string | null;
}

export function initialState(): ConsoleState {
  return {
    connection: "connecting",
    sessionId: null,
    proposal: null,
    lastResolvedStep: -1,
    scene: null,
    stats: null,
    lastVerdict: null,
    toast: null,
  };
}

export type ConsoleEvent =
  | { kind: "connected" }
  | { kind: "disconnected" }
  | { kind: "message"; message: WireMessage }
  | { kind: "key"; key: string };

export interface Step {
  state: ConsoleState;
  outgoing: WireMessage[];
}

export function reduce(state: ConsoleState, event: ConsoleEvent): Step {
  const next: ConsoleState = { ...state, toast: null };
  const outgoing: WireMessage[] = [];

  switch (event.kind) {
    case "connected":
      next.connection = "open";
      break;

    case "disconnected":
      next.connection = "closed";
      break;

    case "key": {
      const verdict = KEY_VERDICTS[event.key.toLowerCase()];
      if (verdict === undefined) break;
      if (next.connection !== "open" || next.proposal === null) {
        next.toast = "no proposal outstanding";
        break;
      }
      const step = next.proposal.step_id;
      outgoing.push(feedbackMessage(next.sessionId, step, verdict));
      next.lastResolvedStep = step;
      next.lastVerdict = { step, value: verdict };
      next.proposal = null; // controls disabled until the next proposal
      break;
    }

    case "message": {
      const msg = event.message;
      switch (msg.kind) {
        case "hello":
          next.sessionId = msg.session_id;
          break;
        case "proposal": {
          const proposal = msg.payload as unknown as ProposalPayload;
          if (proposal.step_id <= next.lastResolvedStep) {
            break; // stale replay of something we already answered
          }
          next.proposal = proposal;
          next.scene = proposal.render;
          break;
        }
        case "scene":
          next.scene = msg.payload as unknown as SceneDoc;
          break;
        case "stats":
          next.stats = msg.payload as unknown as StatsDoc;
          break;
        case "error":
          next.toast = `${msg.payload["code"]}: ${msg.payload["detail"] ?? ""}`;
          break;
        case "control":
          if (msg.payload["op"] === "heartbeat") {
            outgoing.push(controlMessage(next.sessionId, "heartbeat_ack"));
          }
          break;
        default:
          break;
      }
      break;
    }
  }
  return { state: next, outgoing };
}

// What the gate will do with the verdict we just sent.
export function gateOutcome(verdict: Verdict): "executes" | "vetoed" {
  return verdict === 1 ? "executes" : "vetoed";
}
