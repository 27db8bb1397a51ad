// Wire protocol: JSON text frames over one persistent WebSocket.

export const WIRE_KINDS = [
  "hello",
  "proposal",
  "feedback",
  "control",
  "stats",
  "scene",
  "error",
] as const;

export type WireKind = (typeof WIRE_KINDS)[number];

export interface WireMessage {
  kind: WireKind;
  session_id: string | null;
  step_id: number | null;
  payload: Record<string, unknown>;
}

export interface SceneObject {
  id: string;
  kind: string;
  position: number[];
  half_extent: number[];
  held: boolean;
  graspable: boolean;
  pushable: boolean;
  open_offset?: number;
}

export interface SceneDoc {
  task: string;
  workspace: {
    x_range: number[];
    y_range: number[];
    z_range: number[];
    table_z: number;
  };
  gripper: number[];
  holding: string | null;
  task_stage: number;
  step_count: number;
  state_hash: string;
  objects: SceneObject[];
}

export interface OverlayDoc {
  skill: string;
  marker: { x: number; y: number } | null;
  z_frac: number | null;
  arrow: { axis: "x" | "y"; length: number } | null;
  params: number[];
}

export interface ProposalPayload {
  step_id: number;
  render: SceneDoc;
  skill: string;
  params_world: number[];
  overlay: OverlayDoc;
}

export class ProtocolError extends Error {}

export function parseMessage(raw: string): WireMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(raw);
  } catch (err) {
    throw new ProtocolError(`malformed frame: ${err}`);
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ProtocolError("frame must be a JSON object");
  }
  const rec = doc as Record<string, unknown>;
  const kind = rec["kind"];
  if (typeof kind !== "string" || !WIRE_KINDS.includes(kind as WireKind)) {
    throw new ProtocolError(`unknown message kind ${JSON.stringify(kind)}`);
  }
  const stepId = rec["step_id"];
  if (stepId !== null && stepId !== undefined && !Number.isInteger(stepId)) {
    throw new ProtocolError("step_id must be an integer");
  }
  const payload = rec["payload"] ?? {};
  if (typeof payload !== "object" || payload === null || Array.isArray(payload)) {
    throw new ProtocolError("payload must be an object");
  }
  return {
    kind: kind as WireKind,
    session_id: (rec["session_id"] as string | null) ?? null,
    step_id: (stepId as number | null) ?? null,
    payload: payload as Record<string, unknown>,
  };
}

export function serializeMessage(msg: WireMessage): string {
  return JSON.stringify({
    kind: msg.kind,
    session_id: msg.session_id,
    step_id: msg.step_id,
    payload: msg.payload,
  });
}

export function helloMessage(mode: "train_human" | "observe"): WireMessage {
  return { kind: "hello", session_id: null, step_id: null, payload: { mode } };
}

export function feedbackMessage(
  sessionId: string | null,
  stepId: number,
  value: -1 | 0 | 1,
): WireMessage {
  return { kind: "feedback", session_id: sessionId, step_id: stepId, payload: { value } };
}

export function controlMessage(sessionId: string | null, op: string): WireMessage {
  return { kind: "control", session_id: sessionId, step_id: null, payload: { op } };
}
