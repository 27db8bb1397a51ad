// Entry point: one WebSocket, one keyboard, one canvas, one state machine.

import {
  WireMessage,
  helloMessage,
  parseMessage,
  serializeMessage,
} from "./protocol.js";
import {
  ConsoleEvent,
  ConsoleState,
  gateOutcome,
  initialState,
  reduce,
} from "./state.js";
import { renderScene } from "./render.js";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const skillLabel = document.getElementById("skill-label")!;
const paramsLabel = document.getElementById("params-label")!;
const gateLabel = document.getElementById("gate-label")!;
const statsPanel = document.getElementById("stats-panel")!;
const connLabel = document.getElementById("conn-label")!;
const toastBox = document.getElementById("toast")!;

let state: ConsoleState = initialState();
let socket: WebSocket | null = null;
let reconnectDelayMs = 500;

function send(msg: WireMessage): void {
  if (socket !== null && socket.readyState === WebSocket.OPEN) {
    socket.send(serializeMessage(msg));
  }
}

function dispatch(event: ConsoleEvent): void {
  const step = reduce(state, event);
  state = step.state;
  for (const msg of step.outgoing) send(msg);
  render();
}

function fmt(v: number): string {
  return v.toFixed(3);
}

function render(): void {
  const proposal = state.proposal;
  renderScene(canvas, state.scene, proposal?.overlay ?? null);
  connLabel.textContent = state.connection;
  connLabel.className = state.connection;
  if (proposal !== null) {
    skillLabel.textContent = `step ${proposal.step_id}: ${proposal.skill.toUpperCase()}`;
    paramsLabel.textContent = proposal.params_world.length
      ? `(${proposal.params_world.map(fmt).join(", ")})`
      : "(no parameters)";
    gateLabel.textContent = "awaiting your verdict  [g]ood / [n]eutral / [b]ad";
    gateLabel.className = "pending";
  } else if (state.lastVerdict !== null) {
    const v = state.lastVerdict;
    skillLabel.textContent = `step ${v.step} answered`;
    paramsLabel.textContent = "";
    gateLabel.textContent =
      v.value === 1 ? "approved -> executes" : v.value === 0 ? "neutral -> vetoed" : "bad -> vetoed";
    gateLabel.className = gateOutcome(v.value);
  } else {
    skillLabel.textContent = "waiting for a proposal...";
    paramsLabel.textContent = "";
    gateLabel.textContent = "";
  }
  const s = state.stats;
  if (s !== null) {
    const fc = s.feedback_counts ?? {};
    statsPanel.innerHTML = [
      `decision steps: ${s.decision_steps ?? 0}`,
      `executed / vetoed: ${s.executed_steps ?? 0} / ${s.vetoed_steps ?? 0}`,
      `successes: ${s.successes ?? 0}`,
      `feedback  +1: ${fc["1"] ?? 0}   0: ${fc["0"] ?? 0}   -1: ${fc["-1"] ?? 0}`,
      `buffer: ${s.buffer?.size ?? 0} (${s.buffer?.positive ?? 0} positive)`,
      `safety violations: ${s.safety_violations ?? 0}`,
      `violation ratio: ${((s.violation_ratio ?? 0) * 100).toFixed(2)}%`,
    ]
      .map((line) => `<div>${line}</div>`)
      .join("");
  }
  toastBox.textContent = state.toast ?? "";
  toastBox.style.opacity = state.toast ? "1" : "0";
}

function connect(): void {
  const proto = location.protocol === "https:" ? "wss" : "ws";
  socket = new WebSocket(`${proto}://${location.host}/ws`);
  socket.addEventListener("open", () => {
    reconnectDelayMs = 500;
    dispatch({ kind: "connected" });
    send(helloMessage("train_human"));
  });
  socket.addEventListener("message", (ev) => {
    try {
      dispatch({ kind: "message", message: parseMessage(String(ev.data)) });
    } catch (err) {
      console.warn("dropped frame:", err);
    }
  });
  socket.addEventListener("close", () => {
    dispatch({ kind: "disconnected" });
    setTimeout(connect, reconnectDelayMs);
    reconnectDelayMs = Math.min(reconnectDelayMs * 2, 5000);
  });
  socket.addEventListener("error", () => socket?.close());
}

window.addEventListener("keydown", (ev) => {
  if (ev.key.toLowerCase() in { g: 1, n: 1, b: 1 }) {
    ev.preventDefault();
    dispatch({ kind: "key", key: ev.key });
  }
});

connect();
render();
