// Canvas rendering of the top-down scene plus the proposal overlay.

import { OverlayDoc, SceneDoc, SceneObject } from "./protocol.js";
import { Viewport, normalizedToCanvas, spanToCanvas, worldToCanvas } from "./geometry.js";

const ZONE_KINDS = new Set(["dustpan_zone", "bun_zone", "stove_zone", "target_zone"]);

const KIND_COLORS: Record<string, string> = {
  block: "#8d6e63",
  broom: "#7cb342",
  toy: "#fbc02d",
  drawer: "#90a4ae",
  skillet: "#546e7a",
  sausage: "#d84315",
  dustpan_zone: "#b39ddb",
  bun_zone: "#ffe0b2",
  stove_zone: "#ef9a9a",
  target_zone: "#81d4fa",
};

function drawObject(
  ctx: CanvasRenderingContext2D,
  obj: SceneObject,
  scene: SceneDoc,
  vp: Viewport,
): void {
  const { cx, cy } = worldToCanvas(obj.position[0], obj.position[1], scene.workspace, vp);
  const { w, h } = spanToCanvas(2 * obj.half_extent[0], 2 * obj.half_extent[1], scene.workspace, vp);
  const color = KIND_COLORS[obj.kind] ?? "#bdbdbd";
  ctx.save();
  if (ZONE_KINDS.has(obj.kind)) {
    ctx.fillStyle = color + "55";
    ctx.strokeStyle = color;
    ctx.setLineDash([4, 3]);
  } else {
    ctx.fillStyle = color;
    ctx.strokeStyle = obj.held ? "#d500f9" : "#424242";
    ctx.lineWidth = obj.held ? 3 : 1;
  }
  ctx.fillRect(cx - w / 2, cy - h / 2, w, h);
  ctx.strokeRect(cx - w / 2, cy - h / 2, w, h);
  ctx.restore();
  ctx.fillStyle = "#212121";
  ctx.font = "11px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText(obj.id, cx, cy - h / 2 - 4);
}

function drawGripper(ctx: CanvasRenderingContext2D, scene: SceneDoc, vp: Viewport): void {
  const { cx, cy } = worldToCanvas(scene.gripper[0], scene.gripper[1], scene.workspace, vp);
  ctx.save();
  ctx.strokeStyle = scene.holding ? "#d500f9" : "#1565c0";
  ctx.lineWidth = 2;
  ctx.beginPath();
  ctx.arc(cx, cy, 9, 0, 2 * Math.PI);
  ctx.moveTo(cx - 13, cy);
  ctx.lineTo(cx + 13, cy);
  ctx.moveTo(cx, cy - 13);
  ctx.lineTo(cx, cy + 13);
  ctx.stroke();
  ctx.restore();
}

function drawOverlay(
  ctx: CanvasRenderingContext2D,
  overlay: OverlayDoc,
  vp: Viewport,
): void {
  if (overlay.marker === null) return;
  const { cx, cy } = normalizedToCanvas(overlay.marker.x, overlay.marker.y, vp);
  ctx.save();
  ctx.fillStyle = "#e53935";
  ctx.beginPath();
  ctx.arc(cx, cy, 6, 0, 2 * Math.PI);
  ctx.fill();
  if (overlay.arrow !== null) {
    const len = overlay.arrow.length * (vp.width - 2 * vp.margin);
    const dx = overlay.arrow.axis === "x" ? len : 0;
    const dy = overlay.arrow.axis === "y" ? -len : 0;
    ctx.strokeStyle = "#e53935";
    ctx.lineWidth = 3;
    ctx.beginPath();
    ctx.moveTo(cx, cy);
    ctx.lineTo(cx + dx, cy + dy);
    ctx.stroke();
    const tip = 6 * Math.sign(len || 1);
    ctx.beginPath();
    if (overlay.arrow.axis === "x") {
      ctx.moveTo(cx + dx, cy);
      ctx.lineTo(cx + dx - tip, cy - 4);
      ctx.lineTo(cx + dx - tip, cy + 4);
    } else {
      ctx.moveTo(cx, cy + dy);
      ctx.lineTo(cx - 4, cy + dy + tip);
      ctx.lineTo(cx + 4, cy + dy + tip);
    }
    ctx.fill();
  }
  ctx.restore();
}

function drawZBar(ctx: CanvasRenderingContext2D, zFrac: number | null, vp: Viewport): void {
  const barX = vp.width - vp.margin / 2 - 6;
  const top = vp.margin;
  const bottom = vp.height - vp.margin;
  ctx.save();
  ctx.strokeStyle = "#9e9e9e";
  ctx.strokeRect(barX, top, 12, bottom - top);
  ctx.fillStyle = "#757575";
  ctx.font = "10px sans-serif";
  ctx.textAlign = "center";
  ctx.fillText("z", barX + 6, top - 4);
  if (zFrac !== null) {
    const y = bottom - zFrac * (bottom - top);
    ctx.fillStyle = "#e53935";
    ctx.fillRect(barX, y - 2, 12, 4);
  }
  ctx.restore();
}

export function renderScene(
  canvas: HTMLCanvasElement,
  scene: SceneDoc | null,
  overlay: OverlayDoc | null,
): void {
  const ctx = canvas.getContext("2d");
  if (ctx === null) return;
  const vp: Viewport = { width: canvas.width, height: canvas.height, margin: 40 };
  ctx.clearRect(0, 0, vp.width, vp.height);
  // table
  ctx.fillStyle = "#f5f0e6";
  ctx.strokeStyle = "#8d8d8d";
  ctx.fillRect(vp.margin, vp.margin, vp.width - 2 * vp.margin, vp.height - 2 * vp.margin);
  ctx.strokeRect(vp.margin, vp.margin, vp.width - 2 * vp.margin, vp.height - 2 * vp.margin);
  if (scene === null) {
    ctx.fillStyle = "#757575";
    ctx.font = "14px sans-serif";
    ctx.textAlign = "center";
    ctx.fillText("waiting for scene...", vp.width / 2, vp.height / 2);
    return;
  }
  for (const obj of scene.objects) {
    if (ZONE_KINDS.has(obj.kind)) drawObject(ctx, obj, scene, vp);
  }
  for (const obj of scene.objects) {
    if (!ZONE_KINDS.has(obj.kind)) drawObject(ctx, obj, scene, vp);
  }
  drawGripper(ctx, scene, vp);
  drawZBar(ctx, overlay?.z_frac ?? null, vp);
  if (overlay !== null) drawOverlay(ctx, overlay, vp);
}
