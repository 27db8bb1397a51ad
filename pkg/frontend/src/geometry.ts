// World <-> canvas transforms for the top-down scene view.

export interface Viewport {
  width: number;
  height: number;
  margin: number;
}

export interface WorkspaceRanges {
  x_range: number[];
  y_range: number[];
  z_range: number[];
}

// World x maps to canvas x (left->right); world y maps upward, so canvas y is
// flipped.
export function worldToCanvas(
  x: number,
  y: number,
  ws: WorkspaceRanges,
  vp: Viewport,
): { cx: number; cy: number } {
  const [x0, x1] = ws.x_range;
  const [y0, y1] = ws.y_range;
  const innerW = vp.width - 2 * vp.margin;
  const innerH = vp.height - 2 * vp.margin;
  const cx = vp.margin + ((x - x0) / (x1 - x0)) * innerW;
  const cy = vp.margin + (1 - (y - y0) / (y1 - y0)) * innerH;
  return { cx, cy };
}

export function spanToCanvas(
  dx: number,
  dy: number,
  ws: WorkspaceRanges,
  vp: Viewport,
): { w: number; h: number } {
  const [x0, x1] = ws.x_range;
  const [y0, y1] = ws.y_range;
  return {
    w: (dx / (x1 - x0)) * (vp.width - 2 * vp.margin),
    h: (dy / (y1 - y0)) * (vp.height - 2 * vp.margin),
  };
}

// Normalized overlay coordinates (0..1 in workspace units) to canvas.
export function normalizedToCanvas(
  nx: number,
  ny: number,
  vp: Viewport,
): { cx: number; cy: number } {
  const innerW = vp.width - 2 * vp.margin;
  const innerH = vp.height - 2 * vp.margin;
  return { cx: vp.margin + nx * innerW, cy: vp.margin + (1 - ny) * innerH };
}

export function clamp01(v: number): number {
  return Math.min(1, Math.max(0, v));
}
