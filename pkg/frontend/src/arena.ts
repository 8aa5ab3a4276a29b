import { contactPoints, skeletonSegments } from "./fk.js";
import { ViewTransform } from "./transform.js";
import { Frame, Meta } from "./types.js";

const BONE_WIDTH: Record<string, number> = {
  torso: 7,
  thigh_l: 5,
  thigh_r: 5,
  shin_l: 4,
  shin_r: 4,
  arm_l: 3,
  arm_r: 3,
};

/** Side-view arena renderer: ground, waypoint flag, skeleton, foot plates. */
export class ArenaView {
  constructor(
    private readonly canvas: HTMLCanvasElement,
    private readonly meta: Meta,
  ) {}

  transform(): ViewTransform {
    return new ViewTransform(this.canvas.width, this.canvas.height, this.meta.arena_half + 0.6);
  }

  clampToArena(x: number): number {
    return Math.min(Math.max(x, -this.meta.arena_half), this.meta.arena_half);
  }

  draw(frame: Frame | null, waypoint: [number, number] | null): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) {
      return;
    }
    const view = this.transform();
    ctx.clearRect(0, 0, this.canvas.width, this.canvas.height);

    // arena bounds and ground
    const [gx0, gy] = view.toScreen(-this.meta.arena_half, 0);
    const [gx1] = view.toScreen(this.meta.arena_half, 0);
    ctx.strokeStyle = "#3c4452";
    ctx.lineWidth = 1;
    for (let m = -this.meta.arena_half; m <= this.meta.arena_half; m += 1) {
      const [tx, ty] = view.toScreen(m, 0);
      ctx.beginPath();
      ctx.moveTo(tx, ty);
      ctx.lineTo(tx, ty + 6);
      ctx.stroke();
    }
    ctx.strokeStyle = "#5b6472";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.moveTo(gx0, gy);
    ctx.lineTo(gx1, gy);
    ctx.stroke();

    if (waypoint) {
      const [fx, fy] = view.toScreen(waypoint[0], 0);
      ctx.strokeStyle = "#e4b363";
      ctx.lineWidth = 2;
      ctx.beginPath();
      ctx.moveTo(fx, fy);
      ctx.lineTo(fx, fy - 34);
      ctx.stroke();
      ctx.fillStyle = "#e4b363";
      ctx.beginPath();
      ctx.moveTo(fx, fy - 34);
      ctx.lineTo(fx + 14, fy - 28);
      ctx.lineTo(fx, fy - 22);
      ctx.closePath();
      ctx.fill();
    }

    if (!frame) {
      return;
    }
    ctx.lineCap = "round";
    for (const seg of skeletonSegments(this.meta, frame)) {
      const [x0, y0] = view.toScreen(seg.x0, seg.y0);
      const [x1, y1] = view.toScreen(seg.x1, seg.y1);
      ctx.strokeStyle = seg.name.startsWith("arm") ? "#9ecbff" : "#d7e3f4";
      ctx.lineWidth = BONE_WIDTH[seg.name] ?? 4;
      ctx.beginPath();
      ctx.moveTo(x0, y0);
      ctx.lineTo(x1, y1);
      ctx.stroke();
      if (seg.name === "torso") {
        // head
        const hx = x1 + (x1 - x0) * 0.18;
        const hy = y1 + (y1 - y0) * 0.18;
        ctx.fillStyle = "#d7e3f4";
        ctx.beginPath();
        ctx.arc(hx, hy, 0.09 * view.scale, 0, 2 * Math.PI);
        ctx.fill();
      }
    }
    // foot plates (first four contact points are heel/toe pairs)
    const pts = contactPoints(this.meta, frame).slice(0, 4);
    ctx.strokeStyle = "#d7e3f4";
    ctx.lineWidth = 3;
    for (let i = 0; i + 1 < pts.length; i += 2) {
      const [hx, hy] = view.toScreen(pts[i][0], pts[i][1]);
      const [tx, ty] = view.toScreen(pts[i + 1][0], pts[i + 1][1]);
      ctx.beginPath();
      ctx.moveTo(hx, hy);
      ctx.lineTo(tx, ty);
      ctx.stroke();
    }
  }
}
