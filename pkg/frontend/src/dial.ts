/** Circular yaw dial drawn on a canvas, with reference-angle tick marks. */

import { normalizeYaw } from "./state.js";

export class Dial {
  private dragging = false;

  constructor(
    private readonly canvas: HTMLCanvasElement,
    private referenceYaws: number[],
    private readonly onChange: (yaw: number) => void,
  ) {
    canvas.addEventListener("pointerdown", (e) => {
      this.dragging = true;
      canvas.setPointerCapture(e.pointerId);
      this.emit(e);
    });
    canvas.addEventListener("pointermove", (e) => {
      if (this.dragging) this.emit(e);
    });
    canvas.addEventListener("pointerup", () => {
      this.dragging = false;
    });
  }

  setReferences(yaws: number[]): void {
    this.referenceYaws = yaws;
  }

  private emit(e: PointerEvent): void {
    const rect = this.canvas.getBoundingClientRect();
    const dx = e.clientX - rect.left - rect.width / 2;
    const dy = e.clientY - rect.top - rect.height / 2;
    // screen-up is yaw 0; clockwise increases yaw
    const yaw = normalizeYaw((Math.atan2(dx, -dy) * 180) / Math.PI);
    this.onChange(yaw);
  }

  draw(dialYaw: number, snappedYaw: number | null): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const { width: w, height: h } = this.canvas;
    const cx = w / 2;
    const cy = h / 2;
    const r = Math.min(w, h) / 2 - 12;
    ctx.clearRect(0, 0, w, h);

    ctx.strokeStyle = "#888";
    ctx.lineWidth = 2;
    ctx.beginPath();
    ctx.arc(cx, cy, r, 0, 2 * Math.PI);
    ctx.stroke();

    const point = (yaw: number, radius: number): [number, number] => {
      const a = ((yaw - 90) * Math.PI) / 180;
      return [cx + radius * Math.cos(a), cy + radius * Math.sin(a)];
    };

    // reference ticks mark the interpolation bounds
    ctx.strokeStyle = "#c33";
    for (const ref of this.referenceYaws) {
      const [x1, y1] = point(ref, r - 6);
      const [x2, y2] = point(ref, r + 6);
      ctx.beginPath();
      ctx.moveTo(x1, y1);
      ctx.lineTo(x2, y2);
      ctx.stroke();
    }

    if (snappedYaw !== null) {
      ctx.strokeStyle = "#bbb";
      const [sx, sy] = point(snappedYaw, r);
      ctx.beginPath();
      ctx.moveTo(cx, cy);
      ctx.lineTo(sx, sy);
      ctx.stroke();
    }

    ctx.strokeStyle = "#06c";
    ctx.lineWidth = 3;
    const [px, py] = point(dialYaw, r);
    ctx.beginPath();
    ctx.moveTo(cx, cy);
    ctx.lineTo(px, py);
    ctx.stroke();

    ctx.fillStyle = "#06c";
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, 2 * Math.PI);
    ctx.fill();
  }
}
