// Canvas drawing of the image, markers with direction arrows and paths.

import type { SessionView } from "./state.js";

const VARIANT_COLORS: Record<string, string> = {
  prior: "#ff4040",
  classical: "#40a0ff",
};

export function variantColor(variant: string): string {
  return VARIANT_COLORS[variant] ?? "#ffd040";
}

export function draw(view: SessionView, canvas: HTMLCanvasElement,
                     image: CanvasImageSource | null): void {
  const ctx = canvas.getContext("2d");
  if (!ctx) return;
  ctx.save();
  ctx.fillStyle = "#181818";
  ctx.fillRect(0, 0, canvas.width, canvas.height);
  const t = view.transform;
  ctx.setTransform(t.scale, 0, 0, t.scale, t.offsetX, t.offsetY);
  ctx.imageSmoothingEnabled = false;
  if (image) ctx.drawImage(image, 0, 0);

  for (const p of view.paths) {
    if (p.points.length < 2) continue;
    ctx.strokeStyle = variantColor(p.variant);
    ctx.lineWidth = 1.6 / t.scale;
    ctx.beginPath();
    ctx.moveTo(p.points[0][0], p.points[0][1]);
    for (const [x, y] of p.points.slice(1)) ctx.lineTo(x, y);
    ctx.stroke();
  }

  view.markers.forEach((m, i) => {
    ctx.fillStyle = i === 0 ? "#ff5050" : "#5060ff";
    ctx.beginPath();
    ctx.arc(m.x, m.y, 3.5 / t.scale, 0, 2 * Math.PI);
    ctx.fill();
    if (m.theta !== null) {
      const len = 12 / t.scale;
      ctx.strokeStyle = ctx.fillStyle;
      ctx.lineWidth = 2 / t.scale;
      ctx.beginPath();
      ctx.moveTo(m.x, m.y);
      ctx.lineTo(m.x + len * Math.cos(m.theta), m.y + len * Math.sin(m.theta));
      ctx.stroke();
    }
  });
  ctx.restore();
}
