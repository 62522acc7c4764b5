/** Inline SVG learning-curve chart for the progress dashboard. */

import type { CurvePoint } from "./api.js";

const WIDTH = 560;
const HEIGHT = 260;
const PAD = { left: 48, right: 16, top: 16, bottom: 32 };

export function curveSvg(curve: CurvePoint[]): string {
  const maxX = Math.max(1, ...curve.map((p) => p.labeled_count));
  const sx = (x: number) => PAD.left + (x / maxX) * (WIDTH - PAD.left - PAD.right);
  const sy = (y: number) => HEIGHT - PAD.bottom - y * (HEIGHT - PAD.top - PAD.bottom);
  const points = curve.map((p) => `${sx(p.labeled_count).toFixed(1)},${sy(p.dev_macro_f1).toFixed(1)}`);
  const ticks = [0, 0.25, 0.5, 0.75, 1.0]
    .map(
      (t) =>
        `<text x="${PAD.left - 6}" y="${sy(t).toFixed(1)}" font-size="10" text-anchor="end" dominant-baseline="middle">${t.toFixed(2)}</text>` +
        `<line x1="${PAD.left}" y1="${sy(t).toFixed(1)}" x2="${WIDTH - PAD.right}" y2="${sy(t).toFixed(1)}" stroke="#eee"/>`,
    )
    .join("");
  const markers = curve
    .map(
      (p) =>
        `<circle cx="${sx(p.labeled_count).toFixed(1)}" cy="${sy(p.dev_macro_f1).toFixed(1)}" r="3" fill="#1f77b4"/>`,
    )
    .join("");
  const polyline = points.length
    ? `<polyline fill="none" stroke="#1f77b4" stroke-width="2" points="${points.join(" ")}"/>`
    : "";
  return (
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${WIDTH} ${HEIGHT}" width="${WIDTH}" height="${HEIGHT}">` +
    `<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>` +
    ticks +
    `<line x1="${PAD.left}" y1="${HEIGHT - PAD.bottom}" x2="${WIDTH - PAD.right}" y2="${HEIGHT - PAD.bottom}" stroke="#333"/>` +
    `<line x1="${PAD.left}" y1="${PAD.top}" x2="${PAD.left}" y2="${HEIGHT - PAD.bottom}" stroke="#333"/>` +
    `<text x="${(PAD.left + WIDTH - PAD.right) / 2}" y="${HEIGHT - 8}" font-size="11" text-anchor="middle">labeled sentences</text>` +
    polyline +
    markers +
    `</svg>`
  );
}
