/**
 * Inline SVG trend chart: one point per completed batch, F-value and
 * false-positive rate on a shared 0..1 axis. No chart library; the
 * console has exactly one plot and it is a pair of polylines.
 */

import type { BatchMetrics } from "./types.js";

const NS = "http://www.w3.org/2000/svg";
const W = 640;
const H = 200;
const PAD = 24;

interface Series {
  key: "f_value" | "fp_rate";
  className: string;
}

const SERIES: Series[] = [
  { key: "f_value", className: "pt-f" },
  { key: "fp_rate", className: "pt-fp" },
];

function el(name: string, attrs: Record<string, string>): SVGElement {
  const node = document.createElementNS(NS, name);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function x(i: number, n: number): number {
  if (n <= 1) return W / 2;
  return PAD + (i * (W - 2 * PAD)) / (n - 1);
}

function y(value: number): number {
  const v = Math.max(0, Math.min(1, value));
  return H - PAD - v * (H - 2 * PAD);
}

export function renderTrend(svg: SVGElement, history: BatchMetrics[]): void {
  svg.replaceChildren();
  svg.setAttribute("viewBox", `0 0 ${W} ${H}`);
  svg.appendChild(el("line", {
    x1: String(PAD), y1: String(H - PAD), x2: String(W - PAD), y2: String(H - PAD),
    class: "axis",
  }));
  svg.appendChild(el("line", {
    x1: String(PAD), y1: String(PAD), x2: String(PAD), y2: String(H - PAD),
    class: "axis",
  }));
  if (history.length === 0) return;

  for (const series of SERIES) {
    const coords: string[] = [];
    for (let i = 0; i < history.length; i++) {
      const raw = history[i][series.key];
      if (typeof raw !== "number") continue;
      const px = x(i, history.length);
      const py = y(raw);
      coords.push(`${px},${py}`);
      const dot = el("circle", {
        cx: String(px),
        cy: String(py),
        r: "3",
        class: series.className,
      });
      const title = document.createElementNS(NS, "title");
      title.textContent = `batch ${history[i].batch}: ${series.key} ${raw.toFixed(3)}`;
      dot.appendChild(title);
      svg.appendChild(dot);
    }
    if (coords.length > 1) {
      svg.appendChild(el("polyline", {
        points: coords.join(" "),
        class: `line-${series.className}`,
        fill: "none",
      }));
    }
  }
}
