/**
 * Minimal SVG line charts for the telemetry panel.
 *
 * Hand-rolled on purpose: the chart's job is to display served series
 * without touching their values, so the only arithmetic here is the
 * affine map from (capture index, value) to screen coordinates.
 */

import type { SeriesPoint } from "./telemetry";

const SVG_NS = "http://www.w3.org/2000/svg";

/** One named polyline on a chart. */
export interface ChartSeries {
  label: string;
  points: SeriesPoint[];
  /** CSS color for the polyline and legend swatch. */
  color: string;
}

/** Axis/layout options for {@link renderLineChart}. */
export interface ChartOptions {
  width: number;
  height: number;
  /** Upper x bound in captures; lets side-by-side charts share an axis. */
  maxCapture?: number;
  /** Log-scale the y axis (used for the covariance trace). */
  logY?: boolean;
  title?: string;
}

const MARGIN = { left: 46, right: 10, top: 22, bottom: 24 };

function el<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) {
    node.setAttribute(k, String(v));
  }
  return node;
}

/**
 * Render series into `host` as a single SVG, replacing previous contents.
 *
 * Each polyline point carries its source value in a `data-value` attribute
 * so the rendered DOM stays auditable against the served numbers.
 */
export function renderLineChart(host: Element, series: ChartSeries[], opts: ChartOptions): SVGSVGElement {
  const svg = el("svg", {
    width: opts.width,
    height: opts.height,
    viewBox: `0 0 ${opts.width} ${opts.height}`,
    role: "img",
  });

  const plotW = opts.width - MARGIN.left - MARGIN.right;
  const plotH = opts.height - MARGIN.top - MARGIN.bottom;

  const all = series.flatMap((s) => s.points);
  const maxX = Math.max(opts.maxCapture ?? 0, ...all.map((p) => p.capture), 1);
  const yRaw = all.map((p) => (opts.logY ? Math.log10(p.value) : p.value));
  let yLo = Math.min(...yRaw, Infinity);
  let yHi = Math.max(...yRaw, -Infinity);
  if (!Number.isFinite(yLo)) {
    yLo = 0;
    yHi = 1;
  }
  if (yHi - yLo < 1e-12) {
    yHi = yLo + 1;
  }

  const x = (capture: number) => MARGIN.left + ((capture - 1) / Math.max(maxX - 1, 1)) * plotW;
  const y = (value: number) => {
    const v = opts.logY ? Math.log10(value) : value;
    return MARGIN.top + (1 - (v - yLo) / (yHi - yLo)) * plotH;
  };

  if (opts.title) {
    const t = el("text", { x: MARGIN.left, y: 14, class: "chart-title" });
    t.textContent = opts.title;
    svg.appendChild(t);
  }

  svg.appendChild(
    el("rect", {
      x: MARGIN.left,
      y: MARGIN.top,
      width: plotW,
      height: plotH,
      class: "chart-bg",
      fill: "none",
      stroke: "currentColor",
      "stroke-opacity": 0.25,
    }),
  );

  // x-axis tick labels: first and last capture
  for (const capture of [1, maxX]) {
    const label = el("text", { x: x(capture), y: opts.height - 6, "text-anchor": "middle", class: "tick" });
    label.textContent = String(capture);
    svg.appendChild(label);
  }

  for (const s of series) {
    if (s.points.length === 0) {
      continue;
    }
    const d = s.points.map((p, i) => `${i === 0 ? "M" : "L"}${x(p.capture).toFixed(1)},${y(p.value).toFixed(1)}`).join(" ");
    svg.appendChild(
      el("path", { d, fill: "none", stroke: s.color, "stroke-width": 1.5, class: "series", "data-label": s.label }),
    );
    for (const p of s.points) {
      const dot = el("circle", { cx: x(p.capture).toFixed(1), cy: y(p.value).toFixed(1), r: 2.5, fill: s.color });
      dot.setAttribute("data-capture", String(p.capture));
      dot.setAttribute("data-value", String(p.value));
      svg.appendChild(dot);
    }
  }

  host.replaceChildren(svg);
  return svg;
}
