/**
 * Hand-rolled SVG line chart: up to five labeled curves with optional shaded
 * credible bands, hover tooltip with exact values, drag-to-zoom on the axis
 * and an explanatory empty state.
 *
 * The chart never computes statistics -- every plotted number is taken
 * verbatim from the API payload, and each rendered point carries the exact
 * value in a data attribute so the provenance is auditable from the DOM.
 */

import type { CurvePayload, CurveSeries } from "./api";
import { MAX_SERIES, SERIES_COLORS } from "./palette";

const SVG_NS = "http://www.w3.org/2000/svg";
const VIEW_W = 800;
const VIEW_H = 420;
const MARGIN = { left: 58, right: 16, top: 16, bottom: 42 };

function el<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
): SVGElementTagNameMap[K] {
  const node = document.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

export function formatValue(v: number): string {
  if (!Number.isFinite(v)) return String(v);
  if (Math.abs(v) >= 1000) return Math.round(v).toLocaleString("en-US");
  if (Math.abs(v) >= 1) return v.toPrecision(5);
  return v.toPrecision(4);
}

interface Segment {
  indices: number[];
}

/** Split a series into runs of consecutive non-null points. */
function segments(values: Array<number | null>): Segment[] {
  const out: Segment[] = [];
  let current: number[] = [];
  values.forEach((v, i) => {
    if (v === null) {
      if (current.length) out.push({ indices: current });
      current = [];
    } else {
      current.push(i);
    }
  });
  if (current.length) out.push({ indices: current });
  return out;
}

export class CurveChart {
  private payload: CurvePayload | null = null;
  private window: [number, number] | null = null; // visible axis index range
  private tooltip: HTMLDivElement;
  private dragStart: number | null = null;

  constructor(private container: HTMLElement) {
    this.container.classList.add("curve-chart");
    this.tooltip = document.createElement("div");
    this.tooltip.className = "chart-tooltip";
    this.tooltip.style.display = "none";
  }

  render(payload: CurvePayload): void {
    if (payload.series.length > MAX_SERIES) {
      throw new Error(`cannot draw ${payload.series.length} series (cap ${MAX_SERIES})`);
    }
    this.payload = payload;
    this.window = null;
    this.draw();
  }

  renderEmpty(message: string): void {
    this.payload = null;
    this.container.replaceChildren();
    const box = document.createElement("div");
    box.className = "empty-state";
    const title = document.createElement("p");
    title.className = "empty-title";
    title.textContent = "No population matches these filters";
    const detail = document.createElement("p");
    detail.className = "empty-detail";
    detail.textContent = message;
    box.append(title, detail);
    this.container.append(box);
  }

  renderError(message: string, retry: () => void): void {
    this.payload = null;
    this.container.replaceChildren();
    const box = document.createElement("div");
    box.className = "error-state";
    const text = document.createElement("p");
    text.textContent = `Could not load the curve: ${message}`;
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = "Retry";
    button.addEventListener("click", retry);
    box.append(text, button);
    this.container.append(box);
  }

  zoomTo(i0: number, i1: number): void {
    if (!this.payload) return;
    const n = this.payload.axis.length;
    const lo = Math.max(0, Math.min(i0, i1));
    const hi = Math.min(n - 1, Math.max(i0, i1));
    if (hi - lo < 1) return; // need at least two points
    this.window = [lo, hi];
    this.draw();
  }

  resetZoom(): void {
    this.window = null;
    this.draw();
  }

  get visibleRange(): [number, number] {
    const n = this.payload ? this.payload.axis.length : 0;
    return this.window ?? [0, Math.max(0, n - 1)];
  }

  private xPos(index: number): number {
    const [lo, hi] = this.visibleRange;
    const span = Math.max(hi - lo, 1);
    const w = VIEW_W - MARGIN.left - MARGIN.right;
    return MARGIN.left + ((index - lo) / span) * w;
  }

  private yPos(value: number, yMax: number): number {
    const h = VIEW_H - MARGIN.top - MARGIN.bottom;
    return MARGIN.top + h - (value / yMax) * h;
  }

  private yDomain(): number {
    const p = this.payload!;
    const [lo, hi] = this.visibleRange;
    let max = 0;
    for (const s of p.series) {
      for (let i = lo; i <= hi; i++) {
        const top = s.hi?.[i] ?? s.mean[i];
        if (top !== null && top !== undefined && top > max) max = top;
      }
    }
    return max > 0 ? max * 1.08 : 1;
  }

  private draw(): void {
    const p = this.payload;
    if (!p) return;
    const [lo, hi] = this.visibleRange;
    const yMax = this.yDomain();

    this.container.replaceChildren();
    const svg = el("svg", {
      viewBox: `0 0 ${VIEW_W} ${VIEW_H}`,
      preserveAspectRatio: "xMidYMid meet",
      role: "img",
    });
    svg.classList.add("chart-svg");

    // y grid and labels
    for (let tick = 0; tick <= 4; tick++) {
      const value = (yMax * tick) / 4;
      const y = this.yPos(value, yMax);
      svg.append(el("line", {
        x1: String(MARGIN.left), x2: String(VIEW_W - MARGIN.right),
        y1: String(y), y2: String(y), class: "grid-line",
      }));
      const label = el("text", {
        x: String(MARGIN.left - 8), y: String(y + 4),
        "text-anchor": "end", class: "axis-label",
      });
      label.textContent = formatValue(value);
      svg.append(label);
    }

    // x labels
    const visible = hi - lo;
    const step = Math.max(1, Math.ceil(visible / 10));
    for (let i = lo; i <= hi; i += step) {
      const x = this.xPos(i);
      const label = el("text", {
        x: String(x), y: String(VIEW_H - MARGIN.bottom + 20),
        "text-anchor": "middle", class: "axis-label",
      });
      label.textContent = String(p.axis[i]);
      svg.append(label);
    }
    const axisName = el("text", {
      x: String(VIEW_W / 2), y: String(VIEW_H - 6),
      "text-anchor": "middle", class: "axis-name",
    });
    axisName.textContent = p.view === "year" ? "year" : "age";
    svg.append(axisName);

    // bands first, curves on top
    p.series.forEach((s, si) => {
      if (p.bands && s.lo && s.hi) {
        for (const seg of segments(s.mean)) {
          const pts = seg.indices.filter((i) => i >= lo && i <= hi);
          if (pts.length < 2) continue;
          const upper = pts.map((i) => `${this.xPos(i)},${this.yPos(s.hi![i]!, yMax)}`);
          const lower = [...pts].reverse()
            .map((i) => `${this.xPos(i)},${this.yPos(s.lo![i]!, yMax)}`);
          svg.append(el("polygon", {
            points: [...upper, ...lower].join(" "),
            fill: SERIES_COLORS[si],
            class: "band",
            "data-series": s.label,
          }));
        }
      }
    });

    p.series.forEach((s, si) => {
      for (const seg of segments(s.mean)) {
        const pts = seg.indices.filter((i) => i >= lo && i <= hi);
        if (!pts.length) continue;
        if (pts.length > 1) {
          svg.append(el("polyline", {
            points: pts.map((i) => `${this.xPos(i)},${this.yPos(s.mean[i]!, yMax)}`).join(" "),
            fill: "none",
            stroke: SERIES_COLORS[si],
            class: "series-line",
            "data-series": s.label,
          }));
        }
        for (const i of pts) {
          const dot = el("circle", {
            cx: String(this.xPos(i)),
            cy: String(this.yPos(s.mean[i]!, yMax)),
            r: "3",
            fill: SERIES_COLORS[si],
            class: "series-point",
            "data-series": s.label,
            "data-axis": String(p.axis[i]),
            "data-mean": String(s.mean[i]),
          });
          if (p.bands && s.lo && s.hi) {
            dot.setAttribute("data-lo", String(s.lo[i]));
            dot.setAttribute("data-hi", String(s.hi[i]));
          }
          svg.append(dot);
        }
      }
    });

    // hover guide
    const guide = el("line", {
      y1: String(MARGIN.top), y2: String(VIEW_H - MARGIN.bottom),
      class: "hover-guide", visibility: "hidden",
    });
    svg.append(guide);

    const overlay = el("rect", {
      x: String(MARGIN.left), y: String(MARGIN.top),
      width: String(VIEW_W - MARGIN.left - MARGIN.right),
      height: String(VIEW_H - MARGIN.top - MARGIN.bottom),
      fill: "transparent", class: "hover-overlay",
    });
    overlay.addEventListener("mousemove", (ev) => {
      const index = this.indexFromEvent(ev as MouseEvent, svg);
      if (index !== null) this.showTooltip(index, guide, ev as MouseEvent);
    });
    overlay.addEventListener("mouseleave", () => {
      guide.setAttribute("visibility", "hidden");
      this.tooltip.style.display = "none";
    });
    overlay.addEventListener("mousedown", (ev) => {
      this.dragStart = this.indexFromEvent(ev as MouseEvent, svg);
    });
    overlay.addEventListener("mouseup", (ev) => {
      const end = this.indexFromEvent(ev as MouseEvent, svg);
      if (this.dragStart !== null && end !== null && end !== this.dragStart) {
        this.zoomTo(this.dragStart, end);
      }
      this.dragStart = null;
    });
    overlay.addEventListener("dblclick", () => this.resetZoom());
    svg.append(overlay);

    this.container.append(svg);
    this.container.append(this.buildLegend(p.series));
    this.container.append(this.tooltip);

    if (this.window) {
      const note = document.createElement("button");
      note.type = "button";
      note.className = "zoom-reset";
      note.textContent = `zoomed ${p.axis[lo]}–${p.axis[hi]} (reset)`;
      note.addEventListener("click", () => this.resetZoom());
      this.container.append(note);
    }
  }

  private buildLegend(series: CurveSeries[]): HTMLElement {
    const legend = document.createElement("ul");
    legend.className = "legend";
    series.forEach((s, si) => {
      const item = document.createElement("li");
      const swatch = document.createElement("span");
      swatch.className = "swatch";
      swatch.style.backgroundColor = SERIES_COLORS[si];
      const label = document.createElement("span");
      label.textContent = s.label;
      item.append(swatch, label);
      legend.append(item);
    });
    return legend;
  }

  private indexFromEvent(ev: MouseEvent, svg: SVGSVGElement): number | null {
    if (!this.payload) return null;
    const rect = svg.getBoundingClientRect();
    if (rect.width === 0) return null;
    const xView = ((ev.clientX - rect.left) / rect.width) * VIEW_W;
    const [lo, hi] = this.visibleRange;
    const w = VIEW_W - MARGIN.left - MARGIN.right;
    const frac = (xView - MARGIN.left) / w;
    const index = Math.round(lo + frac * (hi - lo));
    return Math.max(lo, Math.min(hi, index));
  }

  /** Show exact values for one axis point (also used directly by tests). */
  showTooltip(index: number, guide?: SVGLineElement, ev?: MouseEvent): void {
    const p = this.payload;
    if (!p) return;
    const x = this.xPos(index);
    if (guide) {
      guide.setAttribute("x1", String(x));
      guide.setAttribute("x2", String(x));
      guide.setAttribute("visibility", "visible");
    }
    const rows = p.series.map((s) => {
      const mean = s.mean[index];
      if (mean === null) return `<b>${s.label}</b>: no data`;
      let text = `<b>${s.label}</b>: <span data-exact="${String(mean)}">${formatValue(mean)}</span>`;
      if (p.bands && s.lo && s.hi && s.lo[index] !== null) {
        text += ` (${formatValue(s.lo[index]!)}–${formatValue(s.hi[index]!)})`;
      }
      return text;
    });
    this.tooltip.innerHTML =
      `<div class="tooltip-axis">${p.view} ${p.axis[index]}</div>` + rows.join("<br>");
    this.tooltip.style.display = "block";
    if (ev) {
      const bounds = this.container.getBoundingClientRect();
      this.tooltip.style.left = `${ev.clientX - bounds.left + 14}px`;
      this.tooltip.style.top = `${ev.clientY - bounds.top + 8}px`;
    }
  }
}
