import { beforeEach, describe, expect, it } from "vitest";

import type { CurvePayload } from "../src/api";
import { CurveChart, formatValue } from "../src/chart";

function payload(overrides: Partial<CurvePayload> = {}): CurvePayload {
  return {
    disease: "tumors",
    disease_name: "Tumors",
    view: "year",
    axis: [2010, 2011, 2012, 2013, 2014],
    bands: true,
    band_level: 0.9,
    scale: "none",
    conditioning: {},
    stratify_by: "smoking",
    series: [
      {
        label: "non-smoker",
        mean: [0.11, 0.12, 0.115, 0.118, 0.121],
        lo: [0.09, 0.1, 0.095, 0.098, 0.1],
        hi: [0.13, 0.14, 0.135, 0.138, 0.142],
        weight: [1, 1, 1, 1, 1],
      },
      {
        label: "smoker",
        mean: [0.2, 0.21, 0.205, 0.208, 0.2123456789],
        lo: [0.18, 0.19, 0.185, 0.188, 0.19],
        hi: [0.22, 0.23, 0.225, 0.228, 0.235],
        weight: [1, 1, 1, 1, 1],
      },
    ],
    store_digest: "abc123",
    ...overrides,
  };
}

let container: HTMLElement;
let chart: CurveChart;

beforeEach(() => {
  document.body.innerHTML = '<div id="c"></div>';
  container = document.getElementById("c")!;
  chart = new CurveChart(container);
});

describe("CurveChart", () => {
  it("draws one line and one shaded band per series, with a legend", () => {
    chart.render(payload());
    expect(container.querySelectorAll("polyline.series-line")).toHaveLength(2);
    expect(container.querySelectorAll("polygon.band")).toHaveLength(2);
    const legend = [...container.querySelectorAll(".legend li")].map((li) => li.textContent);
    expect(legend).toEqual(["non-smoker", "smoker"]);
  });

  it("omits bands when the payload has none", () => {
    const p = payload({ bands: false });
    for (const s of p.series) {
      delete (s as unknown as Record<string, unknown>)["lo"];
      delete (s as unknown as Record<string, unknown>)["hi"];
    }
    chart.render(p);
    expect(container.querySelectorAll("polygon.band")).toHaveLength(0);
    expect(container.querySelectorAll("polyline.series-line")).toHaveLength(2);
  });

  it("exposes every plotted value verbatim in the DOM", () => {
    const p = payload();
    chart.render(p);
    const dots = [...container.querySelectorAll("circle.series-point")];
    expect(dots).toHaveLength(10);
    const smokerLast = dots.find(
      (d) => d.getAttribute("data-series") === "smoker" && d.getAttribute("data-axis") === "2014",
    )!;
    // byte-traceable: the attribute is String(payload value), untouched
    expect(smokerLast.getAttribute("data-mean")).toBe(String(0.2123456789));
    expect(smokerLast.getAttribute("data-lo")).toBe(String(0.19));
    expect(smokerLast.getAttribute("data-hi")).toBe(String(0.235));
  });

  it("hover tooltip shows exact values for the hovered point", () => {
    chart.render(payload());
    chart.showTooltip(4);
    const tooltip = container.querySelector(".chart-tooltip") as HTMLElement;
    expect(tooltip.style.display).toBe("block");
    expect(tooltip.innerHTML).toContain("year 2014");
    const exact = tooltip.querySelectorAll("[data-exact]");
    expect([...exact].map((e) => e.getAttribute("data-exact"))).toContain(
      String(0.2123456789),
    );
  });

  it("refuses to draw more than five series", () => {
    const p = payload();
    const six = Array.from({ length: 6 }, (_, i) => ({
      ...p.series[0],
      label: `s${i}`,
    }));
    expect(() => chart.render({ ...p, series: six })).toThrow(/cap 5/);
  });

  it("renders a flat line with a zero-width band for degenerate posteriors", () => {
    const constant = payload({
      series: [{
        label: "all",
        mean: [0.3, 0.3, 0.3, 0.3, 0.3],
        lo: [0.3, 0.3, 0.3, 0.3, 0.3],
        hi: [0.3, 0.3, 0.3, 0.3, 0.3],
        weight: [1, 1, 1, 1, 1],
      }],
      stratify_by: null,
    });
    chart.render(constant);
    const line = container.querySelector("polyline.series-line")!;
    const ys = new Set(
      line.getAttribute("points")!.split(" ").map((p) => p.split(",")[1]),
    );
    expect(ys.size).toBe(1); // flat
    const band = container.querySelector("polygon.band")!;
    const bandYs = new Set(
      band.getAttribute("points")!.split(" ").map((p) => p.split(",")[1]),
    );
    expect(bandYs.size).toBe(1); // zero width collapses onto the line
  });

  it("splits series with null holes instead of bridging them", () => {
    const holey = payload({
      series: [{
        label: "1956",
        mean: [0.1, 0.11, 0.12, null, null],
        lo: [0.09, 0.1, 0.11, null, null],
        hi: [0.11, 0.12, 0.13, null, null],
        weight: [1, 1, 1, null, null],
      }],
      stratify_by: "cohort",
    });
    chart.render(holey);
    const lines = container.querySelectorAll("polyline.series-line");
    expect(lines).toHaveLength(1);
    expect(lines[0].getAttribute("points")!.split(" ")).toHaveLength(3);
    expect(container.querySelectorAll("circle.series-point")).toHaveLength(3);
  });

  it("zooms into an axis range and resets", () => {
    chart.render(payload());
    chart.zoomTo(1, 3);
    expect(chart.visibleRange).toEqual([1, 3]);
    expect(container.querySelector(".zoom-reset")!.textContent).toContain("2011");
    expect(container.querySelectorAll("circle.series-point")).toHaveLength(6);
    chart.resetZoom();
    expect(chart.visibleRange).toEqual([0, 4]);
    expect(container.querySelectorAll("circle.series-point")).toHaveLength(10);
  });

  it("shows the explanatory empty state, never a blank chart", () => {
    chart.renderEmpty("the selected filters match no population cell at any axis point");
    expect(container.querySelector(".empty-title")!.textContent).toContain("No population");
    expect(container.querySelector(".empty-detail")!.textContent).toContain("no population cell");
    expect(container.querySelector("svg")).toBeNull();
  });

  it("error state offers a retry", () => {
    let retried = 0;
    chart.renderError("boom", () => retried++);
    (container.querySelector(".error-state button") as HTMLButtonElement).click();
    expect(retried).toBe(1);
  });
});

describe("formatValue", () => {
  it("keeps magnitudes readable without mangling", () => {
    expect(formatValue(2500)).toBe("2,500");
    expect(formatValue(0.025)).toBe("0.02500");
    expect(formatValue(1)).toBe("1.0000");
  });
});
