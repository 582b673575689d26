/**
 * Typed API client.  The explorer displays numbers exactly as this module
 * returns them; no aggregation arithmetic happens on the client.
 *
 * A newer curve request supersedes any in-flight one: the previous request
 * is aborted so the view can never show a stale answer.
 */

import type { ViewState } from "./state";

export interface Metadata {
  diseases: Array<{ id: string; name: string }>;
  regions: Record<string, string[]>;
  locations: Array<{ id: string; region: string }>;
  cohorts: number[];
  ages: { min: number; max: number };
  years: { min: number; max: number };
  dimensions: Record<string, { levels: number[]; labels: Record<string, string> }>;
  stratifiable: string[];
  max_strata: number;
  band_level_default: number;
  scales: string[];
  particles: number;
  license: string;
  store_digest: string;
}

export interface CurveSeries {
  label: string;
  mean: Array<number | null>;
  weight: Array<number | null>;
  lo?: Array<number | null>;
  hi?: Array<number | null>;
}

export interface CurvePayload {
  disease: string;
  disease_name: string;
  view: "year" | "age";
  axis: number[];
  bands: boolean;
  band_level?: number;
  scale: string;
  conditioning: Record<string, Array<string | number>>;
  stratify_by: string | null;
  series: CurveSeries[];
  store_digest: string;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(detail);
  }

  get emptySubgroup(): boolean {
    return this.status === 422;
  }
}

export function prevalenceQuery(state: ViewState): string {
  const params = new URLSearchParams();
  params.append("disease", state.disease ?? "");
  params.append("view", state.view);
  for (const dim of Object.keys(state.filters).sort()) {
    for (const value of state.filters[dim]) params.append("f", `${dim}:${value}`);
  }
  if (state.stratify !== null) params.append("stratify", state.stratify);
  params.append("bands", state.bands ? "true" : "false");
  params.append("level", String(state.level));
  params.append("scale", state.scale);
  return params.toString();
}

async function getJson<T>(url: string, signal?: AbortSignal): Promise<T> {
  const response = await fetch(url, { signal });
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = (await response.json()) as { detail?: string };
      if (body.detail) detail = body.detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  private inflight: AbortController | null = null;

  constructor(private base: string = "") {}

  metadata(): Promise<Metadata> {
    return getJson<Metadata>(`${this.base}/api/v1/metadata`);
  }

  /** Fetch a curve, aborting any still-running previous curve request. */
  prevalence(state: ViewState): Promise<CurvePayload> {
    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    const url = `${this.base}/api/v1/prevalence?${prevalenceQuery(state)}`;
    return getJson<CurvePayload>(url, controller.signal).finally(() => {
      if (this.inflight === controller) this.inflight = null;
    });
  }
}

export function isAbort(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}
