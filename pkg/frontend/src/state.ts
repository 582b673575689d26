/**
 * View state and its URL codec.
 *
 * Every reachable state of the explorer serializes to the query string and
 * back, so any exact view is a shareable link.  The encoder is canonical
 * (fixed key order, sorted filters, defaults omitted), which makes
 * encode(decode(url)) === url for every URL the app itself produces.
 */

export type ViewTab = "year" | "age";
export type Scale = "none" | "per100k" | "absolute";

export interface ViewState {
  disease: string | null; // null until metadata provides the first disease
  view: ViewTab;
  /** dimension -> sorted values; repeated f=<dim>:<value> on the wire */
  filters: Record<string, string[]>;
  stratify: string | null;
  bands: boolean;
  level: number;
  scale: Scale;
}

export const DEFAULT_LEVEL = 0.9;

export const FILTER_DIMENSIONS = [
  "region",
  "location",
  "cohort",
  "age",
  "sex",
  "smoking",
  "education",
  "economic",
] as const;

export function defaultState(): ViewState {
  return {
    disease: null,
    view: "year",
    filters: {},
    stratify: null,
    bands: true,
    level: DEFAULT_LEVEL,
    scale: "none",
  };
}

function sortedFilters(filters: Record<string, string[]>): Array<[string, string]> {
  const out: Array<[string, string]> = [];
  for (const dim of FILTER_DIMENSIONS) {
    const values = filters[dim];
    if (!values || values.length === 0) continue;
    for (const v of [...values].sort()) out.push([dim, v]);
  }
  return out;
}

export function encodeState(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.disease !== null) params.append("disease", state.disease);
  params.append("view", state.view);
  for (const [dim, value] of sortedFilters(state.filters)) {
    params.append("f", `${dim}:${value}`);
  }
  if (state.stratify !== null) params.append("stratify", state.stratify);
  if (!state.bands) params.append("bands", "false");
  if (state.level !== DEFAULT_LEVEL) params.append("level", String(state.level));
  if (state.scale !== "none") params.append("scale", state.scale);
  return params.toString();
}

export function decodeState(query: string): ViewState {
  const params = new URLSearchParams(query);
  const state = defaultState();
  const disease = params.get("disease");
  if (disease) state.disease = disease;
  const view = params.get("view");
  if (view === "year" || view === "age") state.view = view;
  for (const item of params.getAll("f")) {
    const idx = item.indexOf(":");
    if (idx <= 0) continue;
    const dim = item.slice(0, idx);
    const value = item.slice(idx + 1);
    if (!(FILTER_DIMENSIONS as readonly string[]).includes(dim)) continue;
    (state.filters[dim] ??= []).push(value);
  }
  for (const dim of Object.keys(state.filters)) {
    state.filters[dim] = [...new Set(state.filters[dim])].sort();
  }
  const stratify = params.get("stratify");
  if (stratify) state.stratify = stratify;
  if (params.get("bands") === "false") state.bands = false;
  const level = params.get("level");
  if (level !== null && !Number.isNaN(Number(level))) {
    const parsed = Number(level);
    if (parsed > 0 && parsed < 1) state.level = parsed;
  }
  const scale = params.get("scale");
  if (scale === "per100k" || scale === "absolute") state.scale = scale;
  return state;
}

/** Toggle one value inside a filter dimension, returning a new state. */
export function withFilterValue(
  state: ViewState,
  dim: string,
  value: string,
  enabled: boolean,
): ViewState {
  const filters: Record<string, string[]> = {};
  for (const [k, v] of Object.entries(state.filters)) filters[k] = [...v];
  const current = new Set(filters[dim] ?? []);
  if (enabled) current.add(value);
  else current.delete(value);
  if (current.size === 0) delete filters[dim];
  else filters[dim] = [...current].sort();
  return { ...state, filters };
}

export function statesEqual(a: ViewState, b: ViewState): boolean {
  return encodeState(a) === encodeState(b);
}
