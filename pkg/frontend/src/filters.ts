/**
 * Filter panel: population selection (region -> LHU cascade, cohorts, sex and
 * risk-factor toggles) plus display controls (view tab, stratification,
 * bands, scale).  The panel is stateless DOM: it is rebuilt from
 * (metadata, state) and reports every change through a single callback,
 * which triggers exactly one API call per change.
 */

import type { Metadata } from "./api";
import type { ViewState } from "./state";
import { withFilterValue } from "./state";

export type StateChange = (next: ViewState) => void;

function section(title: string): HTMLFieldSetElement {
  const box = document.createElement("fieldset");
  const legend = document.createElement("legend");
  legend.textContent = title;
  box.append(legend);
  return box;
}

function checkboxRow(
  label: string,
  checked: boolean,
  onToggle: (enabled: boolean) => void,
  name: string,
  value: string,
): HTMLLabelElement {
  const row = document.createElement("label");
  row.className = "check-row";
  const box = document.createElement("input");
  box.type = "checkbox";
  box.checked = checked;
  box.dataset.dim = name;
  box.dataset.value = value;
  box.addEventListener("change", () => onToggle(box.checked));
  const text = document.createElement("span");
  text.textContent = label;
  row.append(box, text);
  return row;
}

/** Selected regions restrict the LHU list; LHU filters outside the selected
 * regions are pruned so the state never contradicts the visible panel. */
export function visibleLocations(meta: Metadata, state: ViewState): Array<{ id: string; region: string }> {
  const regions = state.filters["region"];
  if (!regions || regions.length === 0) return meta.locations;
  const allowed = new Set(regions);
  return meta.locations.filter((l) => allowed.has(l.region));
}

function pruneLocations(meta: Metadata, state: ViewState): ViewState {
  const visible = new Set(visibleLocations(meta, state).map((l) => l.id));
  const current = state.filters["location"] ?? [];
  const kept = current.filter((id) => visible.has(id));
  if (kept.length === current.length) return state;
  const filters = { ...state.filters };
  if (kept.length) filters["location"] = kept;
  else delete filters["location"];
  return { ...state, filters };
}

export function buildFilterPanel(
  meta: Metadata,
  state: ViewState,
  onChange: StateChange,
): HTMLElement {
  const panel = document.createElement("form");
  panel.className = "filter-panel";
  panel.addEventListener("submit", (ev) => ev.preventDefault());

  // --- disease ------------------------------------------------------------
  const diseaseBox = section("Disease");
  const diseaseSelect = document.createElement("select");
  diseaseSelect.name = "disease";
  for (const d of meta.diseases) {
    const opt = document.createElement("option");
    opt.value = d.id;
    opt.textContent = d.name;
    opt.selected = d.id === state.disease;
    diseaseSelect.append(opt);
  }
  diseaseSelect.addEventListener("change", () =>
    onChange({ ...state, disease: diseaseSelect.value }),
  );
  diseaseBox.append(diseaseSelect);
  panel.append(diseaseBox);

  // --- geography: region -> LHU cascade -----------------------------------
  const regionBox = section("Region");
  for (const region of Object.keys(meta.regions).sort()) {
    regionBox.append(checkboxRow(
      region,
      (state.filters["region"] ?? []).includes(region),
      (enabled) => {
        const next = withFilterValue(state, "region", region, enabled);
        onChange(pruneLocations(meta, next));
      },
      "region",
      region,
    ));
  }
  panel.append(regionBox);

  const lhuBox = section("Local health unit");
  lhuBox.classList.add("lhu-list");
  for (const loc of visibleLocations(meta, state)) {
    lhuBox.append(checkboxRow(
      `${loc.id} (${loc.region})`,
      (state.filters["location"] ?? []).includes(loc.id),
      (enabled) => onChange(withFilterValue(state, "location", loc.id, enabled)),
      "location",
      loc.id,
    ));
  }
  panel.append(lhuBox);

  // --- cohorts -------------------------------------------------------------
  const cohortBox = section("Birth cohort");
  for (const cohort of meta.cohorts) {
    const value = String(cohort);
    cohortBox.append(checkboxRow(
      value,
      (state.filters["cohort"] ?? []).includes(value),
      (enabled) => onChange(withFilterValue(state, "cohort", value, enabled)),
      "cohort",
      value,
    ));
  }
  panel.append(cohortBox);

  // --- binary factors -------------------------------------------------------
  for (const dim of ["sex", "smoking", "education", "economic"]) {
    const info = meta.dimensions[dim];
    if (!info) continue;
    const box = section(dim);
    box.dataset.dim = dim;
    if (info.levels.length < 2) {
      const note = document.createElement("p");
      note.className = "fixed-note";
      note.textContent = `fixed: ${info.labels[String(info.levels[0])]}`;
      box.append(note);
      panel.append(box);
      continue;
    }
    const group = document.createElement("div");
    group.className = "segmented";
    const selected = state.filters[dim]?.[0] ?? null;
    const options: Array<[string | null, string]> = [
      [null, "any"],
      ...info.levels.map((lv): [string | null, string] =>
        [String(lv), info.labels[String(lv)]]),
    ];
    for (const [value, label] of options) {
      const button = document.createElement("button");
      button.type = "button";
      button.textContent = label;
      button.dataset.dim = dim;
      button.dataset.value = value ?? "any";
      if (value === selected || (value === null && selected === null)) {
        button.classList.add("active");
      }
      button.addEventListener("click", () => {
        const filters = { ...state.filters };
        delete filters[dim];
        if (value !== null) filters[dim] = [value];
        onChange({ ...state, filters });
      });
      group.append(button);
    }
    box.append(group);
    panel.append(box);
  }

  // --- display controls ------------------------------------------------------
  const displayBox = section("Display");

  const stratifyLabel = document.createElement("label");
  stratifyLabel.textContent = "stratify by ";
  const stratifySelect = document.createElement("select");
  stratifySelect.name = "stratify";
  const noneOpt = document.createElement("option");
  noneOpt.value = "";
  noneOpt.textContent = "nothing";
  stratifySelect.append(noneOpt);
  for (const dim of meta.stratifiable) {
    const opt = document.createElement("option");
    opt.value = dim;
    opt.textContent = dim;
    opt.selected = dim === state.stratify;
    stratifySelect.append(opt);
  }
  stratifySelect.addEventListener("change", () =>
    onChange({ ...state, stratify: stratifySelect.value || null }),
  );
  stratifyLabel.append(stratifySelect);
  displayBox.append(stratifyLabel);

  const bandsLabel = document.createElement("label");
  bandsLabel.className = "check-row";
  const bandsBox = document.createElement("input");
  bandsBox.type = "checkbox";
  bandsBox.name = "bands";
  bandsBox.checked = state.bands;
  bandsBox.addEventListener("change", () =>
    onChange({ ...state, bands: bandsBox.checked }),
  );
  const bandsText = document.createElement("span");
  bandsText.textContent = `${Math.round(state.level * 100)}% credible bands`;
  bandsLabel.append(bandsBox, bandsText);
  displayBox.append(bandsLabel);

  const scaleLabel = document.createElement("label");
  scaleLabel.textContent = "scale ";
  const scaleSelect = document.createElement("select");
  scaleSelect.name = "scale";
  for (const [value, label] of [
    ["none", "proportion"],
    ["per100k", "cases per 100,000"],
    ["absolute", "absolute cases"],
  ] as const) {
    const opt = document.createElement("option");
    opt.value = value;
    opt.textContent = label;
    opt.selected = value === state.scale;
    scaleSelect.append(opt);
  }
  scaleSelect.addEventListener("change", () =>
    onChange({ ...state, scale: scaleSelect.value as ViewState["scale"] }),
  );
  scaleLabel.append(scaleSelect);
  displayBox.append(scaleLabel);

  panel.append(displayBox);
  return panel;
}

/** The year/age tab strip of the display section. */
export function buildViewTabs(state: ViewState, onChange: StateChange): HTMLElement {
  const tabs = document.createElement("div");
  tabs.className = "view-tabs";
  for (const [view, label] of [
    ["year", "Prevalence by year"],
    ["age", "Prevalence by age"],
  ] as const) {
    const button = document.createElement("button");
    button.type = "button";
    button.textContent = label;
    button.dataset.view = view;
    if (state.view === view) button.classList.add("active");
    button.addEventListener("click", () => {
      if (state.view !== view) onChange({ ...state, view });
    });
    tabs.append(button);
  }
  return tabs;
}
