/**
 * Static "About this app" page: what the explorer shows, how to read it,
 * result license and reference links.  Renders without any API call.
 */

export const RESULT_LICENSE = "CC BY-NC-SA 4.0";

const REFERENCES: Array<{ label: string; href: string }> = [
  {
    label: `Result license: ${RESULT_LICENSE}`,
    href: "https://creativecommons.org/licenses/by-nc-sa/4.0/",
  },
  { label: "Machine-readable catalog (JSON)", href: "/api/v1/metadata" },
  { label: "Service health and store digest", href: "/healthz" },
];

export function buildAboutPage(): HTMLElement {
  const page = document.createElement("article");
  page.className = "about-page";

  const title = document.createElement("h2");
  title.textContent = "About this app";

  const what = document.createElement("p");
  what.textContent =
    "This explorer shows modeled chronic-disease prevalence for population " +
    "subgroups: the share of people alive with a given diagnosis, by survey " +
    "year or by age, for any combination of area, birth cohort and risk " +
    "factors. Estimates come from a precomputed store of Monte Carlo " +
    "samples served by the companion API; the browser only draws what the " +
    "API returns and never recomputes statistics.";

  const tutorialTitle = document.createElement("h3");
  tutorialTitle.textContent = "How to read the curves";
  const tutorial = document.createElement("ol");
  tutorial.className = "tutorial";
  for (const step of [
    "Pick a disease, then narrow the population with the filters on the " +
      "left: region or local health unit, birth cohorts, and the risk-factor " +
      "toggles. No filters means the whole population.",
    "Switch between the year view (one point per survey year) and the age " +
      "view (one point per age; a birth cohort appears once per age).",
    "Stratify by one dimension to compare up to five curves side by side; " +
      "each curve is labeled in the legend.",
    "Toggle the 90% credible bands to see estimation uncertainty as a " +
      "shaded ribbon around each curve.",
    "Hover over the chart for exact values; drag horizontally to zoom into " +
      "an axis range, double-click to reset.",
    "Switch the scale to cases per 100,000 or to absolute case counts for " +
      "the selected population.",
  ]) {
    const li = document.createElement("li");
    li.textContent = step;
    tutorial.append(li);
  }

  const caveatTitle = document.createElement("h3");
  caveatTitle.textContent = "What the numbers are";
  const caveat = document.createElement("p");
  caveat.textContent =
    "Each curve point is the posterior mean over stored Monte Carlo " +
    "particles of the subgroup's diagnosis probability; bands are central " +
    "credible intervals over those particles. Only aggregated, cell-level " +
    "samples are stored and served: the pipeline holds no individual-level " +
    "records, and no endpoint exposes anything finer than a curve.";

  const refTitle = document.createElement("h3");
  refTitle.textContent = "References";
  const refs = document.createElement("ul");
  refs.className = "references";
  for (const ref of REFERENCES) {
    const li = document.createElement("li");
    const a = document.createElement("a");
    a.href = ref.href;
    a.textContent = ref.label;
    a.rel = "noopener";
    li.append(a);
    refs.append(li);
  }

  const license = document.createElement("p");
  license.className = "license-note";
  license.textContent =
    `Results are reusable under the ${RESULT_LICENSE} license: share and ` +
    "adapt with attribution, non-commercially, under the same terms.";

  page.append(title, what, tutorialTitle, tutorial, caveatTitle, caveat,
              refTitle, refs, license);
  return page;
}
