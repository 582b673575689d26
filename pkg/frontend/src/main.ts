/**
 * Application shell: boots from the URL, keeps every view change in the URL,
 * and wires filter changes to single API calls whose responses drive the
 * chart.  A newer change cancels the in-flight request.
 */

import { ApiClient, ApiError, isAbort, type Metadata } from "./api";
import { buildAboutPage, RESULT_LICENSE } from "./about";
import { CurveChart } from "./chart";
import { buildFilterPanel, buildViewTabs } from "./filters";
import { decodeState, defaultState, encodeState, statesEqual, type ViewState } from "./state";

export class App {
  private meta: Metadata | null = null;
  private state: ViewState = defaultState();
  private chart: CurveChart;
  private client: ApiClient;

  constructor(
    private root: HTMLElement,
    client?: ApiClient,
  ) {
    this.client = client ?? new ApiClient("");
    this.root.innerHTML = `
      <header class="app-header">
        <h1>Prevalence explorer</h1>
        <nav>
          <a href="#explore" data-tab="explore">Explore</a>
          <a href="#about" data-tab="about">About this app</a>
        </nav>
        <p class="license-line">results licensed <span class="license">${RESULT_LICENSE}</span></p>
      </header>
      <div class="layout">
        <aside id="panel" class="sidebar"></aside>
        <main class="content">
          <div id="tabs"></div>
          <section id="chart" class="chart-area" aria-live="polite"></section>
          <p id="banner" class="info-banner"></p>
        </main>
      </div>
      <section id="about" class="about-area" hidden></section>
    `;
    this.chart = new CurveChart(this.root.querySelector("#chart")!);
    this.root.querySelector("#about")!.append(buildAboutPage());
    window.addEventListener("hashchange", () => this.syncTab());
    window.addEventListener("popstate", () => {
      const fromUrl = decodeState(window.location.search);
      if (!statesEqual(fromUrl, this.state)) {
        this.state = this.normalize(fromUrl);
        this.renderControls();
        void this.refreshCurve();
      }
    });
    this.syncTab();
  }

  async start(): Promise<void> {
    this.state = this.normalize(decodeState(window.location.search));
    try {
      this.meta = await this.client.metadata();
    } catch (err) {
      this.renderMetadataFailure(err);
      return;
    }
    this.state = this.normalize(this.state);
    this.renderControls();
    await this.refreshCurve();
  }

  /** Fill defaults that need metadata: national, all population, first
   * disease, year view. */
  private normalize(state: ViewState): ViewState {
    if (this.meta && state.disease === null) {
      return { ...state, disease: this.meta.diseases[0]?.id ?? null };
    }
    return state;
  }

  private syncTab(): void {
    const about = window.location.hash === "#about";
    (this.root.querySelector("#about") as HTMLElement).hidden = !about;
    (this.root.querySelector(".layout") as HTMLElement).hidden = about;
    this.root.querySelectorAll("nav a").forEach((a) => {
      a.classList.toggle("active", (a as HTMLAnchorElement).dataset.tab === (about ? "about" : "explore"));
    });
  }

  private renderMetadataFailure(err: unknown): void {
    const panel = this.root.querySelector("#panel")!;
    panel.innerHTML = "";
    const notice = document.createElement("div");
    notice.className = "error-state";
    const text = document.createElement("p");
    text.textContent = `The data service is unreachable (${err instanceof Error ? err.message : err}). The About page still works.`;
    const retry = document.createElement("button");
    retry.type = "button";
    retry.textContent = "Retry";
    retry.addEventListener("click", () => void this.start());
    notice.append(text, retry);
    panel.append(notice);
  }

  private update(next: ViewState): void {
    if (statesEqual(next, this.state)) return;
    this.state = this.normalize(next);
    const query = encodeState(this.state);
    window.history.pushState(null, "", query ? `?${query}` : window.location.pathname);
    this.renderControls();
    void this.refreshCurve();
  }

  private renderControls(): void {
    if (!this.meta) return;
    const panel = this.root.querySelector("#panel")!;
    panel.replaceChildren(buildFilterPanel(this.meta, this.state, (s) => this.update(s)));
    const tabs = this.root.querySelector("#tabs")!;
    tabs.replaceChildren(buildViewTabs(this.state, (s) => this.update(s)));
  }

  private banner(text: string): void {
    (this.root.querySelector("#banner") as HTMLElement).textContent = text;
  }

  async refreshCurve(): Promise<void> {
    if (!this.meta || this.state.disease === null) return;
    try {
      const payload = await this.client.prevalence(this.state);
      this.chart.render(payload);
      const n = payload.series.length;
      const unit = payload.scale === "none" ? "proportion diagnosed"
        : payload.scale === "per100k" ? "cases per 100,000 people"
        : "expected cases in the selected population";
      this.banner(
        `${payload.disease_name}: ${n === 1 ? "one curve" : `${n} curves`} of ` +
        `${unit}${payload.bands ? ` with ${Math.round((payload.band_level ?? 0.9) * 100)}% credible bands` : ""}; ` +
        `every value is served precomputed (store ${payload.store_digest.slice(0, 8)}).`,
      );
    } catch (err) {
      if (isAbort(err)) return; // superseded by a newer request
      if (err instanceof ApiError && err.emptySubgroup) {
        this.chart.renderEmpty(err.detail);
        this.banner("No data for this combination of filters.");
        return;
      }
      this.chart.renderError(
        err instanceof Error ? err.message : String(err),
        () => void this.refreshCurve(),
      );
    }
  }

  /** Test hook: current canonical query string. */
  get query(): string {
    return encodeState(this.state);
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  const app = new App(document.getElementById("app")!);
  void app.start();
}
