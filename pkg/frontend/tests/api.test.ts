import { afterEach, describe, expect, it, vi } from "vitest";

import { ApiClient, ApiError, isAbort, prevalenceQuery } from "../src/api";
import { decodeState, defaultState } from "../src/state";

afterEach(() => {
  vi.restoreAllMocks();
});

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("prevalenceQuery", () => {
  it("mirrors the API wire format", () => {
    const state = decodeState(
      "disease=tumors&view=age&f=region%3AVeneto&f=smoking%3A1&stratify=education&scale=per100k",
    );
    const q = new URLSearchParams(prevalenceQuery(state));
    expect(q.get("disease")).toBe("tumors");
    expect(q.get("view")).toBe("age");
    expect(q.getAll("f")).toEqual(["region:Veneto", "smoking:1"]);
    expect(q.get("stratify")).toBe("education");
    expect(q.get("bands")).toBe("true");
    expect(q.get("level")).toBe("0.9");
    expect(q.get("scale")).toBe("per100k");
  });
});

describe("ApiClient", () => {
  it("returns payloads verbatim, no recomputation", async () => {
    const payload = {
      disease: "tumors",
      series: [{ label: "all", mean: [0.123456789012345, 0.2], weight: [1, 1] }],
      axis: [2010, 2011],
    };
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse(payload)));
    const client = new ApiClient("");
    const state = { ...defaultState(), disease: "tumors" };
    const got = await client.prevalence(state);
    // exact double round-trip through JSON; nothing averaged or clipped
    expect(got.series[0].mean[0]).toBe(0.123456789012345);
    expect(got).toEqual(payload);
  });

  it("aborts the previous in-flight request when a newer one starts", async () => {
    const seen: AbortSignal[] = [];
    vi.stubGlobal("fetch", vi.fn((_url: string, init?: RequestInit) => {
      const signal = init?.signal as AbortSignal;
      seen.push(signal);
      return new Promise<Response>((resolve, reject) => {
        signal.addEventListener("abort", () =>
          reject(new DOMException("aborted", "AbortError")));
        // only the second request ever resolves
        if (seen.length === 2) {
          setTimeout(() => resolve(jsonResponse({ axis: [], series: [] })), 0);
        }
      });
    }));
    const client = new ApiClient("");
    const state = { ...defaultState(), disease: "tumors" };
    const first = client.prevalence(state);
    const second = client.prevalence({ ...state, view: "age" });

    await expect(first).rejects.toSatisfy(isAbort);
    await expect(second).resolves.toEqual({ axis: [], series: [] });
    expect(seen[0].aborted).toBe(true);
    expect(seen[1].aborted).toBe(false);
  });

  it("surfaces the service's explanation for empty subgroups", async () => {
    vi.stubGlobal("fetch", vi.fn(async () =>
      jsonResponse({ detail: "the selected filters match no population cell" }, 422)));
    const client = new ApiClient("");
    const state = { ...defaultState(), disease: "tumors" };
    const err = await client.prevalence(state).catch((e) => e);
    expect(err).toBeInstanceOf(ApiError);
    expect(err.emptySubgroup).toBe(true);
    expect(err.detail).toContain("no population cell");
  });

  it("maps other failures to ApiError with status", async () => {
    vi.stubGlobal("fetch", vi.fn(async () => jsonResponse({ detail: "unknown disease 'x'" }, 404)));
    const client = new ApiClient("");
    const err = await client
      .prevalence({ ...defaultState(), disease: "x" })
      .catch((e) => e);
    expect(err.status).toBe(404);
    expect(err.emptySubgroup).toBe(false);
  });
});
