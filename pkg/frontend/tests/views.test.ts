// View snapshot tests against canned hub responses: every rendered
// statistic must equal the raw token in the response body it came from.

import { afterEach, describe, expect, it } from "vitest";

import { HubApi } from "../src/api.js";
import { renderBenchmark } from "../src/benchmark.js";
import { renderBrowser } from "../src/browser.js";
import { indexJson } from "../src/rawjson.js";

const STATS = (mean: string): string =>
  `{"count": 12, "mean_ms": ${mean}, "stddev_ms": 1.50, "min_ms": 60, "max_ms": 70, "p50_ms": 63, "p95_ms": 69}`;

const REPORT_BODY = `{
  "config_name": "A_ETE",
  "generated_ts": 1755400000000,
  "turn_count": 12,
  "critical_path": ["speech2text", "llm", "tts"],
  "critical_path_mean_ms": 60.0,
  "overhead_mean_ms": 3.25,
  "end_to_end": ${STATS("63.25")},
  "stages": [
    {"stage_id": "speech2text", "kind": "speech2text", "worker": ${STATS("20.0")}, "overhead": ${STATS("1.0")}},
    {"stage_id": "llm", "kind": "llm", "worker": ${STATS("28.0")}, "overhead": ${STATS("1.5")}},
    {"stage_id": "emotion", "kind": "emotion", "worker": ${STATS("10.0")}, "overhead": ${STATS("0.5")}},
    {"stage_id": "tts", "kind": "tts", "worker": ${STATS("12.0")}, "overhead": ${STATS("0.25")}}
  ],
  "accuracy": {
    "annotation_count": 5,
    "mean_overall_score": 2.4,
    "per_stage_mean_scores": {"llm": 3.0},
    "transcript_turn_count": 0,
    "wer_pooled": null,
    "wer_macro": null,
    "cer_pooled": null,
    "cer_macro": null,
    "comments": [{"task_id": "turn-1", "annotator_id": "ui", "comment": "clipped"}],
    "per_annotator": [{"annotator_id": "ui", "annotation_count": 5, "mean_overall_score": 2.4}]
  },
  "notes": ["includes 1 failed turn"]
}`;

const COMPARE_BODY = `{"rows": [
  {"config": "A_ETE", "e2e_mean_ms": 63.25, "e2e_p95_ms": 69, "dominant_stage": "llm", "mean_overall_score": 2.4},
  {"config": "B_ETE", "e2e_mean_ms": 75.0, "e2e_p95_ms": 90, "dominant_stage": "llm", "mean_overall_score": null}
]}`;

const CONFIGS_BODY = `{"configs": [{"config_name": "A_ETE"}, {"config_name": "B_ETE"}]}`;

const STAGE_RECORD = (
  stage: string,
  state: string,
  dispatch: number,
  complete: number | null,
  duration: number | null,
  error: string | null,
): string =>
  JSON.stringify({
    task_id: "t",
    stage_id: stage,
    state,
    input_blob_hashes: [],
    output_blob_hash: null,
    output_text: state === "completed" ? `${stage} out` : null,
    hub_dispatch_ts: dispatch,
    hub_complete_ts: complete,
    worker_reported_duration: duration,
    attempt: error === null ? 1 : 3,
    last_error: error,
    lease: null,
  });

const RECORDS_BODY = `{
  "tasks": [
    {"task_id": "turn-1", "config_name": "A_ETE", "track_id": "sample", "client_capture_ts": 1000,
     "source_blobs": {"audio": "aa"}, "metadata": {"segment_id": "seg-1"}, "state": "completed",
     "stage_records": [
        ${STAGE_RECORD("speech2text", "completed", 1000, 1020, 20, null)},
        ${STAGE_RECORD("llm", "completed", 1020, 1048, 28, null)},
        ${STAGE_RECORD("tts", "completed", 1048, 1060, 12, null)}
     ],
     "failing_stage": null, "submission_seq": 1, "completed_ts": 1060},
    {"task_id": "turn-2", "config_name": "A_ETE", "track_id": "sample", "client_capture_ts": 2000,
     "source_blobs": {"audio": "bb"}, "metadata": {"segment_id": "seg-2"}, "state": "failed",
     "stage_records": [
        ${STAGE_RECORD("speech2text", "completed", 2000, 2020, 20, null)},
        ${STAGE_RECORD("llm", "failed", 2020, null, null, "model exploded")}
     ],
     "failing_stage": "llm", "submission_seq": 2, "completed_ts": null}
  ],
  "annotations": []
}`;

const SAVED_ANNOTATION = JSON.stringify({
  annotation_id: "ann-1",
  task_id: "turn-1",
  annotator_id: "ui",
  overall_score: 3,
  stage_scores: {},
  comment: "",
  reference_transcript: null,
  created_ts: 9000,
});

interface Route {
  body: string;
  status?: number;
}

const realFetch = globalThis.fetch;

function installFetch(routes: Record<string, Route>): string[] {
  const calls: string[] = [];
  globalThis.fetch = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input instanceof Request ? input.url : input);
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const key = `${init?.method ?? "GET"} ${path}`;
    calls.push(key);
    const route = routes[key];
    if (!route) {
      return new Response('{"error": "not_found", "detail": "no such route"}', {
        status: 404,
        headers: { "content-type": "application/json" },
      });
    }
    return new Response(route.body, {
      status: route.status ?? 200,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
  return calls;
}

async function flush(rounds = 10): Promise<void> {
  for (let i = 0; i < rounds; i++) {
    await new Promise((resolve) => setTimeout(resolve, 0));
  }
}

function view(): HTMLElement {
  const root = document.createElement("div");
  document.body.append(root);
  return root;
}

afterEach(() => {
  globalThis.fetch = realFetch;
  document.body.innerHTML = "";
  window.sessionStorage.clear();
});

describe("benchmark view", () => {
  const routes = {
    "GET /configs": { body: CONFIGS_BODY },
    "GET /reports/compare": { body: COMPARE_BODY },
    "GET /reports/A_ETE?format=json": { body: REPORT_BODY },
  };

  it("renders every statistic byte for byte from the responses", async () => {
    installFetch(routes);
    const root = view();
    await renderBenchmark(root, new HubApi(), "A_ETE");
    await flush();

    const reportIndex = indexJson(REPORT_BODY);
    const reportSpans = root.querySelectorAll("section.report [data-raw]");
    expect(reportSpans.length).toBeGreaterThan(20);
    for (const span of reportSpans) {
      const path = span.getAttribute("data-raw") as string;
      expect(span.textContent, path).toBe(reportIndex.get(path));
    }

    const compareIndex = indexJson(COMPARE_BODY);
    const compareSpans = root.querySelectorAll("section.comparison [data-raw]");
    expect(compareSpans.length).toBe(5);
    for (const span of compareSpans) {
      const path = span.getAttribute("data-raw") as string;
      expect(span.textContent, path).toBe(compareIndex.get(path));
    }
  });

  it("keeps trailing-zero floats intact instead of reformatting", async () => {
    installFetch(routes);
    const root = view();
    await renderBenchmark(root, new HubApi(), "A_ETE");
    await flush();

    const byPath = (path: string): string | null =>
      root.querySelector(`[data-raw="${path}"]`)?.textContent ?? null;
    expect(byPath("critical_path_mean_ms")).toBe("60.0");
    expect(byPath("accuracy.mean_overall_score")).toBe("2.4");
    expect(byPath("stages.1.worker.mean_ms")).toBe("28.0");
    expect(byPath("end_to_end.mean_ms")).toBe("63.25");
  });

  it("renders a null comparison score as a placeholder, not a token", async () => {
    installFetch(routes);
    const root = view();
    await renderBenchmark(root, new HubApi(), "A_ETE");
    await flush();

    expect(root.querySelector('[data-raw="rows.1.mean_overall_score"]')).toBeNull();
    const row = root.querySelectorAll("table.compare tr")[2] as HTMLElement;
    expect(row.textContent).toContain("—");
  });

  it("shows the empty state for a config with no completed turns", async () => {
    installFetch({
      "GET /configs": { body: CONFIGS_BODY },
      "GET /reports/compare": { body: COMPARE_BODY },
      "GET /reports/B_ETE?format=json": {
        body: '{"error": "no_matching_turns", "detail": "0 turns"}',
        status: 404,
      },
    });
    const root = view();
    await renderBenchmark(root, new HubApi(), "B_ETE");
    await flush();
    expect(root.querySelector("section.report .empty")?.textContent).toContain(
      "No completed turns for B_ETE",
    );
  });
});

describe("conversation browser", () => {
  const routes = {
    "GET /configs": { body: CONFIGS_BODY },
    "GET /records": { body: RECORDS_BODY },
    "POST /annotations": { body: SAVED_ANNOTATION },
  };

  async function openDrawer(root: HTMLElement, taskId: string): Promise<HTMLElement> {
    const row = root.querySelector(`tr.turn[data-task="${taskId}"]`) as HTMLElement;
    (row.querySelector("button.details") as HTMLButtonElement).click();
    await flush();
    return row.nextElementSibling as HTMLElement;
  }

  it("lists turns with state and failure badges", async () => {
    installFetch(routes);
    const root = view();
    await renderBrowser(root, new HubApi());
    expect(root.querySelectorAll("tr.turn").length).toBe(2);
    expect(root.querySelector('tr[data-task="turn-1"] .state')?.textContent).toBe(
      "completed",
    );
    const failed = root.querySelector('tr[data-task="turn-2"]') as HTMLElement;
    expect(failed.querySelector(".failure-badge")?.textContent).toContain("llm");
  });

  it("drills into a turn and shows the stage waterfall from hub fields", async () => {
    installFetch(routes);
    const root = view();
    await renderBrowser(root, new HubApi());
    const drawer = await openDrawer(root, "turn-1");
    const rows = drawer.querySelectorAll("table.waterfall tr.stage-row");
    expect(rows.length).toBe(3);
    const llm = rows[1] as HTMLElement;
    expect(llm.querySelector('[data-raw="stage.llm.worker_reported_duration"]')?.textContent).toBe("28");
    expect(llm.textContent).toContain("llm out");
  });

  it("keeps submit disabled until an overall score is chosen", async () => {
    installFetch(routes);
    const root = view();
    await renderBrowser(root, new HubApi());
    const drawer = await openDrawer(root, "turn-1");
    const form = drawer.querySelector("form.annotate") as HTMLFormElement;
    const overall = form.querySelector('select[name="overall"]') as HTMLSelectElement;
    const submit = form.querySelector('button[type="submit"]') as HTMLButtonElement;

    expect(submit.disabled).toBe(true);
    overall.value = "3";
    overall.dispatchEvent(new Event("change"));
    expect(submit.disabled).toBe(false);
    overall.value = "";
    overall.dispatchEvent(new Event("change"));
    expect(submit.disabled).toBe(true);
  });

  it("appends the stored annotation and updates the badge on success", async () => {
    const calls = installFetch(routes);
    const root = view();
    await renderBrowser(root, new HubApi());
    const drawer = await openDrawer(root, "turn-1");
    const form = drawer.querySelector("form.annotate") as HTMLFormElement;
    const overall = form.querySelector('select[name="overall"]') as HTMLSelectElement;
    overall.value = "3";
    overall.dispatchEvent(new Event("change"));
    form.dispatchEvent(new Event("submit", { cancelable: true }));
    await flush();

    expect(calls).toContain("POST /annotations");
    const item = drawer.querySelector("li.annotation:not(.pending)") as HTMLElement;
    expect(item.textContent).toContain("scored 3");
    expect(drawer.querySelector("li.pending")).toBeNull();
    const badge = root.querySelector(
      `.annotation-count[data-task="turn-1"]`,
    ) as HTMLElement;
    expect(badge.textContent).toBe("1 scored");
  });

  it("rolls the optimistic row back when the hub rejects", async () => {
    installFetch({
      ...routes,
      "POST /annotations": {
        body: '{"error": "task_not_completed", "detail": "turn-2 is failed"}',
        status: 409,
      },
    });
    const root = view();
    await renderBrowser(root, new HubApi());
    const drawer = await openDrawer(root, "turn-2");
    const form = drawer.querySelector("form.annotate") as HTMLFormElement;
    const overall = form.querySelector('select[name="overall"]') as HTMLSelectElement;
    overall.value = "1";
    overall.dispatchEvent(new Event("change"));
    form.dispatchEvent(new Event("submit", { cancelable: true }));
    await flush();

    expect(drawer.querySelectorAll("li.annotation").length).toBe(0);
    expect(drawer.querySelector(".form-status")?.textContent).toContain(
      "task_not_completed",
    );
  });

  it("shows a retryable banner when the hub wants a token", async () => {
    const calls = installFetch({
      "GET /configs": { body: '{"error": "auth_required", "detail": "no"}', status: 401 },
    });
    const root = view();
    await renderBrowser(root, new HubApi());
    const banner = root.querySelector(".banner.error") as HTMLElement;
    expect(banner.textContent).toContain("bearer token");
    const before = calls.length;
    (banner.querySelector("button.retry") as HTMLButtonElement).click();
    await flush();
    expect(calls.length).toBeGreaterThan(before);
  });
});
