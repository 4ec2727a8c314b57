// Benchmark view: per-config report plus the cross-config comparison
// table. All statistics are rendered as raw tokens from the report
// endpoints; this module computes bar widths and nothing else.

import { HubApi, HubApiError } from "./api.js";
import { connectionBanner } from "./browser.js";
import { clear, el, rawSpan } from "./dom.js";
import { RawDoc } from "./rawjson.js";

const E2E_FIELDS = [
  "count",
  "mean_ms",
  "stddev_ms",
  "min_ms",
  "max_ms",
  "p50_ms",
  "p95_ms",
] as const;

export async function renderBenchmark(
  root: HTMLElement,
  api: HubApi,
  configName?: string,
): Promise<void> {
  clear(root);
  let configNames: string[];
  try {
    configNames = await api.configNames();
  } catch (error) {
    root.append(connectionBanner(error, () => renderBenchmark(root, api, configName)));
    return;
  }
  const chosen = configName ?? configNames[0];

  const select = el("select", { class: "config-pick" });
  for (const name of configNames) {
    const option = el("option", { value: name }, [name]);
    if (name === chosen) option.selected = true;
    select.append(option);
  }
  select.addEventListener("change", () => {
    void renderBenchmark(root, api, select.value);
  });
  const refresh = el("button", { class: "refresh" }, ["refresh"]);
  refresh.addEventListener("click", () => void renderBenchmark(root, api, chosen));
  root.append(el("div", { class: "toolbar" }, [select, refresh]));

  root.append(await comparisonSection(api));
  if (chosen !== undefined) root.append(await reportSection(api, chosen));
}

async function comparisonSection(api: HubApi): Promise<HTMLElement> {
  const section = el("section", { class: "comparison" });
  section.append(el("h3", {}, ["configs compared"]));
  let doc: RawDoc;
  try {
    doc = await api.compare();
  } catch (error) {
    // Fewer than two configs with completed turns; not an error state
    // worth a banner.
    section.append(
      el("p", { class: "empty" }, [
        error instanceof HubApiError
          ? "Comparison needs completed turns under at least two configs."
          : String(error),
      ]),
    );
    return section;
  }
  const rows = (doc.doc as { rows: unknown[] }).rows;
  const table = el("table", { class: "compare" });
  table.append(
    el("tr", {}, [
      el("th", {}, ["config"]),
      el("th", {}, ["e2e mean ms"]),
      el("th", {}, ["e2e p95 ms"]),
      el("th", {}, ["dominant stage"]),
      el("th", {}, ["mean score"]),
    ]),
  );
  for (let i = 0; i < rows.length; i++) {
    table.append(
      el("tr", {}, [
        el("td", {}, [doc.show(`rows.${i}.config`)]),
        el("td", {}, [rawSpan(`rows.${i}.e2e_mean_ms`, doc.token(`rows.${i}.e2e_mean_ms`))]),
        el("td", {}, [rawSpan(`rows.${i}.e2e_p95_ms`, doc.token(`rows.${i}.e2e_p95_ms`))]),
        el("td", {}, [doc.show(`rows.${i}.dominant_stage`)]),
        el("td", {}, [tokenOrDash(doc, `rows.${i}.mean_overall_score`)]),
      ]),
    );
  }
  section.append(el("div", { class: "scroll" }, [table]));
  return section;
}

async function reportSection(api: HubApi, configName: string): Promise<HTMLElement> {
  const section = el("section", { class: "report" });
  section.append(el("h3", {}, [configName]));
  let report: RawDoc;
  try {
    report = await api.report(configName);
  } catch (error) {
    if (error instanceof HubApiError && error.code === "no_matching_turns") {
      section.append(
        el("p", { class: "empty" }, [
          `No completed turns for ${configName} yet. Run a replay against it, then refresh.`,
        ]),
      );
      return section;
    }
    section.append(el("p", { class: "error" }, [String(error)]));
    return section;
  }

  section.append(headline(report));
  section.append(e2eBlock(report));
  section.append(stageBars(report));
  section.append(accuracyPanel(report));

  const notes = (report.doc as { notes: string[] }).notes;
  if (notes.length) {
    const list = el("ul", { class: "notes" });
    for (const note of notes) list.append(el("li", {}, [note]));
    section.append(el("h4", {}, ["notes"]));
    section.append(list);
  }
  return section;
}

function headline(report: RawDoc): HTMLElement {
  const path = (report.doc as { critical_path: string[] }).critical_path;
  return el("dl", { class: "headline" }, [
    el("dt", {}, ["turns"]),
    el("dd", {}, [rawSpan("turn_count", report.token("turn_count"))]),
    el("dt", {}, ["critical path"]),
    el("dd", {}, [path.join(" → ")]),
    el("dt", {}, ["critical path mean ms"]),
    el("dd", {}, [
      rawSpan("critical_path_mean_ms", report.token("critical_path_mean_ms")),
    ]),
    el("dt", {}, ["scheduling overhead mean ms"]),
    el("dd", {}, [rawSpan("overhead_mean_ms", report.token("overhead_mean_ms"))]),
    el("dt", {}, ["generated"]),
    el("dd", {}, [rawSpan("generated_ts", report.token("generated_ts"))]),
  ]);
}

function e2eBlock(report: RawDoc): HTMLElement {
  const table = el("table", { class: "e2e" });
  const head = el("tr");
  const cells = el("tr");
  for (const field of E2E_FIELDS) {
    head.append(el("th", {}, [field.replace(/_ms$/, "")]));
    cells.append(
      el("td", {}, [
        rawSpan(`end_to_end.${field}`, report.token(`end_to_end.${field}`)),
      ]),
    );
  }
  table.append(head, cells);
  return el("section", { class: "e2e-block" }, [
    el("h4", {}, ["end to end latency (ms)"]),
    el("div", { class: "scroll" }, [table]),
  ]);
}

function stageBars(report: RawDoc): HTMLElement {
  const doc = report.doc as {
    critical_path: string[];
    stages: { stage_id: string; kind: string; worker: { mean_ms: number } }[];
  };
  const onPath = new Set(doc.critical_path);
  const maxMean = Math.max(...doc.stages.map((s) => s.worker.mean_ms), 1);
  const box = el("section", { class: "stage-bars" }, [
    el("h4", {}, ["per stage worker latency"]),
  ]);
  for (let i = 0; i < doc.stages.length; i++) {
    const stage = doc.stages[i];
    if (!stage) continue;
    // Width is proportional layout; the label carries the raw value.
    const width = Math.max((stage.worker.mean_ms / maxMean) * 100, 1);
    box.append(
      el(
        "div",
        {
          class: onPath.has(stage.stage_id) ? "stage on-path" : "stage",
          "data-stage": stage.stage_id,
        },
        [
          el("span", { class: "stage-name" }, [`${stage.stage_id} (${stage.kind})`]),
          el("div", { class: "bar", style: `width:${width}%` }),
          el("span", { class: "stage-mean" }, [
            "mean ",
            rawSpan(
              `stages.${i}.worker.mean_ms`,
              report.token(`stages.${i}.worker.mean_ms`),
            ),
            " · p95 ",
            rawSpan(
              `stages.${i}.worker.p95_ms`,
              report.token(`stages.${i}.worker.p95_ms`),
            ),
            " · overhead ",
            rawSpan(
              `stages.${i}.overhead.mean_ms`,
              report.token(`stages.${i}.overhead.mean_ms`),
            ),
          ]),
        ],
      ),
    );
  }
  return box;
}

function accuracyPanel(report: RawDoc): HTMLElement {
  const acc = (report.doc as {
    accuracy: {
      per_stage_mean_scores: Record<string, number>;
      per_annotator: { annotator_id: string }[];
      comments: { task_id: string; annotator_id: string; comment: string }[];
    };
  }).accuracy;
  const box = el("section", { class: "accuracy" }, [el("h4", {}, ["accuracy"])]);

  box.append(
    el("p", { class: "score-headline" }, [
      "mean overall score ",
      tokenOrDash(report, "accuracy.mean_overall_score"),
      " across ",
      rawSpan("accuracy.annotation_count", report.token("accuracy.annotation_count")),
      " annotations",
    ]),
  );

  const perStage = Object.keys(acc.per_stage_mean_scores);
  if (perStage.length) {
    const list = el("ul", { class: "per-stage-scores" });
    for (const stage of perStage) {
      list.append(
        el("li", {}, [
          `${stage}: `,
          rawSpan(
            `accuracy.per_stage_mean_scores.${stage}`,
            report.token(`accuracy.per_stage_mean_scores.${stage}`),
          ),
        ]),
      );
    }
    box.append(list);
  }

  box.append(
    el("p", { class: "transcripts" }, [
      "reference transcripts: ",
      rawSpan(
        "accuracy.transcript_turn_count",
        report.token("accuracy.transcript_turn_count"),
      ),
      " · WER pooled ",
      tokenOrDash(report, "accuracy.wer_pooled"),
      " / macro ",
      tokenOrDash(report, "accuracy.wer_macro"),
      " · CER pooled ",
      tokenOrDash(report, "accuracy.cer_pooled"),
      " / macro ",
      tokenOrDash(report, "accuracy.cer_macro"),
    ]),
  );

  if (acc.per_annotator.length) {
    const table = el("table", { class: "annotators" });
    table.append(
      el("tr", {}, [
        el("th", {}, ["annotator"]),
        el("th", {}, ["annotations"]),
        el("th", {}, ["mean score"]),
      ]),
    );
    for (let i = 0; i < acc.per_annotator.length; i++) {
      table.append(
        el("tr", {}, [
          el("td", {}, [report.show(`accuracy.per_annotator.${i}.annotator_id`)]),
          el("td", {}, [
            rawSpan(
              `accuracy.per_annotator.${i}.annotation_count`,
              report.token(`accuracy.per_annotator.${i}.annotation_count`),
            ),
          ]),
          el("td", {}, [
            tokenOrDash(report, `accuracy.per_annotator.${i}.mean_overall_score`),
          ]),
        ]),
      );
    }
    box.append(table);
  }

  if (acc.comments.length) {
    const list = el("ul", { class: "comments" });
    for (const comment of acc.comments) {
      list.append(
        el("li", {}, [
          el("b", {}, [comment.annotator_id]),
          ` on ${comment.task_id}: ${comment.comment}`,
        ]),
      );
    }
    box.append(el("h5", {}, ["comments"]));
    box.append(list);
  }
  return box;
}

function tokenOrDash(doc: RawDoc, path: string): HTMLElement {
  if (!doc.has(path)) return el("span", { class: "placeholder" }, ["—"]);
  const token = doc.token(path);
  if (token === "null") return el("span", { class: "placeholder" }, ["—"]);
  return rawSpan(path, token);
}
