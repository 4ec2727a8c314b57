// Conversation browser: turns grouped by track and config, a per-turn
// stage waterfall, and the annotation form. Every number shown comes
// straight out of a hub response field.

import {
  AnnotationDoc,
  AuthRequired,
  HubApi,
  HubApiError,
  HubUnreachable,
  RecordsDoc,
  StageRecordDoc,
  TaskDoc,
} from "./api.js";
import { clear, el, rawSpan } from "./dom.js";

export interface BrowserFilter {
  config_name?: string;
  track_id?: string;
}

const SCORES = ["0", "1", "2", "3", "4", "5"];

export async function renderBrowser(
  root: HTMLElement,
  api: HubApi,
  filter: BrowserFilter = {},
): Promise<void> {
  clear(root);
  let configNames: string[];
  let records: RecordsDoc;
  try {
    configNames = await api.configNames();
    records = await api.records(filter);
  } catch (error) {
    root.append(connectionBanner(error, () => renderBrowser(root, api, filter)));
    return;
  }

  root.append(toolbar(root, api, filter, configNames));

  const accuracy = el("div", { class: "accuracy-strip" });
  if (filter.config_name) {
    root.append(accuracy);
    await refreshAccuracy(accuracy, api, filter.config_name);
  }

  const annotationsByTask = groupAnnotations(records.annotations);
  const groups = groupTasks(records.tasks);
  if (groups.size === 0) {
    root.append(el("p", { class: "empty" }, ["No turns recorded yet."]));
    return;
  }
  for (const [label, tasks] of groups) {
    root.append(el("h3", {}, [label]));
    const table = el("table", { class: "turns" });
    table.append(
      el("tr", {}, [
        el("th", {}, ["turn"]),
        el("th", {}, ["segment"]),
        el("th", {}, ["state"]),
        el("th", {}, ["annotations"]),
        el("th", {}, [""]),
      ]),
    );
    for (const task of tasks) {
      table.append(
        turnRow(api, task, annotationsByTask.get(task.task_id) ?? [], () =>
          filter.config_name
            ? refreshAccuracy(accuracy, api, filter.config_name)
            : Promise.resolve(),
        ),
      );
    }
    root.append(table);
  }
}

function toolbar(
  root: HTMLElement,
  api: HubApi,
  filter: BrowserFilter,
  configNames: string[],
): HTMLElement {
  const select = el("select", { class: "config-filter" });
  select.append(el("option", { value: "" }, ["all configs"]));
  for (const name of configNames) {
    const option = el("option", { value: name }, [name]);
    if (name === filter.config_name) option.selected = true;
    select.append(option);
  }
  select.addEventListener("change", () => {
    void renderBrowser(root, api, {
      ...filter,
      config_name: select.value || undefined,
    });
  });
  const refresh = el("button", { class: "refresh" }, ["refresh"]);
  refresh.addEventListener("click", () => void renderBrowser(root, api, filter));
  return el("div", { class: "toolbar" }, [select, refresh]);
}

async function refreshAccuracy(
  panel: HTMLElement,
  api: HubApi,
  configName: string,
): Promise<void> {
  clear(panel);
  let report;
  try {
    report = await api.report(configName);
  } catch (error) {
    if (error instanceof HubApiError && error.status === 404) {
      panel.append(el("span", { class: "empty" }, ["no completed turns yet"]));
      return;
    }
    panel.append(el("span", { class: "error" }, [String(error)]));
    return;
  }
  panel.append(
    el("span", {}, ["annotations: ", rawSpan("accuracy.annotation_count", report.show("accuracy.annotation_count"))]),
  );
  const mean = report.token("accuracy.mean_overall_score");
  panel.append(
    el("span", {}, [
      " · mean score: ",
      mean === "null"
        ? el("span", { class: "placeholder" }, ["—"])
        : rawSpan("accuracy.mean_overall_score", mean),
    ]),
  );
}

function groupTasks(tasks: TaskDoc[]): Map<string, TaskDoc[]> {
  const groups = new Map<string, TaskDoc[]>();
  for (const task of tasks) {
    const key = `${task.track_id || "(no track)"} · ${task.config_name}`;
    const bucket = groups.get(key);
    if (bucket) bucket.push(task);
    else groups.set(key, [task]);
  }
  return groups;
}

function groupAnnotations(annotations: AnnotationDoc[]): Map<string, AnnotationDoc[]> {
  const byTask = new Map<string, AnnotationDoc[]>();
  for (const annotation of annotations) {
    const bucket = byTask.get(annotation.task_id);
    if (bucket) bucket.push(annotation);
    else byTask.set(annotation.task_id, [annotation]);
  }
  return byTask;
}

function turnRow(
  api: HubApi,
  task: TaskDoc,
  annotations: AnnotationDoc[],
  onAnnotated: () => Promise<void>,
): HTMLTableRowElement {
  const badge = el("span", { class: `state state-${task.state}` }, [task.state]);
  const cellState = el("td", {}, [badge]);
  if (task.state === "failed" && task.failing_stage) {
    cellState.append(
      el("span", { class: "failure-badge" }, [` failed at ${task.failing_stage}`]),
    );
  }
  const annotationBadge = el(
    "span",
    { class: "annotation-count", "data-task": task.task_id },
    [annotations.length ? `${annotations.length} scored` : "none"],
  );
  const details = el("button", { class: "details" }, ["details"]);
  const row = el("tr", { class: "turn", "data-task": task.task_id }, [
    el("td", {}, [task.task_id]),
    el("td", {}, [task.metadata["segment_id"] ?? ""]),
    cellState,
    el("td", {}, [annotationBadge]),
    el("td", {}, [details]),
  ]);
  let drawer: HTMLTableRowElement | null = null;
  details.addEventListener("click", () => {
    if (drawer) {
      drawer.remove();
      drawer = null;
      return;
    }
    drawer = el("tr", { class: "drawer" }, [
      el("td", { colspan: "5" }, [
        drilldown(api, task, annotations, annotationBadge, onAnnotated),
      ]),
    ]);
    row.after(drawer);
  });
  return row;
}

function drilldown(
  api: HubApi,
  task: TaskDoc,
  annotations: AnnotationDoc[],
  annotationBadge: HTMLElement,
  onAnnotated: () => Promise<void>,
): HTMLElement {
  const box = el("div", { class: "drilldown" });
  box.append(el("h4", {}, [`stage waterfall · ${task.task_id}`]));
  box.append(waterfall(task.stage_records));

  const list = el("ul", { class: "annotations" });
  for (const annotation of annotations) list.append(annotationItem(annotation));
  box.append(el("h4", {}, ["annotations"]));
  box.append(list);
  box.append(
    annotationForm(api, task, list, annotationBadge, annotations, onAnnotated),
  );
  return box;
}

function waterfall(records: StageRecordDoc[]): HTMLElement {
  const dispatched = records
    .map((r) => r.hub_dispatch_ts)
    .filter((ts): ts is number => ts !== null);
  const completed = records
    .map((r) => r.hub_complete_ts)
    .filter((ts): ts is number => ts !== null);
  const start = dispatched.length ? Math.min(...dispatched) : 0;
  const end = completed.length ? Math.max(...completed) : start + 1;
  const span = Math.max(end - start, 1);

  const table = el("table", { class: "waterfall" });
  table.append(
    el("tr", {}, [
      el("th", {}, ["stage"]),
      el("th", {}, ["state"]),
      el("th", {}, ["attempt"]),
      el("th", {}, ["worker ms"]),
      el("th", {}, ["timeline"]),
      el("th", {}, ["output"]),
    ]),
  );
  for (const record of records) {
    // Bar geometry is layout; the printed number is the hub's field.
    const left =
      record.hub_dispatch_ts === null
        ? 0
        : ((record.hub_dispatch_ts - start) / span) * 100;
    const width =
      record.hub_dispatch_ts === null || record.hub_complete_ts === null
        ? 0
        : Math.max(
            ((record.hub_complete_ts - record.hub_dispatch_ts) / span) * 100,
            1,
          );
    const bar = el("div", {
      class: "bar",
      style: `margin-left:${left}%;width:${width}%`,
    });
    const duration =
      record.worker_reported_duration === null
        ? el("span", { class: "placeholder" }, ["—"])
        : rawSpan(
            `stage.${record.stage_id}.worker_reported_duration`,
            String(record.worker_reported_duration),
          );
    const output = record.output_text
      ? el("span", { class: "output-text" }, [record.output_text])
      : record.output_blob_hash
        ? el("code", {}, [`blob ${record.output_blob_hash.slice(0, 12)}…`])
        : el("span", { class: "placeholder" }, ["—"]);
    const cells = el("tr", { class: `stage-row state-${record.state}` }, [
      el("td", {}, [record.stage_id]),
      el("td", {}, [record.state]),
      el("td", {}, [String(record.attempt)]),
      el("td", {}, [duration]),
      el("td", { class: "timeline" }, [bar]),
      el("td", {}, [output]),
    ]);
    if (record.last_error) {
      cells.append(el("td", { class: "error" }, [record.last_error]));
    }
    table.append(cells);
  }
  return table;
}

function annotationItem(annotation: AnnotationDoc): HTMLLIElement {
  return el("li", { class: "annotation", "data-id": annotation.annotation_id }, [
    el("b", {}, [annotation.annotator_id]),
    ` scored ${annotation.overall_score}`,
    annotation.comment ? ` — ${annotation.comment}` : "",
  ]);
}

function annotationForm(
  api: HubApi,
  task: TaskDoc,
  list: HTMLElement,
  annotationBadge: HTMLElement,
  annotations: AnnotationDoc[],
  onAnnotated: () => Promise<void>,
): HTMLElement {
  const form = el("form", { class: "annotate" });
  const annotator = el("input", {
    name: "annotator",
    value: "ui",
    placeholder: "annotator id",
  });
  // The select is the range constraint: only 0-5 exist as options.
  const overall = el("select", { name: "overall" });
  overall.append(el("option", { value: "" }, ["score…"]));
  for (const score of SCORES) overall.append(el("option", { value: score }, [score]));

  const stageSelects = new Map<string, HTMLSelectElement>();
  const perStage = el("div", { class: "per-stage" });
  for (const record of task.stage_records) {
    const select = el("select", { name: `stage-${record.stage_id}` });
    select.append(el("option", { value: "" }, ["—"]));
    for (const score of SCORES) select.append(el("option", { value: score }, [score]));
    stageSelects.set(record.stage_id, select);
    perStage.append(el("label", {}, [`${record.stage_id} `, select]));
  }

  const comment = el("textarea", { name: "comment", placeholder: "comment" });
  const transcript = el("textarea", {
    name: "reference",
    placeholder: "reference transcript",
  });
  const submit = el("button", { type: "submit", disabled: "" }, ["save annotation"]);
  const status = el("span", { class: "form-status" });

  overall.addEventListener("change", () => {
    // Submit stays disabled until an overall score is chosen.
    if (overall.value === "") submit.setAttribute("disabled", "");
    else submit.removeAttribute("disabled");
  });

  form.append(
    el("label", {}, ["annotator ", annotator]),
    el("label", {}, ["overall ", overall]),
    perStage,
    el("label", {}, ["comment ", comment]),
    el("label", {}, ["reference ", transcript]),
    submit,
    status,
  );

  form.addEventListener("submit", (event) => {
    event.preventDefault();
    if (overall.value === "") return;
    const body = {
      task_id: task.task_id,
      annotator_id: annotator.value || "ui",
      overall_score: Number(overall.value),
      stage_scores: Object.fromEntries(
        [...stageSelects.entries()]
          .filter(([, select]) => select.value !== "")
          .map(([stage, select]): [string, number] => [stage, Number(select.value)]),
      ),
      comment: comment.value,
      reference_transcript: transcript.value || undefined,
    };
    // Optimistic row; rolled back if the hub rejects.
    const pending = el("li", { class: "annotation pending" }, [
      el("b", {}, [body.annotator_id]),
      ` scored ${body.overall_score} (saving…)`,
    ]);
    list.append(pending);
    status.textContent = "";
    void api
      .annotate(body)
      .then(async (saved) => {
        pending.replaceWith(annotationItem(saved));
        annotations.push(saved);
        annotationBadge.textContent = `${annotations.length} scored`;
        overall.value = "";
        submit.setAttribute("disabled", "");
        await onAnnotated();
      })
      .catch((error) => {
        pending.remove();
        status.textContent =
          error instanceof HubApiError ? `${error.code}: ${error.detail}` : String(error);
        status.className = "form-status error";
      });
  });
  return form;
}

export function connectionBanner(error: unknown, retry: () => void): HTMLElement {
  const message =
    error instanceof AuthRequired
      ? "The hub wants a bearer token; set one in the header field."
      : error instanceof HubUnreachable
        ? `Hub unreachable: ${error.message}`
        : String(error);
  const button = el("button", { class: "retry" }, ["retry"]);
  button.addEventListener("click", retry);
  return el("div", { class: "banner error" }, [message, " ", button]);
}
