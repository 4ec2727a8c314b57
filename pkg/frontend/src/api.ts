// REST client for the hub. The bearer token lives in session storage so
// a reload keeps it but a new browser session asks again.

import { RawDoc } from "./rawjson.js";

const TOKEN_KEY = "turnbench.token";

export class AuthRequired extends Error {}

export class HubUnreachable extends Error {}

export class HubApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

export interface StageRecordDoc {
  stage_id: string;
  state: string;
  input_blob_hashes: string[];
  output_blob_hash: string | null;
  output_text: string | null;
  hub_dispatch_ts: number | null;
  hub_complete_ts: number | null;
  worker_reported_duration: number | null;
  attempt: number;
  last_error: string | null;
}

export interface TaskDoc {
  task_id: string;
  config_name: string;
  track_id: string;
  client_capture_ts: number;
  metadata: Record<string, string>;
  state: string;
  stage_records: StageRecordDoc[];
  failing_stage: string | null;
  completed_ts: number | null;
}

export interface AnnotationDoc {
  annotation_id: string;
  task_id: string;
  annotator_id: string;
  overall_score: number;
  stage_scores: Record<string, number>;
  comment: string;
  reference_transcript: string | null;
  created_ts: number;
}

export interface RecordsDoc {
  tasks: TaskDoc[];
  annotations: AnnotationDoc[];
}

export interface AnnotationBody {
  task_id: string;
  annotator_id: string;
  overall_score: number;
  stage_scores?: Record<string, number>;
  comment?: string;
  reference_transcript?: string;
}

export class HubApi {
  constructor(readonly base: string = "") {}

  get token(): string {
    return window.sessionStorage.getItem(TOKEN_KEY) ?? "";
  }

  set token(value: string) {
    if (value) window.sessionStorage.setItem(TOKEN_KEY, value);
    else window.sessionStorage.removeItem(TOKEN_KEY);
  }

  private async go(path: string, init?: RequestInit): Promise<Response> {
    const headers = new Headers(init?.headers);
    if (this.token) headers.set("authorization", `Bearer ${this.token}`);
    let response: Response;
    try {
      response = await fetch(this.base + path, { ...init, headers });
    } catch (error) {
      throw new HubUnreachable(String(error));
    }
    if (response.status === 401) throw new AuthRequired("bearer token required");
    if (!response.ok) {
      let code = "http_error";
      let detail = `status ${response.status}`;
      try {
        const doc = (await response.json()) as { error?: string; detail?: string };
        code = doc.error ?? code;
        detail = doc.detail ?? detail;
      } catch {
        // non-JSON error body; keep the defaults
      }
      throw new HubApiError(response.status, code, detail);
    }
    return response;
  }

  private async json<T>(path: string): Promise<T> {
    return (await this.go(path)).json() as Promise<T>;
  }

  async configNames(): Promise<string[]> {
    const doc = await this.json<{ configs: { config_name: string }[] }>("/configs");
    return doc.configs.map((c) => c.config_name);
  }

  async records(filter: { config_name?: string; track_id?: string }): Promise<RecordsDoc> {
    const params = new URLSearchParams();
    if (filter.config_name) params.set("config_name", filter.config_name);
    if (filter.track_id) params.set("track_id", filter.track_id);
    const query = params.toString();
    return this.json<RecordsDoc>(`/records${query ? `?${query}` : ""}`);
  }

  async report(configName: string): Promise<RawDoc> {
    const response = await this.go(
      `/reports/${encodeURIComponent(configName)}?format=json`,
    );
    return new RawDoc(await response.text());
  }

  async compare(configNames?: string[]): Promise<RawDoc> {
    const suffix = configNames?.length
      ? `?configs=${configNames.map(encodeURIComponent).join(",")}`
      : "";
    const response = await this.go(`/reports/compare${suffix}`);
    return new RawDoc(await response.text());
  }

  async annotate(body: AnnotationBody): Promise<AnnotationDoc> {
    const response = await this.go("/annotations", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    return (await response.json()) as AnnotationDoc;
  }
}
