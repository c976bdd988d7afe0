// Thin fetch client for the recognition service. No recognition logic
// lives here: requests go out, (status, body) pairs come back.

import {
  ApiResult,
  EnrollResponse,
  IdentifyResponse,
  RecordSummary,
  StatsResponse,
} from "./types.js";

export interface EnrollForm {
  subjectId: string;
  finger: number;
  direct: File;
  ftir: File;
  metadata?: Record<string, unknown>;
}

export class ConsoleApi {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  private async send<T>(path: string, init?: RequestInit): Promise<ApiResult<T>> {
    const response = await fetch(this.url(path), init);
    const body = await response.json();
    return response.ok
      ? { ok: true, status: response.status, body }
      : { ok: false, status: response.status, body };
  }

  async enroll(form: EnrollForm): Promise<ApiResult<EnrollResponse>> {
    const data = new FormData();
    data.append("subject_id", form.subjectId);
    data.append("finger", String(form.finger));
    data.append("direct", form.direct);
    data.append("ftir", form.ftir);
    if (form.metadata !== undefined) {
      data.append("metadata", JSON.stringify(form.metadata));
    }
    return this.send("/api/enroll", { method: "POST", body: data });
  }

  async identify(
    direct: File,
    ftir: File,
    topN: number,
  ): Promise<ApiResult<IdentifyResponse>> {
    const data = new FormData();
    data.append("direct", direct);
    data.append("ftir", ftir);
    data.append("top_n", String(topN));
    return this.send("/api/identify", { method: "POST", body: data });
  }

  async subject(id: string): Promise<ApiResult<RecordSummary>> {
    return this.send(`/api/subjects/${encodeURIComponent(id)}`);
  }

  async stats(): Promise<ApiResult<StatsResponse>> {
    return this.send("/api/stats");
  }

  async health(): Promise<ApiResult<{ status: string }>> {
    return this.send("/api/health");
  }
}
