// Pure view renderers: service JSON in, HTML string out.
//
// Contract: every number shown comes straight from a response payload,
// formatted with String() so it round-trips the JSON value exactly. The
// renderers never aggregate, count, or otherwise invent figures; the
// contract tests enforce this against recorded fixtures.

import {
  ApiError,
  EnrollResponse,
  IdentifyResponse,
  RecordSummary,
  SpoofReport,
  StatsResponse,
} from "./types.js";

export function esc(value: string): string {
  return value
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function num(value: number): string {
  return String(value);
}

function renderValue(value: unknown): string {
  if (value === null || value === undefined) return "<em>none</em>";
  if (typeof value === "number") return num(value);
  if (typeof value === "boolean") return value ? "yes" : "no";
  if (typeof value === "string") return esc(value);
  if (Array.isArray(value)) {
    return `<ul class="plain">${value
      .map((v) => `<li>${renderValue(v)}</li>`)
      .join("")}</ul>`;
  }
  return renderObject(value as Record<string, unknown>);
}

function renderObject(obj: Record<string, unknown>): string {
  const rows = Object.entries(obj)
    .map(([k, v]) => `<dt>${esc(k)}</dt><dd>${renderValue(v)}</dd>`)
    .join("");
  return `<dl class="kv">${rows}</dl>`;
}

export function renderSpoof(spoof: SpoofReport): string {
  const verdict = spoof.is_spoof
    ? `<span class="flag flag-spoof">SPOOF SUSPECTED</span>`
    : `<span class="flag flag-live">live</span>`;
  return `
    <div class="spoof-report">
      ${verdict}
      <dl class="kv">
        <dt>direct view</dt><dd>${num(spoof.per_view.direct)}</dd>
        <dt>FTIR view</dt><dd>${num(spoof.per_view.ftir)}</dd>
        <dt>fused</dt><dd>${num(spoof.fused)}</dd>
        <dt>threshold</dt><dd>${num(spoof.threshold)}</dd>
      </dl>
    </div>`;
}

export function renderTimings(timings: Record<string, number>): string {
  const cells = Object.entries(timings)
    .map(([stage, ms]) => `<dt>${esc(stage)}</dt><dd>${num(ms)} ms</dd>`)
    .join("");
  return `<details class="timings"><summary>stage timings</summary><dl class="kv">${cells}</dl></details>`;
}

function renderFingers(fingers: Record<string, { minutiae: number; quality: number }>): string {
  const rows = Object.entries(fingers)
    .map(
      ([code, f]) =>
        `<tr><td>${esc(code)}</td><td>${num(f.minutiae)}</td><td>${num(f.quality)}</td></tr>`,
    )
    .join("");
  return `
    <table class="grid">
      <thead><tr><th>finger</th><th>minutiae</th><th>quality</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>`;
}

export function renderSubject(record: RecordSummary): string {
  return `
    <article class="card subject-card">
      <header><strong>${esc(record.subject_id)}</strong></header>
      <p class="muted">enrolled ${esc(record.enrolled_at)}</p>
      <section class="metadata">${renderObject(record.metadata)}</section>
      ${renderFingers(record.fingers)}
    </article>`;
}

export function renderEnrollResult(body: EnrollResponse): string {
  return `
    <div class="banner banner-ok">Enrollment confirmed for
      <strong>${esc(body.record.subject_id)}</strong></div>
    ${renderSubject(body.record)}
    ${renderSpoof(body.spoof)}
    ${renderTimings(body.timings_ms)}`;
}

export function renderIdentifyResult(body: IdentifyResponse): string {
  const rows = body.hits
    .map(
      (h) => `
      <tr>
        <td>${num(h.rank)}</td>
        <td><a href="#" class="subject-link" data-subject="${esc(h.subject_id)}">${esc(h.subject_id)}</a></td>
        <td>${num(h.finger)}</td>
        <td>${num(h.score)}</td>
      </tr>`,
    )
    .join("");
  return `
    <p>probe minutiae: ${num(body.probe_minutiae)}</p>
    <table class="grid hits">
      <thead><tr><th>rank</th><th>subject</th><th>finger</th><th>score</th></tr></thead>
      <tbody>${rows}</tbody>
    </table>
    ${renderSpoof(body.spoof)}
    ${renderTimings(body.timings_ms)}`;
}

export function renderStats(body: StatsResponse): string {
  return `
    <dl class="kv stats">
      <dt>enrolled subjects</dt><dd>${num(body.size)}</dd>
      <dt>capacity</dt><dd>${num(body.capacity)}</dd>
      <dt>index version</dt><dd>${num(body.index_version)}</dd>
      <dt>verify threshold</dt><dd>${num(body.thresholds.verify)}</dd>
      <dt>identify threshold</dt><dd>${num(body.thresholds.identify)}</dd>
    </dl>`;
}

const GUIDANCE: Record<string, string> = {
  empty_gallery: "The gallery has no enrolled subjects yet. Enroll a subject first.",
  duplicate_subject: "That subject id is already enrolled; choose a different id.",
  not_found: "No record with that id exists in the gallery.",
  spoof_detected: "The capture was flagged as a presentation attack and was not processed.",
};

export function renderError(status: number, err: ApiError): string {
  const spoofPanel = err.spoof ? renderSpoof(err.spoof) : "";
  const hint = GUIDANCE[err.code]
    ? `<p class="hint">${esc(GUIDANCE[err.code])}</p>`
    : "";
  const severity = err.code === "spoof_detected" ? "banner-spoof" : "banner-error";
  return `
    <div class="banner ${severity}">
      <code class="error-code">${esc(err.code)}</code>
      <span class="status">${num(status)}</span>
      <p>${esc(err.message)}</p>
      ${hint}
    </div>
    ${spoofPanel}`;
}

/** Retryable network-level failure (no response at all). */
export function renderNetworkFailure(detail: string): string {
  return `
    <div class="banner banner-error">
      <code class="error-code">network_error</code>
      <p>Could not reach the service: ${esc(detail)}</p>
      <p class="hint">Check the service URL and retry.</p>
    </div>`;
}
