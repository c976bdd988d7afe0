// Contract tests: the console renders recorded service fixtures fully and
// faithfully. Every field of a fixture must surface in the view, and no
// number may be displayed that is absent from the fixture payload (the
// console computes nothing on its own).

import { readFileSync } from "node:fs";
import { join } from "node:path";
import { describe, expect, it } from "vitest";

import {
  esc,
  renderEnrollResult,
  renderError,
  renderIdentifyResult,
  renderStats,
  renderSubject,
} from "./render.js";
import {
  ApiError,
  EnrollResponse,
  IdentifyResponse,
  RecordSummary,
  StatsResponse,
} from "./types.js";

interface Fixture<T> {
  status: number;
  body: T;
}

function fixture<T>(name: string): Fixture<T> {
  const raw = readFileSync(join(__dirname, "..", "fixtures", `${name}.json`), "utf8");
  return JSON.parse(raw) as Fixture<T>;
}

const NUMBER_RE = /-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?/g;

function textOf(html: string): string {
  return html
    .replace(/<[^>]*>/g, " ")
    .replace(/&quot;/g, '"')
    .replace(/&lt;/g, "<")
    .replace(/&gt;/g, ">")
    .replace(/&amp;/g, "&");
}

function leaves(node: unknown, strings: string[], numbers: number[], keys: string[]): void {
  if (typeof node === "number") numbers.push(node);
  else if (typeof node === "string") strings.push(node);
  else if (Array.isArray(node)) node.forEach((v) => leaves(v, strings, numbers, keys));
  else if (node && typeof node === "object") {
    for (const [k, v] of Object.entries(node)) {
      keys.push(k);
      leaves(v, strings, numbers, keys);
    }
  }
}

/** Numeric substrings permitted on screen for a given fixture. */
function allowedNumbers(fix: Fixture<unknown>): Set<string> {
  const strings: string[] = [];
  const numbers: number[] = [];
  const keys: string[] = [];
  leaves(fix.body, strings, numbers, keys);
  const allowed = new Set<string>();
  numbers.forEach((n) => {
    allowed.add(String(n));
    String(n).match(NUMBER_RE)?.forEach((m) => allowed.add(m));
  });
  [...strings, ...keys].forEach((s) =>
    s.match(NUMBER_RE)?.forEach((m) => allowed.add(m)),
  );
  allowed.add(String(fix.status));
  return allowed;
}

function assertNoInventedNumbers(html: string, fix: Fixture<unknown>): void {
  const allowed = allowedNumbers(fix);
  const displayed = textOf(html).match(NUMBER_RE) ?? [];
  for (const d of displayed) {
    expect(allowed, `displayed number ${d} missing from fixture`).toContain(d);
  }
}

function assertAllLeavesRendered(html: string, node: unknown): void {
  // every data value must be on screen; dynamic-map labels (metadata keys,
  // finger codes, timing stages) are asserted view by view below
  const strings: string[] = [];
  const numbers: number[] = [];
  const keys: string[] = [];
  leaves(node, strings, numbers, keys);
  for (const n of numbers) expect(html).toContain(String(n));
  for (const s of strings) expect(html).toContain(esc(s));
}

function assertDynamicKeysRendered(html: string, maps: Record<string, unknown>[]): void {
  for (const m of maps) {
    for (const key of Object.keys(m)) expect(html).toContain(esc(key));
  }
}

// ---------------------------------------------------------------------------

describe("enroll view", () => {
  const fix = fixture<EnrollResponse>("enroll_success");
  const html = renderEnrollResult(fix.body);

  it("renders every field of the recorded response", () => {
    assertAllLeavesRendered(html, fix.body);
    assertDynamicKeysRendered(html, [
      fix.body.record.metadata,
      fix.body.record.fingers,
      fix.body.timings_ms,
    ]);
  });

  it("shows the live flag when the capture passed the spoof gate", () => {
    expect(html).toContain("flag-live");
    expect(html).not.toContain("SPOOF SUSPECTED");
  });

  it("displays no number that is absent from the payload", () => {
    assertNoInventedNumbers(html, fix);
  });
});

describe("identify view", () => {
  const fix = fixture<IdentifyResponse>("identify_success");
  const html = renderIdentifyResult(fix.body);

  it("renders every hit with rank, subject, finger, and score", () => {
    assertAllLeavesRendered(html, fix.body);
    assertDynamicKeysRendered(html, [fix.body.timings_ms]);
    for (const hit of fix.body.hits) {
      expect(html).toContain(`data-subject="${hit.subject_id}"`);
    }
  });

  it("orders rows by the payload rank values", () => {
    const ranks = [...html.matchAll(/<tr>\s*<td>(\d+)<\/td>/g)].map((m) => Number(m[1]));
    expect(ranks).toEqual(fix.body.hits.map((h) => h.rank));
  });

  it("displays no number that is absent from the payload", () => {
    assertNoInventedNumbers(html, fix);
  });
});

describe("subject metadata view", () => {
  const fix = fixture<RecordSummary>("subject");
  const html = renderSubject(fix.body);

  it("renders the metadata document and per-finger stats verbatim", () => {
    assertAllLeavesRendered(html, fix.body);
    assertDynamicKeysRendered(html, [fix.body.metadata, fix.body.fingers]);
  });

  it("displays no number that is absent from the payload", () => {
    assertNoInventedNumbers(html, fix);
  });
});

describe("stats header", () => {
  const fix = fixture<StatsResponse>("stats");
  const html = renderStats(fix.body);

  it("renders all gallery statistics", () => {
    assertAllLeavesRendered(html, fix.body);
    assertNoInventedNumbers(html, fix);
  });
});

describe("error flows", () => {
  it("duplicate enrollment shows the duplicate_subject code", () => {
    const fix = fixture<ApiError>("enroll_duplicate");
    const html = renderError(fix.status, fix.body);
    expect(html).toContain("duplicate_subject");
    expect(html).toContain(esc(fix.body.message));
    assertNoInventedNumbers(html, fix);
  });

  it("spoof rejection is prominent and carries the per-view scores", () => {
    const fix = fixture<ApiError>("enroll_spoof");
    const html = renderError(fix.status, fix.body);
    expect(html).toContain("spoof_detected");
    expect(html).toContain("banner-spoof");
    expect(html).toContain("SPOOF SUSPECTED");
    expect(html).toContain(String(fix.body.spoof!.per_view.direct));
    expect(html).toContain(String(fix.body.spoof!.per_view.ftir));
    expect(html).toContain(String(fix.body.spoof!.fused));
    assertNoInventedNumbers(html, fix);
  });

  it("spoof probe suppresses search results entirely", () => {
    const fix = fixture<ApiError>("identify_spoof");
    const html = renderError(fix.status, fix.body);
    expect(html).not.toContain("<table");
    expect(html).toContain("spoof_detected");
    assertNoInventedNumbers(html, fix);
  });

  it("empty gallery search shows guidance", () => {
    const fix = fixture<ApiError>("identify_empty");
    const html = renderError(fix.status, fix.body);
    expect(html).toContain("empty_gallery");
    expect(html).toContain("Enroll a subject first");
    assertNoInventedNumbers(html, fix);
  });

  it("unknown subject shows the not_found code", () => {
    const fix = fixture<ApiError>("subject_missing");
    const html = renderError(fix.status, fix.body);
    expect(html).toContain("not_found");
    assertNoInventedNumbers(html, fix);
  });
});
