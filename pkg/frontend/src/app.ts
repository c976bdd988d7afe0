// DOM wiring for the operator console. One operation is in flight at a
// time; submissions made while busy are queued so operator feedback stays
// unambiguous.

import { ConsoleApi } from "./api.js";
import {
  renderEnrollResult,
  renderError,
  renderIdentifyResult,
  renderNetworkFailure,
  renderStats,
  renderSubject,
} from "./render.js";

const $ = <T extends HTMLElement>(sel: string): T => {
  const el = document.querySelector<T>(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el;
};

let queue: Promise<void> = Promise.resolve();

function enqueue(op: () => Promise<void>): void {
  queue = queue.then(op).catch(() => undefined);
}

function api(): ConsoleApi {
  return new ConsoleApi(($("#service-url") as HTMLInputElement).value);
}

async function refreshStats(): Promise<void> {
  try {
    const r = await api().stats();
    $("#stats").innerHTML = r.ok
      ? renderStats(r.body)
      : renderError(r.status, r.body);
  } catch (err) {
    $("#stats").innerHTML = renderNetworkFailure(String(err));
  }
}

function fileOf(sel: string): File {
  const input = $(sel) as HTMLInputElement;
  const f = input.files?.[0];
  if (!f) throw new Error("select both capture images first");
  return f;
}

function wireEnroll(): void {
  $("#enroll-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    enqueue(async () => {
      const out = $("#enroll-result");
      try {
        let metadata: Record<string, unknown> | undefined;
        const metaText = ($("#enroll-meta") as HTMLTextAreaElement).value.trim();
        if (metaText) metadata = JSON.parse(metaText);
        const r = await api().enroll({
          subjectId: ($("#enroll-subject") as HTMLInputElement).value,
          finger: Number(($("#enroll-finger") as HTMLInputElement).value),
          direct: fileOf("#enroll-direct"),
          ftir: fileOf("#enroll-ftir"),
          metadata,
        });
        out.innerHTML = r.ok
          ? renderEnrollResult(r.body)
          : renderError(r.status, r.body);
        await refreshStats();
      } catch (err) {
        out.innerHTML = renderNetworkFailure(String(err));
      }
    });
  });
}

function wireIdentify(): void {
  $("#identify-form").addEventListener("submit", (ev) => {
    ev.preventDefault();
    enqueue(async () => {
      const out = $("#identify-result");
      try {
        const r = await api().identify(
          fileOf("#identify-direct"),
          fileOf("#identify-ftir"),
          Number(($("#identify-top") as HTMLInputElement).value),
        );
        out.innerHTML = r.ok
          ? renderIdentifyResult(r.body)
          : renderError(r.status, r.body);
      } catch (err) {
        out.innerHTML = renderNetworkFailure(String(err));
      }
    });
  });

  // ranked hits link through to the subject metadata view
  $("#identify-result").addEventListener("click", (ev) => {
    const target = (ev.target as HTMLElement).closest<HTMLElement>("a.subject-link");
    if (!target) return;
    ev.preventDefault();
    const id = target.dataset.subject;
    if (!id) return;
    enqueue(async () => {
      const out = $("#subject-result");
      try {
        const r = await api().subject(id);
        out.innerHTML = r.ok
          ? renderSubject(r.body)
          : renderError(r.status, r.body);
      } catch (err) {
        out.innerHTML = renderNetworkFailure(String(err));
      }
    });
  });
}

document.addEventListener("DOMContentLoaded", () => {
  ($("#service-url") as HTMLInputElement).value =
    localStorage.getItem("matchbox.serviceUrl") ?? window.location.origin;
  $("#service-url").addEventListener("change", () => {
    localStorage.setItem("matchbox.serviceUrl", ($("#service-url") as HTMLInputElement).value);
    enqueue(refreshStats);
  });
  wireEnroll();
  wireIdentify();
  enqueue(refreshStats);
});
