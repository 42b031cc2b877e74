/** DOM wiring: forwards events into SessionController, renders snapshots. */

import {
  CompletePayload,
  PANEL_DEFAULTS,
  PANEL_RANGES,
  PanelState,
  SessionController,
  SessionSnapshot,
} from "./session.js";

const $ = <T extends HTMLElement>(id: string): T => {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el as T;
};

const transport = async (url: string): Promise<CompletePayload> => {
  const resp = await fetch(url);
  const body = await resp.json();
  if (!resp.ok) {
    throw new Error(body?.error?.message ?? `HTTP ${resp.status}`);
  }
  return body as CompletePayload;
};

function sourceBadge(source: string, conforming: boolean): string {
  const mark = conforming ? " &#10003;" : "";
  return `<span class="badge badge-${source}">${source}${mark}</span>`;
}

function renderSuggestions(snapshot: SessionSnapshot): void {
  const list = $("suggestions");
  const payload = snapshot.payload;
  if (!payload || payload.suggestions.length === 0) {
    list.innerHTML = snapshot.prefix.trim()
      ? '<li class="empty">no suggestions</li>'
      : "";
    return;
  }
  list.innerHTML = payload.suggestions
    .map((s, i) => {
      const cls = i === snapshot.highlighted ? "row highlight" : "row";
      return (
        `<li class="${cls}" data-rank="${s.rank}">` +
        `<span class="rank">${s.rank}</span>` +
        `<span class="text">${escapeHtml(s.text)}</span>` +
        `<span class="score">${s.score.toFixed(3)}</span>` +
        sourceBadge(s.source, s.trie_conforming) +
        `</li>`
      );
    })
    .join("");
}

function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;");
}

function renderLatencies(latencies: number[]): void {
  const chart = $("latency-chart");
  const max = Math.max(20, ...latencies);
  chart.innerHTML = latencies
    .map((ms) => {
      const h = Math.max(2, Math.round((ms / max) * 48));
      return `<div class="bar" style="height:${h}px" title="${ms.toFixed(1)} ms"></div>`;
    })
    .join("");
  const last = latencies[latencies.length - 1];
  $("latency-label").textContent = last === undefined ? "" : `${last.toFixed(1)} ms`;
}

function render(snapshot: SessionSnapshot): void {
  renderSuggestions(snapshot);
  renderLatencies(snapshot.latencies);
  const banner = $("error-banner");
  if (snapshot.error) {
    banner.textContent = snapshot.error;
    banner.classList.remove("hidden");
  } else {
    banner.classList.add("hidden");
  }
  const saving = $("saving");
  saving.textContent =
    snapshot.lastSaving === null
      ? ""
      : `typing effort saved: ${(snapshot.lastSaving * 100).toFixed(0)}%`;
  const input = $("prefix") as HTMLInputElement;
  if (input.value !== snapshot.prefix) {
    input.value = snapshot.prefix;
  }
}

async function loadDocuments(session: SessionController): Promise<void> {
  const resp = await fetch("/v1/documents");
  const body = await resp.json();
  const select = $("doc-select") as HTMLSelectElement;
  select.innerHTML = body.documents
    .map(
      (d: { doc_id: string; title: string }) =>
        `<option value="${d.doc_id}">${escapeHtml(d.doc_id)} &mdash; ${escapeHtml(d.title)}</option>`,
    )
    .join("");
  if (body.documents.length > 0) {
    session.selectDocument(body.documents[0].doc_id);
  }
  select.addEventListener("change", () => session.selectDocument(select.value));
}

function wirePanel(session: SessionController): void {
  const modeSelect = $("mode") as HTMLSelectElement;
  modeSelect.value = PANEL_DEFAULTS.mode;
  modeSelect.addEventListener("change", () =>
    session.onParamChange("mode", modeSelect.value as PanelState["mode"]),
  );
  const contextSelect = $("context") as HTMLSelectElement;
  contextSelect.value = PANEL_DEFAULTS.context;
  contextSelect.addEventListener("change", () =>
    session.onParamChange("context", contextSelect.value),
  );
  for (const name of ["alpha", "beta", "bias", "lambda", "beam"] as const) {
    const slider = $(name) as HTMLInputElement;
    const range = PANEL_RANGES[name];
    slider.min = String(range.min);
    slider.max = String(range.max);
    slider.step = String(range.step);
    slider.value = String(PANEL_DEFAULTS[name]);
    const label = $(`${name}-value`);
    label.textContent = slider.value;
    slider.addEventListener("input", () => {
      label.textContent = slider.value;
      session.onParamChange(name, Number(slider.value));
    });
  }
}

function main(): void {
  const session = new SessionController({ transport, onRender: render });
  void loadDocuments(session);
  wirePanel(session);

  const input = $("prefix") as HTMLInputElement;
  input.addEventListener("input", () => session.onKeystroke(input.value));
  input.addEventListener("keydown", (event) => {
    if (event.key === "ArrowDown") {
      event.preventDefault();
      session.moveHighlight(1);
    } else if (event.key === "ArrowUp") {
      event.preventDefault();
      session.moveHighlight(-1);
    } else if (event.key === "Enter") {
      event.preventDefault();
      session.selectHighlighted();
    }
  });
}

document.addEventListener("DOMContentLoaded", main);
