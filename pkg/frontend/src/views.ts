// Pure renderers: API responses in, HTML strings out. Keeping these free of
// DOM and client state lets the replay suite assert on rendered facts
// without a browser.

import type {
  AnswerResponse,
  ErrorEnvelope,
  NodeRef,
  PropagationPath,
  RetrievalResult,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll('"', "&quot;");
}

export const ROLE_COLORS: Record<string, string> = {
  IC: "#c0392b",
  D: "#d35400",
  ME: "#f1c40f",
  C: "#8e44ad",
  S: "#27ae60",
  LEADS_TO: "#7f8c8d",
};

function nodeChip(node: NodeRef): string {
  return `<button class="chip" data-node-id="${escapeHtml(node.id)}" ` +
    `data-node-text="${escapeHtml(node.text)}" title="${escapeHtml(node.class)}">` +
    `${escapeHtml(node.text)}</button>`;
}

function group(title: string, nodes: NodeRef[]): string {
  const body = nodes.length
    ? nodes.map(nodeChip).join(" ")
    : `<span class="empty">none recorded</span>`;
  return `<section class="group" data-group="${escapeHtml(title)}">` +
    `<h3>${escapeHtml(title)}</h3><div>${body}</div></section>`;
}

export function renderGroups(result: RetrievalResult): string {
  if (result.status !== "ok" || !result.subject) {
    return `<p class="empty-state">No graph entity matches this query.</p>`;
  }
  return (
    `<h2>${escapeHtml(result.subject.text)} <small>${escapeHtml(result.subject.class)}</small></h2>` +
    group("potential hazards", result.hazards) +
    group("cooperative equipment", result.equipment) +
    group("related materials", result.materials) +
    group("suggestions", result.suggestions)
  );
}

function pathLine(path: PropagationPath, index: number): string {
  const hops = path.nodes
    .map((n) => `<span class="hop" data-node-id="${escapeHtml(n.id)}">${escapeHtml(n.text)}</span>`)
    .join(` <span class="arrow">&rarr;</span> `);
  const joins = path.joins
    .map((j) => `splices ${escapeHtml(j.event_a)} with ${escapeHtml(j.event_b)}`)
    .join("; ");
  return `<li class="path path-${path.kind}" data-path-index="${index}">${hops}` +
    (joins ? ` <span class="joins">(${joins})</span>` : "") + `</li>`;
}

export function renderTracePaths(paths: PropagationPath[]): string {
  if (!paths.length) return `<p class="empty-state">No propagation path reaches this node.</p>`;
  return `<ol class="paths">` + paths.map(pathLine).join("") + `</ol>`;
}

export function renderWhatIf(paths: PropagationPath[], focusText: string | null): string {
  const around = focusText
    ? paths.filter((p) => p.nodes.some((n) => n.text === focusText))
    : paths;
  if (!around.length) {
    return `<p class="empty-state">No spliced propagation paths to preview.</p>`;
  }
  return `<p>${around.length} what-if preview${around.length > 1 ? "s" : ""}:</p>` +
    `<ol class="paths previews">` + around.map(pathLine).join("") + `</ol>`;
}

export function renderAnswerOk(answer: AnswerResponse): string {
  const items = answer.answers
    .map((a, i) => {
      const jump = a.path.length ? a.path[a.path.length - 1] : "";
      return `<li class="answer" data-rank="${i + 1}">` +
        `<p>${escapeHtml(a.text)}</p>` +
        `<p class="meta">score ${a.score} · ` +
        a.provenance
          // clicking a provenance link re-traces the cited path in the graph
          .map((p) => `<a class="prov" data-event="${escapeHtml(p)}" ` +
            `data-jump="${escapeHtml(jump)}">${escapeHtml(p)}</a>`)
          .join(", ") +
        `</p></li>`;
    })
    .join("");
  return `<div class="qa ok"><p class="q">${escapeHtml(answer.question)}</p>` +
    `<ol class="answers">${items}</ol></div>`;
}

export function renderRefusal(envelope: ErrorEnvelope): string {
  return `<div class="qa refused"><p class="notice">Out of scope: ` +
    `${escapeHtml(envelope.message)}</p></div>`;
}

export function renderLegend(): string {
  const entries = Object.entries(ROLE_COLORS)
    .map(([role, color]) =>
      `<span class="legend-item"><span class="swatch" style="background:${color}"></span>` +
      `${escapeHtml(role)}</span>`)
    .join(" ");
  return `<div class="legend">${entries}</div>`;
}
