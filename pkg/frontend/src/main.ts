// Browser bootstrap: binds the headless core to the page and keeps the URL
// hash in sync so investigations are shareable links.

import { ApiClient } from "./api.js";
import { AppCore } from "./app.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

async function run(core: AppCore, action: () => Promise<unknown>): Promise<void> {
  try {
    await action();
  } catch (err) {
    core.panels.status = `request failed: ${err instanceof Error ? err.message : String(err)}`;
  }
  paint(core);
  window.location.hash = core.hash;
}

function paint(core: AppCore): void {
  el("explore-panel").innerHTML = core.panels.explore;
  el("trace-panel").innerHTML = core.panels.trace;
  el("whatif-panel").innerHTML = core.panels.whatIf;
  el("chat-panel").innerHTML = core.panels.chat;
  el("graph-panel").innerHTML = core.panels.graph;
  el("status-bar").textContent = core.panels.status;
}

export function boot(): void {
  const api = new ApiClient("", (url, init) => window.fetch(url, init));
  const core = new AppCore(api);
  const state = core.restore(window.location.hash);

  const exploreInput = el<HTMLInputElement>("explore-input");
  el("explore-button").addEventListener("click", () =>
    run(core, () => core.explore(exploreInput.value.trim())));

  const askInput = el<HTMLInputElement>("ask-input");
  el("ask-button").addEventListener("click", () =>
    run(core, () => core.ask(askInput.value.trim())));

  const kInput = el<HTMLInputElement>("k-input");
  kInput.value = String(state.k);
  kInput.addEventListener("change", () => core.setK(Number(kInput.value)));

  el("whatif-button").addEventListener("click", () => run(core, () => core.whatIf()));

  // clicking any rendered node chip or trace hop refocuses the explorer;
  // provenance links jump the graph view to the cited event's path
  document.body.addEventListener("click", (ev) => {
    const target = ev.target as HTMLElement;
    const jump = target.dataset.jump;
    if (jump) {
      void run(core, () => core.trace(jump));
      return;
    }
    const text = target.dataset.nodeText ?? (target.classList.contains("hop")
      ? target.textContent ?? undefined
      : undefined);
    if (text) {
      exploreInput.value = text;
      void run(core, () => core.explore(text));
    }
  });

  if (state.focused) {
    exploreInput.value = state.focused;
    void run(core, () => core.explore(state.focused!));
  }
  if (state.trace) void run(core, () => core.trace(state.trace!));
}

boot();
