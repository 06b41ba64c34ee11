// Headless application core: drives the API client and turns responses into
// rendered panel strings. main.ts mounts these into the DOM; the replay
// suite exercises this class directly, so every user-visible fact flows
// through here and provably originates from an API response.

import { ApiClient, ApiError } from "./api.js";
import { modelFromPaths, renderSvg } from "./graphview.js";
import { DEFAULT_STATE, ViewState, fromHash, toHash } from "./state.js";
import type { PropagationPath, QasOutcome } from "./types.js";
import {
  renderAnswerOk,
  renderGroups,
  renderLegend,
  renderRefusal,
  renderTracePaths,
  renderWhatIf,
  escapeHtml,
} from "./views.js";

export interface Panels {
  explore: string;
  trace: string;
  whatIf: string;
  chat: string;
  graph: string;
  status: string;
}

export interface TranscriptEntry {
  question: string;
  outcome: QasOutcome;
}

export class AppCore {
  state: ViewState = { ...DEFAULT_STATE };
  transcript: TranscriptEntry[] = [];
  panels: Panels = {
    explore: "", trace: "", whatIf: "", chat: "", graph: "", status: "",
  };
  private lastTrace: PropagationPath[] = [];

  constructor(private readonly api: ApiClient) {}

  restore(hash: string): ViewState {
    this.state = fromHash(hash);
    return this.state;
  }

  get hash(): string {
    return toHash(this.state);
  }

  async explore(entity: string): Promise<void> {
    const result = await this.api.retrieve(entity);
    this.state = { ...this.state, focused: result.subject ? result.subject.text : entity };
    this.panels.explore = renderGroups(result);
    this.panels.status = result.status === "ok"
      ? `focused on ${escapeHtml(result.subject!.text)}`
      : `no such entity: ${escapeHtml(entity)}`;
  }

  async trace(node: string): Promise<void> {
    try {
      const res = await this.api.traceBack(node);
      this.lastTrace = res.paths;
      this.state = { ...this.state, trace: node };
      this.panels.trace = renderTracePaths(res.paths);
      this.panels.graph = renderLegend() + renderSvg(modelFromPaths(res.paths));
      this.panels.status = `${res.paths.length} propagation path(s) into ${escapeHtml(node)}`;
    } catch (err) {
      if (err instanceof ApiError && err.envelope.code === "not_found") {
        this.panels.trace = `<p class="empty-state">Unknown node.</p>`;
        this.panels.status = `unknown node: ${escapeHtml(node)}`;
        return;
      }
      throw err;
    }
  }

  tracePath(index: number): PropagationPath | null {
    return this.lastTrace[index] ?? null;
  }

  async whatIf(): Promise<void> {
    const res = await this.api.inferred();
    this.panels.whatIf = renderWhatIf(res.paths, this.state.focused);
    this.panels.status = `${res.paths.length} inferred splice(s) available`;
  }

  async ask(question: string): Promise<QasOutcome> {
    const outcome = await this.api.qas(question, this.state.k);
    this.transcript.push({ question, outcome });
    this.panels.chat = this.transcript
      .map((entry) =>
        entry.outcome.kind === "ok"
          ? renderAnswerOk(entry.outcome.answer)
          : renderRefusal(entry.outcome.envelope))
      .join("");
    return outcome;
  }

  setK(k: number): void {
    this.state = { ...this.state, k: Math.max(1, Math.floor(k)) };
  }
}
