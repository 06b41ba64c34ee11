// Shareable view state: everything except the chat transcript lives in the
// URL hash, so an investigation can be re-opened from a pasted link.

export interface ViewState {
  focused: string | null;   // entity text the explorer is centered on
  trace: string | null;     // node whose trace-back is open
  k: number;                // answers requested per question
}

export const DEFAULT_STATE: ViewState = { focused: null, trace: null, k: 3 };

export function toHash(state: ViewState): string {
  const params = new URLSearchParams();
  if (state.focused) params.set("focus", state.focused);
  if (state.trace) params.set("trace", state.trace);
  if (state.k !== DEFAULT_STATE.k) params.set("k", String(state.k));
  const encoded = params.toString();
  return encoded ? `#${encoded}` : "";
}

export function fromHash(hash: string): ViewState {
  const params = new URLSearchParams(hash.replace(/^#/, ""));
  const k = Number(params.get("k") ?? DEFAULT_STATE.k);
  return {
    focused: params.get("focus"),
    trace: params.get("trace"),
    k: Number.isFinite(k) && k >= 1 ? Math.floor(k) : DEFAULT_STATE.k,
  };
}
