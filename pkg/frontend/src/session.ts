/**
 * Session controller for the typing surface.
 *
 * Holds everything the UI needs that is not DOM: the selected document, the
 * current prefix, the hyperparameter panel, the debounce timer, the
 * single-in-flight request discipline, and the stale-response guard. The
 * DOM layer (app.ts) only forwards events in and renders snapshots out, so
 * this whole file is testable with a mocked transport and fake timers.
 *
 * Invariants enforced here:
 *  - at most one completion request is in flight at any time;
 *  - a response is rendered only if it matches the prefix the user most
 *    recently typed (stale responses are dropped);
 *  - keystrokes are debounced (75 ms) so a burst issues one request;
 *  - the query string sent is exactly the panel state.
 */

export interface Suggestion {
  text: string;
  score: number;
  rank: number;
  source: string;
  trie_conforming: boolean;
}

export interface CompletePayload {
  prefix: string;
  mode: string;
  latency_ms: number;
  suggestions: Suggestion[];
}

export interface PanelState {
  mode: "mpc" | "lm" | "guided";
  alpha: number;
  beta: number;
  bias: number;
  lambda: number;
  beam: number;
  k: number;
  context: string;
}

export const PANEL_DEFAULTS: PanelState = {
  mode: "guided",
  alpha: 0.1,
  beta: 0.05,
  bias: 40,
  lambda: 0.3,
  beam: 10,
  k: 10,
  context: "P",
};

/** Slider ranges shown in the panel; alpha/beta follow the tuning grid. */
export const PANEL_RANGES = {
  alpha: { min: 0, max: 0.5, step: 0.01 },
  beta: { min: 0, max: 0.5, step: 0.01 },
  bias: { min: 0, max: 100, step: 1 },
  lambda: { min: 0, max: 1, step: 0.05 },
  beam: { min: 1, max: 25, step: 1 },
} as const;

export interface SessionSnapshot {
  docId: string | null;
  prefix: string;
  payload: CompletePayload | null;
  highlighted: number;
  error: string | null;
  latencies: number[];
  lastSaving: number | null;
}

export type Transport = (url: string) => Promise<CompletePayload>;

export interface SessionOptions {
  transport: Transport;
  onRender: (snapshot: SessionSnapshot) => void;
  baseUrl?: string;
  debounceMs?: number;
  setTimer?: (fn: () => void, ms: number) => unknown;
  clearTimer?: (handle: unknown) => void;
}

const LATENCY_WINDOW = 30;

export class SessionController {
  panel: PanelState = { ...PANEL_DEFAULTS };

  private docId: string | null = null;
  private prefix = "";
  private payload: CompletePayload | null = null;
  private highlighted = 0;
  private error: string | null = null;
  private latencies: number[] = [];
  private lastSaving: number | null = null;

  private transport: Transport;
  private onRender: (snapshot: SessionSnapshot) => void;
  private baseUrl: string;
  private debounceMs: number;
  private setTimer: (fn: () => void, ms: number) => unknown;
  private clearTimer: (handle: unknown) => void;

  private debounceHandle: unknown = null;
  private inFlight = false;
  private wantAnother = false;

  constructor(opts: SessionOptions) {
    this.transport = opts.transport;
    this.onRender = opts.onRender;
    this.baseUrl = opts.baseUrl ?? "";
    this.debounceMs = opts.debounceMs ?? 75;
    this.setTimer = opts.setTimer ?? ((fn, ms) => setTimeout(fn, ms));
    this.clearTimer = opts.clearTimer ?? ((h) => clearTimeout(h as number));
  }

  snapshot(): SessionSnapshot {
    return {
      docId: this.docId,
      prefix: this.prefix,
      payload: this.payload,
      highlighted: this.highlighted,
      error: this.error,
      latencies: [...this.latencies],
      lastSaving: this.lastSaving,
    };
  }

  private render(): void {
    this.onRender(this.snapshot());
  }

  /** Exact query string for the current panel plus the given prefix. */
  buildUrl(prefix: string): string {
    const params = new URLSearchParams({
      doc_id: this.docId ?? "",
      prefix,
      mode: this.panel.mode,
      k: String(this.panel.k),
      alpha: String(this.panel.alpha),
      beta: String(this.panel.beta),
      bias: String(this.panel.bias),
      lambda: String(this.panel.lambda),
      beam: String(this.panel.beam),
      context: this.panel.context,
    });
    return `${this.baseUrl}/v1/complete?${params.toString()}`;
  }

  selectDocument(docId: string): void {
    this.docId = docId;
    this.payload = null;
    this.error = null;
    this.prefix = "";
    this.highlighted = 0;
    this.render();
  }

  onKeystroke(prefix: string): void {
    this.prefix = prefix;
    if (this.debounceHandle !== null) {
      this.clearTimer(this.debounceHandle);
      this.debounceHandle = null;
    }
    if (!this.docId || prefix.trim() === "") {
      // No request for an empty prefix; clear the list.
      this.payload = null;
      this.highlighted = 0;
      this.render();
      return;
    }
    this.debounceHandle = this.setTimer(() => {
      this.debounceHandle = null;
      this.requestCompletion();
    }, this.debounceMs);
  }

  /** Any panel change re-issues the request for the current prefix. */
  onParamChange<K extends keyof PanelState>(key: K, value: PanelState[K]): void {
    this.panel[key] = value;
    if (this.docId && this.prefix.trim() !== "") {
      this.requestCompletion();
    }
  }

  private requestCompletion(): void {
    if (this.inFlight) {
      // Single-flight: remember that the state moved on; reissue on settle.
      this.wantAnother = true;
      return;
    }
    const requestedPrefix = this.prefix;
    const url = this.buildUrl(requestedPrefix);
    this.inFlight = true;
    this.transport(url).then(
      (payload) => {
        this.inFlight = false;
        if (requestedPrefix === this.prefix) {
          this.payload = payload;
          this.error = null;
          this.highlighted = 0;
          this.latencies.push(payload.latency_ms);
          if (this.latencies.length > LATENCY_WINDOW) {
            this.latencies.shift();
          }
          this.render();
        }
        this.settle(requestedPrefix);
      },
      (err) => {
        this.inFlight = false;
        // Keep the previous list; surface the failure in the banner.
        this.error = String(err);
        this.render();
        this.settle(requestedPrefix);
      },
    );
  }

  private settle(servedPrefix: string): void {
    const moved = this.wantAnother || servedPrefix !== this.prefix;
    this.wantAnother = false;
    if (moved && this.docId && this.prefix.trim() !== "") {
      this.requestCompletion();
    }
  }

  moveHighlight(delta: number): void {
    const n = this.payload?.suggestions.length ?? 0;
    if (n === 0) return;
    this.highlighted = Math.min(Math.max(this.highlighted + delta, 0), n - 1);
    this.render();
  }

  /**
   * Accept the highlighted suggestion: the input is filled with its text and
   * the live effort readout records 1 - typed / |completion|.
   */
  selectHighlighted(): Suggestion | null {
    const suggestion = this.payload?.suggestions[this.highlighted] ?? null;
    if (!suggestion) return null;
    const typed = this.prefix.length;
    this.lastSaving = 1 - typed / suggestion.text.length;
    this.prefix = suggestion.text;
    this.payload = null;
    this.highlighted = 0;
    this.render();
    return suggestion;
  }
}
