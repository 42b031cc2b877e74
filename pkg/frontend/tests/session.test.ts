import { afterEach, beforeEach, describe, expect, it, vi } from "vitest";

import {
  CompletePayload,
  PANEL_DEFAULTS,
  PANEL_RANGES,
  SessionController,
  SessionSnapshot,
} from "../src/session.js";

function payloadFor(prefix: string, texts: string[]): CompletePayload {
  return {
    prefix,
    mode: "guided",
    latency_ms: 12.5,
    suggestions: texts.map((text, i) => ({
      text,
      score: -0.1 * (i + 1),
      rank: i + 1,
      source: "guided",
      trie_conforming: true,
    })),
  };
}

interface Deferred {
  url: string;
  resolve: (p: CompletePayload) => void;
  reject: (err: unknown) => void;
}

function harness() {
  const calls: string[] = [];
  const pending: Deferred[] = [];
  const renders: SessionSnapshot[] = [];
  const transport = (url: string) =>
    new Promise<CompletePayload>((resolve, reject) => {
      calls.push(url);
      pending.push({ url, resolve, reject });
    });
  const session = new SessionController({
    transport,
    onRender: (snap) => renders.push(snap),
  });
  session.selectDocument("d000");
  renders.length = 0;
  return { session, calls, pending, renders };
}

function prefixOf(url: string): string {
  return new URL(url, "http://x").searchParams.get("prefix")!;
}

async function flush() {
  // lets promise callbacks queued by resolve()/reject() run
  await Promise.resolve();
  await Promise.resolve();
}

beforeEach(() => {
  vi.useFakeTimers();
});

afterEach(() => {
  vi.useRealTimers();
});

describe("debounce contract", () => {
  it("two rapid keystrokes issue exactly one request, for the final prefix", () => {
    const { session, calls } = harness();
    session.onKeystroke("s");
    vi.advanceTimersByTime(30);
    session.onKeystroke("sp");
    vi.advanceTimersByTime(74);
    expect(calls.length).toBe(0);
    vi.advanceTimersByTime(1);
    expect(calls.length).toBe(1);
    expect(prefixOf(calls[0])).toBe("sp");
  });

  it("slow keystrokes issue one request each", async () => {
    const { session, calls, pending } = harness();
    session.onKeystroke("s");
    vi.advanceTimersByTime(80);
    pending.shift()!.resolve(payloadFor("s", ["sx"]));
    await flush();
    session.onKeystroke("sp");
    vi.advanceTimersByTime(80);
    expect(calls.map(prefixOf)).toEqual(["s", "sp"]);
  });

  it("empty prefix issues no request and clears the list", async () => {
    const { session, calls, pending, renders } = harness();
    session.onKeystroke("sp");
    vi.advanceTimersByTime(80);
    pending.shift()!.resolve(payloadFor("sp", ["spa"]));
    await flush();
    expect(renders.at(-1)!.payload).not.toBeNull();
    session.onKeystroke("");
    vi.advanceTimersByTime(200);
    expect(calls.length).toBe(1);
    expect(renders.at(-1)!.payload).toBeNull();
  });
});

describe("stale responses", () => {
  it("a response for an older prefix never renders", async () => {
    const { session, pending, renders } = harness();
    session.onKeystroke("sp");
    vi.advanceTimersByTime(80);
    const first = pending.shift()!;
    session.onKeystroke("spe");
    vi.advanceTimersByTime(80);
    // the older response arrives after the prefix moved on
    first.resolve(payloadFor("sp", ["sp old"]));
    await flush();
    const rendered = renders.filter((r) => r.payload !== null);
    expect(rendered.every((r) => r.payload!.prefix !== "sp")).toBe(true);
    // the follow-up request for the new prefix resolves and renders
    const second = pending.shift()!;
    expect(prefixOf(second.url)).toBe("spe");
    second.resolve(payloadFor("spe", ["spe fresh"]));
    await flush();
    expect(renders.at(-1)!.payload!.prefix).toBe("spe");
  });

  it("keeps at most one request in flight", async () => {
    const { session, calls, pending } = harness();
    session.onKeystroke("a");
    vi.advanceTimersByTime(80);
    session.onKeystroke("ab");
    vi.advanceTimersByTime(80);
    session.onKeystroke("abc");
    vi.advanceTimersByTime(80);
    expect(calls.length).toBe(1);
    pending.shift()!.resolve(payloadFor("a", ["a1"]));
    await flush();
    expect(calls.length).toBe(2);
    expect(prefixOf(calls[1])).toBe("abc");
  });
});

describe("parameter fidelity", () => {
  it("the query string matches panel state exactly", () => {
    const { session } = harness();
    session.panel.alpha = 0.2;
    session.panel.beta = 0.5;
    session.panel.bias = 30;
    session.panel.lambda = 0.45;
    session.panel.beam = 7;
    session.panel.k = 8;
    session.panel.mode = "lm";
    session.panel.context = "P_TU";
    const url = new URL(session.buildUrl("spe"), "http://x");
    const q = url.searchParams;
    expect(q.get("doc_id")).toBe("d000");
    expect(q.get("prefix")).toBe("spe");
    expect(q.get("mode")).toBe("lm");
    expect(q.get("k")).toBe("8");
    expect(q.get("alpha")).toBe("0.2");
    expect(q.get("beta")).toBe("0.5");
    expect(q.get("bias")).toBe("30");
    expect(q.get("lambda")).toBe("0.45");
    expect(q.get("beam")).toBe("7");
    expect(q.get("context")).toBe("P_TU");
  });

  it("a panel change re-issues the request for the current prefix", async () => {
    const { session, calls, pending } = harness();
    session.onKeystroke("spe");
    vi.advanceTimersByTime(80);
    pending.shift()!.resolve(payloadFor("spe", ["speed"]));
    await flush();
    session.onParamChange("bias", 0);
    expect(calls.length).toBe(2);
    const url = new URL(calls[1], "http://x");
    expect(url.searchParams.get("bias")).toBe("0");
    expect(url.searchParams.get("prefix")).toBe("spe");
  });

  it("alpha slider range follows the tuning bounds with default 0.1", () => {
    expect(PANEL_RANGES.alpha.min).toBe(0);
    expect(PANEL_RANGES.alpha.max).toBe(0.5);
    expect(PANEL_DEFAULTS.alpha).toBe(0.1);
  });
});

describe("selection and effort readout", () => {
  it("selecting a rank-1 completion of length 20 after 4 chars saves 0.8", async () => {
    const { session, pending, renders } = harness();
    session.onKeystroke("spee");
    vi.advanceTimersByTime(80);
    pending.shift()!.resolve(payloadFor("spee", ["speed typing practic"]));
    await flush();
    const chosen = session.selectHighlighted();
    expect(chosen!.text.length).toBe(20);
    expect(renders.at(-1)!.lastSaving).toBeCloseTo(0.8, 10);
    expect(renders.at(-1)!.prefix).toBe("speed typing practic");
  });

  it("arrow keys move the highlight within bounds", async () => {
    const { session, pending, renders } = harness();
    session.onKeystroke("sp");
    vi.advanceTimersByTime(80);
    pending.shift()!.resolve(payloadFor("sp", ["a", "b", "c"]));
    await flush();
    session.moveHighlight(1);
    session.moveHighlight(1);
    session.moveHighlight(1);
    expect(renders.at(-1)!.highlighted).toBe(2);
    session.moveHighlight(-5);
    expect(renders.at(-1)!.highlighted).toBe(0);
  });
});

describe("error handling", () => {
  it("a failed request shows a banner and keeps the prior list", async () => {
    const { session, pending, renders } = harness();
    session.onKeystroke("sp");
    vi.advanceTimersByTime(80);
    pending.shift()!.resolve(payloadFor("sp", ["sp one"]));
    await flush();
    session.onParamChange("bias", 5);
    pending.shift()!.reject(new Error("boom"));
    await flush();
    const last = renders.at(-1)!;
    expect(last.error).toContain("boom");
    expect(last.payload!.suggestions[0].text).toBe("sp one");
  });
});
