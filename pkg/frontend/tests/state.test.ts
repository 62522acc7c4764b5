import { describe, expect, it } from "vitest";

import type { BatchItem } from "../src/api.js";
import { BatchState } from "../src/state.js";

function items(): BatchItem[] {
  return [
    { id: "s1", tokens: ["we", "should", "ban", "it"], topic: "energy", submitted: false },
    { id: "s2", tokens: ["fine", "today"], topic: "wages", submitted: false },
  ];
}

describe("BatchState coverage gating", () => {
  it("without prefill, submit stays disabled until every token is labeled", () => {
    const state = new BatchState(items(), { prefill: false });
    expect(state.isCovered("s1")).toBe(false);
    expect(state.canSubmit("s1")).toBe(false);
    state.labelSpan({ itemId: "s1", start: 0, end: 2 }, "PRO");
    expect(state.canSubmit("s1")).toBe(false); // one token still unlabeled
    state.labelSpan({ itemId: "s1", start: 3, end: 3 }, "NON");
    expect(state.canSubmit("s1")).toBe(true);
  });

  it("payload on uncovered item throws instead of inventing labels", () => {
    const state = new BatchState(items(), { prefill: false });
    expect(() => state.payload("s1")).toThrow(/not fully labeled/);
  });

  it("prefill counts as an explicit NON selection", () => {
    const state = new BatchState(items());
    expect(state.isCovered("s1")).toBe(true);
    expect(state.payload("s1").labels).toEqual(["NON", "NON", "NON", "NON"]);
  });
});

describe("span labeling", () => {
  it("labels exactly the selected contiguous tokens", () => {
    const state = new BatchState(items());
    state.labelSpan({ itemId: "s1", start: 1, end: 2 }, "PRO");
    expect(state.item("s1").labels).toEqual(["NON", "PRO", "PRO", "NON"]);
  });

  it("relabeling overwrites", () => {
    const state = new BatchState(items());
    state.labelSpan({ itemId: "s1", start: 0, end: 3 }, "PRO");
    state.labelSpan({ itemId: "s1", start: 1, end: 2 }, "CON");
    expect(state.item("s1").labels).toEqual(["PRO", "CON", "CON", "PRO"]);
  });

  it("rejects cross-sentence selections", () => {
    const state = new BatchState(items());
    const selection = state.resolveSpan(
      { itemId: "s1", index: 3 },
      { itemId: "s2", index: 0 },
    );
    expect(selection).toBeNull();
  });

  it("normalizes reversed drags", () => {
    const state = new BatchState(items());
    const selection = state.resolveSpan(
      { itemId: "s1", index: 3 },
      { itemId: "s1", index: 1 },
    );
    expect(selection).toEqual({ itemId: "s1", start: 1, end: 3 });
  });

  it("rejects out-of-range spans", () => {
    const state = new BatchState(items());
    expect(() => state.labelSpan({ itemId: "s1", start: 2, end: 9 }, "PRO")).toThrow(/range/);
  });

  it("single-token toggle cycles PRO -> CON -> NON -> PRO", () => {
    const state = new BatchState(items(), { prefill: false });
    state.toggleToken("s2", 0);
    expect(state.item("s2").labels[0]).toBe("PRO");
    state.toggleToken("s2", 0);
    expect(state.item("s2").labels[0]).toBe("CON");
    state.toggleToken("s2", 0);
    expect(state.item("s2").labels[0]).toBe("NON");
    state.toggleToken("s2", 0);
    expect(state.item("s2").labels[0]).toBe("PRO");
  });
});

describe("wire payload equals rendered selections", () => {
  it("payload mirrors the labels array exactly", () => {
    const state = new BatchState(items());
    state.labelSpan({ itemId: "s1", start: 2, end: 3 }, "CON");
    state.toggleToken("s1", 0); // NON -> PRO
    const payload = state.payload("s1");
    expect(payload).toEqual({ id: "s1", labels: ["PRO", "NON", "CON", "CON"] });
    expect(payload.labels).toEqual(state.item("s1").labels);
  });
});

describe("item phases", () => {
  it("submitted and locked items stop counting as remaining", () => {
    const state = new BatchState(items());
    expect(state.remaining()).toBe(2);
    state.markSubmitted("s1");
    expect(state.remaining()).toBe(1);
    state.markLocked("s2", "already labeled");
    expect(state.remaining()).toBe(0);
    expect(state.allDone()).toBe(true);
  });

  it("locked items refuse further edits", () => {
    const state = new BatchState(items());
    state.markLocked("s1", "duplicate");
    state.labelSpan({ itemId: "s1", start: 0, end: 0 }, "PRO");
    expect(state.item("s1").labels[0]).toBe("NON");
  });

  it("an error state reverts to editing after a fix", () => {
    const state = new BatchState(items());
    state.markError("s1", "bad labels");
    expect(state.item("s1").phase).toBe("error");
    state.labelSpan({ itemId: "s1", start: 0, end: 0 }, "CON");
    expect(state.item("s1").phase).toBe("editing");
    expect(state.item("s1").errorMessage).toBeUndefined();
  });
});
