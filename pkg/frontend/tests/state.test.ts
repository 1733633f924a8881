import { describe, expect, it } from "vitest";

import type { NextDocument, ReviewMention } from "../src/api.js";
import { ReviewState } from "../src/state.js";

function mention(
  start: number,
  end: number,
  cui: string,
  status: ReviewMention["status"] = "needs_input",
): ReviewMention {
  return {
    start,
    end,
    cui,
    confidence: status === "auto_accepted" ? 0.95 : 0.4,
    meta: {},
    status,
    untrained: false,
  };
}

function doc(mentions: ReviewMention[], text = "x".repeat(60)): NextDocument {
  return { doc_id: "d1", text, mentions };
}

describe("ReviewState", () => {
  it("pre-accepts auto-accepted mentions and leaves the rest pending", () => {
    const state = new ReviewState(
      doc([mention(0, 5, "C1", "auto_accepted"), mention(10, 15, "C2")]),
    );
    expect(state.reviews.map((r) => r.decision)).toEqual([
      "accepted",
      "pending",
    ]);
    expect(state.pendingCount()).toBe(1);
    expect(state.isComplete()).toBe(false);
  });

  it("tracks decisions and completion", () => {
    const state = new ReviewState(
      doc([mention(0, 5, "C1"), mention(10, 15, "C2"), mention(20, 25, "C3")]),
    );
    state.accept(0);
    state.reject(1);
    state.kill(2);
    expect(state.isComplete()).toBe(true);
    expect(state.reviews.map((r) => r.decision)).toEqual([
      "accepted",
      "rejected",
      "killed",
    ]);
  });

  it("produces verdicts matching decisions", () => {
    const state = new ReviewState(
      doc([mention(0, 5, "C1"), mention(10, 15, "C2"), mention(20, 25, "C3")]),
    );
    state.accept(0);
    state.reject(1);
    state.kill(2);
    const fb = state.toFeedback("alice");
    expect(fb.map((f) => f.verdict)).toEqual([
      "correct",
      "incorrect",
      "killed",
    ]);
    expect(fb.every((f) => f.doc_id === "d1" && f.annotator === "alice")).toBe(
      true,
    );
  });

  it("attaches meta labels only to accepted mentions", () => {
    const state = new ReviewState(
      doc([mention(0, 5, "C1"), mention(10, 15, "C2")]),
    );
    state.accept(0);
    state.setMetaLabel(0, "negation", "no");
    state.reject(1);
    state.setMetaLabel(1, "negation", "yes");
    const fb = state.toFeedback("a");
    expect(fb[0]?.meta).toEqual({ negation: "no" });
    expect(fb[1]?.meta).toEqual({});
  });

  it("skips pending mentions in feedback", () => {
    const state = new ReviewState(
      doc([mention(0, 5, "C1"), mention(10, 15, "C2")]),
    );
    state.accept(0);
    expect(state.toFeedback("a")).toHaveLength(1);
  });

  it("adds manual spans as correct + manually_added", () => {
    const state = new ReviewState(doc([mention(0, 5, "C1")]));
    state.accept(0);
    state.addManualSpan(20, 31, "C9", { negation: "yes" });
    const fb = state.toFeedback("a");
    expect(fb[1]).toMatchObject({
      start: 20,
      end: 31,
      cui: "C9",
      verdict: "correct",
      manually_added: true,
      meta: { negation: "yes" },
    });
  });

  it("rejects invalid manual spans", () => {
    const state = new ReviewState(doc([mention(0, 5, "C1")], "short text"));
    expect(() => state.addManualSpan(-1, 4, "C9")).toThrow(RangeError);
    expect(() => state.addManualSpan(4, 4, "C9")).toThrow(RangeError);
    expect(() => state.addManualSpan(0, 999, "C9")).toThrow(RangeError);
    expect(() => state.addManualSpan(6, 8, "")).toThrow(RangeError);
    expect(() => state.addManualSpan(0, 5, "C9")).toThrow(/already reviewed/);
    state.addManualSpan(6, 8, "C9");
    expect(() => state.addManualSpan(6, 8, "C8")).toThrow(/already reviewed/);
  });

  it("throws on out-of-range mention indices", () => {
    const state = new ReviewState(doc([mention(0, 5, "C1")]));
    expect(() => state.accept(3)).toThrow(RangeError);
  });
});
