/**
 * Review-session state machine.
 *
 * One ReviewState wraps one document pulled from the service: each
 * detected mention carries a decision (pending/accepted/rejected/killed),
 * manual spans can be added for anything the model missed, and meta-task
 * labels attach to accepted or manual spans. `toFeedback` turns the
 * finished session into the exact feedback payloads the API expects.
 */

import type { FeedbackRequest, NextDocument, ReviewMention } from "./api.js";

export type Decision = "pending" | "accepted" | "rejected" | "killed";

export interface MentionReview {
  mention: ReviewMention;
  decision: Decision;
  metaLabels: Record<string, string>;
}

export interface ManualSpan {
  start: number;
  end: number;
  cui: string;
  metaLabels: Record<string, string>;
}

export class ReviewState {
  readonly docId: string;
  readonly text: string;
  readonly reviews: MentionReview[];
  readonly manualSpans: ManualSpan[] = [];

  constructor(doc: NextDocument) {
    this.docId = doc.doc_id;
    this.text = doc.text;
    this.reviews = doc.mentions.map((mention) => ({
      mention,
      // high-confidence mentions arrive pre-accepted; the reviewer can
      // still override them
      decision: mention.status === "auto_accepted" ? "accepted" : "pending",
      metaLabels: { ...mention.meta },
    }));
  }

  private review(index: number): MentionReview {
    const r = this.reviews[index];
    if (r === undefined) {
      throw new RangeError(`no mention at index ${index}`);
    }
    return r;
  }

  accept(index: number): void {
    this.review(index).decision = "accepted";
  }

  reject(index: number): void {
    this.review(index).decision = "rejected";
  }

  /** Kill: the name-to-concept mapping itself is wrong, not just here. */
  kill(index: number): void {
    this.review(index).decision = "killed";
  }

  setMetaLabel(index: number, task: string, label: string): void {
    this.review(index).metaLabels[task] = label;
  }

  addManualSpan(
    start: number,
    end: number,
    cui: string,
    metaLabels: Record<string, string> = {},
  ): void {
    if (!Number.isInteger(start) || !Number.isInteger(end)) {
      throw new RangeError("span offsets must be integers");
    }
    if (start < 0 || end <= start || end > this.text.length) {
      throw new RangeError(`span [${start}, ${end}) out of bounds`);
    }
    if (!cui) {
      throw new RangeError("manual span needs a concept id");
    }
    const clash = [
      ...this.reviews.map((r) => r.mention),
      ...this.manualSpans,
    ].some((s) => s.start === start && s.end === end);
    if (clash) {
      throw new RangeError(`span [${start}, ${end}) already reviewed`);
    }
    this.manualSpans.push({ start, end, cui, metaLabels: { ...metaLabels } });
  }

  pendingCount(): number {
    return this.reviews.filter((r) => r.decision === "pending").length;
  }

  isComplete(): boolean {
    return this.pendingCount() === 0;
  }

  /**
   * Feedback payloads for every decided mention and manual span.
   * Pending mentions are skipped; call `isComplete` first if the UI
   * wants to force a decision on everything.
   */
  toFeedback(annotator: string): FeedbackRequest[] {
    const out: FeedbackRequest[] = [];
    for (const r of this.reviews) {
      if (r.decision === "pending" || r.mention.cui === null) continue;
      out.push({
        doc_id: this.docId,
        annotator,
        start: r.mention.start,
        end: r.mention.end,
        cui: r.mention.cui,
        verdict:
          r.decision === "accepted"
            ? "correct"
            : r.decision === "killed"
              ? "killed"
              : "incorrect",
        meta: r.decision === "accepted" ? r.metaLabels : {},
      });
    }
    for (const s of this.manualSpans) {
      out.push({
        doc_id: this.docId,
        annotator,
        start: s.start,
        end: s.end,
        cui: s.cui,
        verdict: "correct",
        manually_added: true,
        meta: s.metaLabels,
      });
    }
    return out;
  }
}
