/**
 * Minimal review UI: pulls the next document for the annotator, renders
 * highlighted mentions, records accept/reject/kill decisions plus manual
 * spans and meta labels, and submits everything as feedback before
 * advancing. No framework — plain DOM against the service API.
 */

import { ApiClient } from "./api.js";
import { toHtml } from "./highlight.js";
import { ReviewState } from "./state.js";

interface UiConfig {
  baseUrl: string;
  projectId: number | string;
  annotator: string;
  metaTasks: Record<string, string[]>;
  token?: string;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in page template`);
  return node as T;
}

export function startApp(config: UiConfig): void {
  const client = new ApiClient({ baseUrl: config.baseUrl, token: config.token });
  let state: ReviewState | null = null;

  const docView = el<HTMLDivElement>("document");
  const mentionList = el<HTMLUListElement>("mentions");
  const statusLine = el<HTMLParagraphElement>("status");

  function render(): void {
    if (!state) {
      docView.innerHTML = "";
      mentionList.innerHTML = "";
      return;
    }
    const s = state;
    docView.innerHTML = toHtml(
      s.text,
      s.reviews.map((r, i) => ({
        start: r.mention.start,
        end: r.mention.end,
        cssClass: `mention mention-${r.decision}`,
      })).concat(
        s.manualSpans.map((m) => ({
          start: m.start,
          end: m.end,
          cssClass: "mention mention-manual",
        })),
      ),
    );
    mentionList.innerHTML = "";
    s.reviews.forEach((review, i) => {
      const item = document.createElement("li");
      const { mention } = review;
      const label = document.createElement("span");
      label.textContent =
        `${s.text.slice(mention.start, mention.end)} -> ${mention.cui ?? "?"} ` +
        `(${mention.confidence?.toFixed(2) ?? "untrained"}, ${review.decision})`;
      item.appendChild(label);
      for (const decision of ["accepted", "rejected", "killed"] as const) {
        const button = document.createElement("button");
        button.textContent = decision;
        button.onclick = () => {
          if (decision === "accepted") s.accept(i);
          else if (decision === "rejected") s.reject(i);
          else s.kill(i);
          render();
        };
        item.appendChild(button);
      }
      for (const [task, labels] of Object.entries(config.metaTasks)) {
        const select = document.createElement("select");
        select.append(new Option(`${task}…`, ""));
        for (const value of labels) select.append(new Option(value, value));
        select.value = review.metaLabels[task] ?? "";
        select.onchange = () => {
          if (select.value) s.setMetaLabel(i, task, select.value);
        };
        item.appendChild(select);
      }
      mentionList.appendChild(item);
    });
  }

  async function loadNext(): Promise<void> {
    const doc = await client.nextDocument(config.projectId, config.annotator);
    if (doc === null) {
      state = null;
      statusLine.textContent = "All documents reviewed.";
      render();
      return;
    }
    state = new ReviewState(doc);
    statusLine.textContent = `Document ${doc.doc_id}`;
    render();
  }

  el<HTMLButtonElement>("add-span").onclick = () => {
    if (!state) return;
    const selection = window.getSelection();
    if (!selection || selection.rangeCount === 0) return;
    const range = selection.getRangeAt(0);
    const cui = el<HTMLInputElement>("manual-cui").value.trim();
    const start = range.startOffset;
    const end = range.endOffset;
    try {
      state.addManualSpan(start, end, cui);
      render();
    } catch (err) {
      statusLine.textContent = String(err);
    }
  };

  el<HTMLButtonElement>("submit").onclick = async () => {
    if (!state) return;
    if (!state.isComplete()) {
      statusLine.textContent = `${state.pendingCount()} mentions still pending.`;
      return;
    }
    for (const feedback of state.toFeedback(config.annotator)) {
      await client.submitFeedback(config.projectId, feedback);
    }
    await loadNext();
  };

  void loadNext();
}
