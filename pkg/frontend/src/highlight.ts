/**
 * Offset-exact span rendering.
 *
 * The document text is split into segments that concatenate back to the
 * original string exactly; each segment either belongs to one highlighted
 * span (carrying its index) or is plain text. Rendering to HTML escapes
 * everything, so offsets computed by the server stay valid no matter
 * what characters the document contains.
 */

export interface HighlightSpan {
  start: number;
  end: number;
  cssClass?: string;
}

export interface Segment {
  text: string;
  /** Index into the input span list, or null for plain text. */
  spanIndex: number | null;
  cssClass?: string;
}

export function segment(text: string, spans: HighlightSpan[]): Segment[] {
  const ordered = spans
    .map((span, spanIndex) => ({ ...span, spanIndex }))
    .sort((a, b) => a.start - b.start || a.end - b.end);
  let cursor = 0;
  const out: Segment[] = [];
  for (const span of ordered) {
    if (
      !Number.isInteger(span.start) ||
      !Number.isInteger(span.end) ||
      span.start < 0 ||
      span.end > text.length ||
      span.end <= span.start
    ) {
      throw new RangeError(
        `invalid span [${span.start}, ${span.end}) for text of length ${text.length}`,
      );
    }
    if (span.start < cursor) {
      throw new RangeError(
        `overlapping span [${span.start}, ${span.end}) at offset ${cursor}`,
      );
    }
    if (span.start > cursor) {
      out.push({ text: text.slice(cursor, span.start), spanIndex: null });
    }
    out.push({
      text: text.slice(span.start, span.end),
      spanIndex: span.spanIndex,
      cssClass: span.cssClass,
    });
    cursor = span.end;
  }
  if (cursor < text.length) {
    out.push({ text: text.slice(cursor), spanIndex: null });
  }
  return out;
}

export function escapeHtml(raw: string): string {
  return raw
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function toHtml(text: string, spans: HighlightSpan[]): string {
  return segment(text, spans)
    .map((seg) =>
      seg.spanIndex === null
        ? escapeHtml(seg.text)
        : `<mark class="${escapeHtml(seg.cssClass ?? "mention")}" data-span="${seg.spanIndex}">` +
          `${escapeHtml(seg.text)}</mark>`,
    )
    .join("");
}
