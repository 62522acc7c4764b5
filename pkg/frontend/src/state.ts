/**
 * Batch annotation state, independent of the DOM.
 *
 * Each pending sentence renders as selectable token spans with a current
 * label per token. The default build pre-fills NON (shown to the annotator
 * as an explicit selection); a state built without prefill keeps tokens
 * unlabeled and gates submission on full coverage. The wire payload is
 * exactly the current selections — the model never invents labels.
 */

import type { BatchItem, Label } from "./api.js";
import { LABELS } from "./api.js";

export type ItemPhase = "editing" | "submitting" | "submitted" | "locked" | "error";

export interface AnnotationItem {
  id: string;
  topic: string;
  tokens: string[];
  labels: (Label | null)[];
  phase: ItemPhase;
  errorMessage?: string;
  dirty: boolean;
}

export interface SpanSelection {
  itemId: string;
  start: number;
  end: number; // inclusive
}

export class BatchState {
  readonly items: AnnotationItem[];

  constructor(batch: BatchItem[], options: { prefill?: boolean } = {}) {
    const prefill = options.prefill ?? true;
    this.items = batch.map((item) => ({
      id: item.id,
      topic: item.topic,
      tokens: [...item.tokens],
      labels: item.tokens.map(() => (prefill ? ("NON" as Label) : null)),
      phase: item.submitted ? "submitted" : "editing",
      dirty: false,
    }));
  }

  item(itemId: string): AnnotationItem {
    const found = this.items.find((it) => it.id === itemId);
    if (!found) throw new Error(`unknown item ${itemId}`);
    return found;
  }

  /** Resolve a drag from anchor to focus; null when it crosses sentences. */
  resolveSpan(
    anchor: { itemId: string; index: number },
    focus: { itemId: string; index: number },
  ): SpanSelection | null {
    if (anchor.itemId !== focus.itemId) return null;
    return {
      itemId: anchor.itemId,
      start: Math.min(anchor.index, focus.index),
      end: Math.max(anchor.index, focus.index),
    };
  }

  /** Set every token in the span to the label; overwrites previous labels. */
  labelSpan(selection: SpanSelection, label: Label): void {
    const item = this.item(selection.itemId);
    if (item.phase !== "editing" && item.phase !== "error") return;
    if (selection.start < 0 || selection.end >= item.tokens.length) {
      throw new Error(`span ${selection.start}..${selection.end} out of range`);
    }
    for (let i = selection.start; i <= selection.end; i++) item.labels[i] = label;
    item.dirty = true;
    if (item.phase === "error") {
      item.phase = "editing";
      item.errorMessage = undefined;
    }
  }

  /** Single click steps the token through PRO -> CON -> NON -> PRO. */
  toggleToken(itemId: string, index: number): void {
    const item = this.item(itemId);
    if (item.phase !== "editing" && item.phase !== "error") return;
    const current = item.labels[index];
    const next: Label =
      current == null ? "PRO" : LABELS[(LABELS.indexOf(current) + 1) % LABELS.length]!;
    this.labelSpan({ itemId, start: index, end: index }, next);
  }

  isCovered(itemId: string): boolean {
    return this.item(itemId).labels.every((label) => label !== null);
  }

  canSubmit(itemId: string): boolean {
    const item = this.item(itemId);
    return (item.phase === "editing" || item.phase === "error") && this.isCovered(itemId);
  }

  /** Wire payload: exactly the rendered selections. */
  payload(itemId: string): { id: string; labels: Label[] } {
    const item = this.item(itemId);
    if (!this.isCovered(itemId)) {
      throw new Error(`item ${itemId} is not fully labeled`);
    }
    return { id: item.id, labels: item.labels.map((label) => label as Label) };
  }

  markSubmitting(itemId: string): void {
    this.item(itemId).phase = "submitting";
  }

  markSubmitted(itemId: string): void {
    this.item(itemId).phase = "submitted";
  }

  markLocked(itemId: string, message: string): void {
    const item = this.item(itemId);
    item.phase = "locked";
    item.errorMessage = message;
  }

  markError(itemId: string, message: string): void {
    const item = this.item(itemId);
    item.phase = "error";
    item.errorMessage = message;
  }

  remaining(): number {
    return this.items.filter((item) => item.phase !== "submitted" && item.phase !== "locked")
      .length;
  }

  allDone(): boolean {
    return this.remaining() === 0;
  }
}
