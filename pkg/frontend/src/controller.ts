/**
 * Session controller: the single code path between the UI surface and the
 * service. DOM handlers and scripted sessions both drive these methods, so
 * a scripted run exercises exactly what an annotator's clicks would.
 */

import { ApiError, ServiceClient } from "./api.js";
import type { CurvePoint, Label, SessionStatus, StatusResponse } from "./api.js";
import { BatchState } from "./state.js";

export interface ControllerView {
  status: SessionStatus;
  episode: number;
  labeled: number;
  unlabeled: number;
  curve: CurvePoint[];
  batch: BatchState | null;
  banner: string | null; // user-visible state: training / finished / errors
}

export class SessionController {
  batch: BatchState | null = null;
  status: SessionStatus = "idle";
  episode = -1;
  labeled = 0;
  unlabeled = 0;
  curve: CurvePoint[] = [];
  banner: string | null = null;
  private batchEpisode = -1;

  constructor(
    private readonly client: ServiceClient,
    readonly sessionId: string,
    private readonly prefill: boolean = true,
  ) {}

  view(): ControllerView {
    return {
      status: this.status,
      episode: this.episode,
      labeled: this.labeled,
      unlabeled: this.unlabeled,
      curve: this.curve,
      batch: this.batch,
      banner: this.banner,
    };
  }

  /** Pull status (and the pending batch when one is awaiting labels). */
  async refresh(): Promise<ControllerView> {
    let snapshot: StatusResponse;
    try {
      snapshot = await this.client.getStatus(this.sessionId);
    } catch (error) {
      this.banner = error instanceof ApiError && error.status === 404
        ? `unknown session ${this.sessionId}`
        : `service unreachable: ${(error as Error).message}`;
      return this.view();
    }
    this.status = snapshot.status;
    this.episode = snapshot.episode;
    this.labeled = snapshot.labeled;
    this.unlabeled = snapshot.unlabeled;
    this.curve = snapshot.curve;
    if (snapshot.status === "training") {
      this.banner = "model retraining - hold on";
    } else if (snapshot.status === "finished") {
      this.banner = `finished: ${snapshot.labeled} sentences labeled`;
      this.batch = null;
    } else if (snapshot.status === "failed") {
      this.banner = `session failed: ${snapshot.error ?? "unknown error"}`;
    } else {
      this.banner = null;
    }
    if (snapshot.status === "awaiting_labels" && this.batchEpisode !== snapshot.episode) {
      try {
        const batch = await this.client.getBatch(this.sessionId);
        this.batch = new BatchState(batch.items, { prefill: this.prefill });
        this.batchEpisode = snapshot.episode;
      } catch (error) {
        if (error instanceof ApiError && error.status === 409) {
          this.banner = "batch not available yet";
        } else {
          this.banner = `could not load batch: ${(error as Error).message}`;
        }
      }
    }
    return this.view();
  }

  /**
   * Submit one sentence's labels. Maps service errors to item states:
   * 409 locks the item (already labeled server-side), 422 shows the
   * validation message inline, network failures leave the item editable
   * for retry without losing the selections.
   */
  async submitItem(itemId: string): Promise<void> {
    if (!this.batch) throw new Error("no batch loaded");
    if (!this.batch.canSubmit(itemId)) {
      throw new Error(`item ${itemId} is not ready to submit`);
    }
    const payload = this.batch.payload(itemId);
    this.batch.markSubmitting(itemId);
    try {
      await this.client.submitLabels(this.sessionId, payload.id, payload.labels);
      this.batch.markSubmitted(itemId);
    } catch (error) {
      if (error instanceof ApiError && error.status === 409) {
        this.batch.markLocked(itemId, error.message);
      } else if (error instanceof ApiError && (error.status === 422 || error.status === 404)) {
        this.batch.markError(itemId, error.message);
      } else {
        this.batch.markError(itemId, `network failure, retry: ${(error as Error).message}`);
      }
      throw error;
    }
  }

  /** Poll until the service leaves the training state. */
  async waitWhileTraining(pollMs = 150, timeoutMs = 120000): Promise<ControllerView> {
    const deadline = Date.now() + timeoutMs;
    await this.refresh();
    while (this.status === "training") {
      if (Date.now() > deadline) throw new Error("training did not finish in time");
      await new Promise((resolve) => setTimeout(resolve, pollMs));
      await this.refresh();
    }
    return this.view();
  }

  labelSpan(itemId: string, start: number, end: number, label: Label): void {
    if (!this.batch) throw new Error("no batch loaded");
    this.batch.labelSpan({ itemId, start, end }, label);
  }
}
