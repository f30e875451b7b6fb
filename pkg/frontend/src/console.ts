/**
 * Orchestration: stream events into the session, render, submit guidance.
 *
 * The stream is consumed with resume-from-cursor reconnects; a rejected
 * submission (stale request, duplicate, malformed) surfaces a toast and
 * refreshes the session from a snapshot so the operator always sees the
 * service's view of the episode.
 */

import type { ServiceClient } from "./api.js";
import { serializeAction, type Action } from "./actions.js";
import { ConsoleSession, type EventFrame } from "./session.js";

export interface ConsoleView {
  render(session: ConsoleSession): void;
  toast(message: string): void;
}

export class EpisodeConsole {
  reconnectDelayMs = 500;
  private closed = false;

  constructor(
    private readonly client: ServiceClient,
    readonly session: ConsoleSession,
    private readonly view: ConsoleView,
  ) {}

  async start(): Promise<void> {
    await this.refresh();
    this.connect();
  }

  stop(): void {
    this.closed = true;
  }

  connect(): void {
    if (this.closed) {
      return;
    }
    const ws = this.client.openEvents(this.session.episodeId, this.session.cursor);
    ws.onmessage = (event) => {
      const frame = JSON.parse(event.data) as EventFrame;
      if (this.session.applyEvent(frame)) {
        this.view.render(this.session);
      }
    };
    ws.onclose = () => {
      if (!this.closed && !this.session.terminal) {
        setTimeout(() => this.connect(), this.reconnectDelayMs);
      }
    };
  }

  /** Pull a snapshot and re-render; the recovery path after any rejection. */
  async refresh(): Promise<void> {
    const snap = await this.client.getEpisode(this.session.episodeId);
    this.session.applySnapshot(snap);
    this.view.render(this.session);
  }

  /** Serialize and deliver guidance for the currently pending request. */
  async submit(action: Action): Promise<boolean> {
    const pending = this.session.pending;
    if (!pending) {
      this.view.toast("no pending intervention");
      return false;
    }
    const result = await this.client.intervene(
      this.session.episodeId,
      pending.requestId,
      serializeAction(action),
    );
    if (result.ok) {
      // the next card's events may already have landed; only clear our own
      if (this.session.pending?.requestId === pending.requestId) {
        this.session.pending = null;
      }
      this.view.render(this.session);
      return true;
    }
    this.view.toast(
      result.status === 409
        ? `request is stale (${result.detail || "already resolved"}); refreshing`
        : `submission rejected (${result.status}): ${result.detail}`,
    );
    await this.refresh();
    return false;
  }

  screenshotUrl(shotId: string): string {
    return this.client.screenshotUrl(this.session.episodeId, shotId);
  }
}
