/**
 * Console session state: folds the episode event stream into a timeline.
 *
 * Events arrive at-least-once; frames at or below the cursor are dropped,
 * so re-deliveries and reconnect overlaps render exactly once. At most one
 * intervention card is pending at a time.
 */

import type { Dims } from "./coords.js";

export interface EventFrame {
  seq: number;
  type: string;
  payload: Record<string, unknown>;
}

export interface TimelineStep {
  index: number;
  screenshotId: string;
  proposedAction?: string;
  confidence?: number;
  decision?: string;
  executedAction?: string;
  intervened?: boolean;
}

export interface PendingCard {
  requestId: string;
  stepIndex: number;
  screenshotId: string;
  dims: Dims;
  proposedAction: string;
  confidence: number;
}

export interface EpisodeSnapshot {
  episode_id: string;
  instruction: { id: string; text: string };
  gamma: number;
  status: string;
  history: Array<Record<string, unknown>>;
  pending_request: null | Record<string, unknown>;
  last_seq: number;
}

const LIVE_STATUSES = new Set(["RUNNING", "AWAITING_INTERVENTION"]);

export class ConsoleSession {
  readonly episodeId: string;
  cursor = 0;
  status = "RUNNING";
  gamma = 0;
  instructionText = "";
  steps: TimelineStep[] = [];
  pending: PendingCard | null = null;
  private current: TimelineStep | null = null;

  constructor(episodeId: string) {
    this.episodeId = episodeId;
  }

  get terminal(): boolean {
    return !LIVE_STATUSES.has(this.status);
  }

  /** Apply one stream frame; returns false for duplicates (seq <= cursor). */
  applyEvent(frame: EventFrame): boolean {
    if (frame.seq <= this.cursor) {
      return false;
    }
    this.cursor = frame.seq;
    const p = frame.payload;
    switch (frame.type) {
      case "step_started":
        this.current = {
          index: p.step_index as number,
          screenshotId: p.screenshot_id as string,
        };
        break;
      case "action_proposed":
        if (this.current) {
          this.current.proposedAction = p.action as string;
          this.current.confidence = p.confidence as number;
        }
        break;
      case "decision":
        if (this.current) {
          this.current.decision = p.verdict as string;
        }
        break;
      case "intervention_requested":
        this.status = "AWAITING_INTERVENTION";
        this.pending = {
          requestId: p.request_id as string,
          stepIndex: p.step_index as number,
          screenshotId: (p.screenshot_id as string) ?? this.current?.screenshotId ?? "",
          dims: (p.dims as Dims) ?? { width: 1, height: 1 },
          proposedAction: p.proposed_action as string,
          confidence: p.confidence as number,
        };
        break;
      case "action_executed":
        if (this.current) {
          this.current.executedAction = p.action as string;
          this.current.intervened = Boolean(p.intervened);
          this.steps.push(this.current);
          this.current = null;
        }
        this.pending = null;
        if (this.status === "AWAITING_INTERVENTION") {
          this.status = "RUNNING";
        }
        break;
      case "episode_finished":
        this.status = p.status as string;
        this.pending = null;
        break;
      default:
        break;
    }
    return true;
  }

  /** Reconcile with a GET snapshot (used after 409s and on reconnect). */
  applySnapshot(snap: EpisodeSnapshot): void {
    this.status = snap.status;
    this.gamma = snap.gamma;
    this.instructionText = snap.instruction.text;
    const pending = snap.pending_request;
    if (!pending) {
      this.pending = null;
    } else {
      this.pending = {
        requestId: pending.request_id as string,
        stepIndex: pending.step_index as number,
        screenshotId: pending.screenshot_id as string,
        dims: pending.dims as Dims,
        proposedAction: pending.proposed_action as string,
        confidence: pending.confidence as number,
      };
    }
    if (snap.history.length > this.steps.length) {
      this.steps = snap.history.map((h) => ({
        index: h.index as number,
        screenshotId: h.screenshot_id as string,
        proposedAction: h.proposed_action as string | undefined,
        confidence: h.confidence as number | undefined,
        decision: h.decision as string | undefined,
        executedAction: h.executed_action as string | undefined,
        intervened: h.intervened as boolean | undefined,
      }));
      this.current = null;
    }
  }
}
