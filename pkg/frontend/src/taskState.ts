/**
 * Per-task UI state machine. Phases only ever advance
 * ReadyToStart -> InProgress -> Done; the countdown exists only while the
 * task is in progress, and the transcript log keeps speech events and
 * backchannels in server-timestamp order.
 */

import type { BackchannelMsg, SpeechEventMsg } from "./protocol.js";

export type Phase = "ReadyToStart" | "InProgress" | "Done";

export interface LogEntry {
  t_ms: number;
  text: string;
  kind: "event" | "backchannel";
}

export class UiTaskState {
  readonly taskId: string;
  phase: Phase = "ReadyToStart";
  remainingMs: number | null = null;
  transcriptLog: LogEntry[] = [];
  lastError: string | null = null;

  constructor(taskId: string) {
    this.taskId = taskId;
  }

  start(): void {
    if (this.phase !== "ReadyToStart") {
      throw new Error(`cannot start from ${this.phase}`);
    }
    this.phase = "InProgress";
  }

  finish(): void {
    if (this.phase === "Done") {
      return; // terminate in Done is a no-op
    }
    this.phase = "Done";
    this.remainingMs = null;
  }

  countdown(remainingMs: number): void {
    if (this.phase !== "InProgress") {
      return; // countdown only renders while in progress
    }
    this.remainingMs = remainingMs;
  }

  logEvent(ev: SpeechEventMsg): void {
    this.append({
      t_ms: ev.t_ms,
      kind: "event",
      text:
        ev.kind === "IntervalTick"
          ? `pause ${ev.pause_ms} ms`
          : ev.kind,
    });
  }

  logBackchannel(msg: BackchannelMsg, transcript: string): void {
    this.append({
      t_ms: msg.t_ms,
      kind: "backchannel",
      text: `${msg.category}: ${transcript}`,
    });
  }

  private append(entry: LogEntry): void {
    // Server timestamps arrive ordered; guard anyway so the view stays
    // sorted even if a late message slips through.
    const last = this.transcriptLog[this.transcriptLog.length - 1];
    if (last && entry.t_ms < last.t_ms) {
      const i = this.transcriptLog.findIndex((e) => e.t_ms > entry.t_ms);
      this.transcriptLog.splice(i === -1 ? this.transcriptLog.length : i, 0, entry);
      return;
    }
    this.transcriptLog.push(entry);
  }
}
