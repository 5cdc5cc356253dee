import { describe, expect, it } from "vitest";

import { UiTaskState } from "../src/taskState.js";

describe("task state machine", () => {
  it("advances ReadyToStart -> InProgress -> Done only", () => {
    const s = new UiTaskState("fluency");
    expect(s.phase).toBe("ReadyToStart");
    s.start();
    expect(s.phase).toBe("InProgress");
    s.finish();
    expect(s.phase).toBe("Done");
    expect(() => s.start()).toThrow();
  });

  it("terminate in Done is a no-op", () => {
    const s = new UiTaskState("t");
    s.start();
    s.finish();
    s.finish();
    expect(s.phase).toBe("Done");
  });

  it("countdown only registers while in progress", () => {
    const s = new UiTaskState("t");
    s.countdown(60000);
    expect(s.remainingMs).toBeNull();
    s.start();
    s.countdown(59000);
    expect(s.remainingMs).toBe(59000);
    s.finish();
    s.countdown(1000);
    expect(s.remainingMs).toBeNull();
  });

  it("transcript log keeps server-timestamp order", () => {
    const s = new UiTaskState("t");
    s.start();
    s.logEvent({ type: "event", kind: "UtteranceStart", t_ms: 0 });
    s.logEvent({ type: "event", kind: "UtteranceEnd", t_ms: 3000 });
    s.logBackchannel(
      { type: "backchannel", category: "RBC", clip_id: "rbc_00", t_ms: 3700 },
      "hmm",
    );
    s.logEvent({ type: "event", kind: "IntervalTick", t_ms: 3700 + 100, pause_ms: 800 });
    const ts = s.transcriptLog.map((e) => e.t_ms);
    expect(ts).toEqual([...ts].sort((a, b) => a - b));
    expect(s.transcriptLog[2].text).toBe("RBC: hmm");
  });
});
