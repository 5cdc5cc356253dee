/**
 * Browser entry point: DOM wiring for the assessment flow. One task at a
 * time: prompt and "ready to start", then live capture with a countdown
 * and backchannel playback, then done. A "synthetic stream" toggle runs
 * the whole flow without a microphone.
 */

import { startCapture, CaptureHandle } from "./capture.js";
import { ClipManifest, HtmlClipPlayer } from "./playback.js";
import { SessionClient, Transport } from "./session.js";
import { chunked, renderFor } from "./synthetic.js";
import { UiTaskState } from "./taskState.js";

interface TaskDef {
  task_id: string;
  label: string;
  duration_ms: number | null;
}

// One demo task per type.
const TASKS: TaskDef[] = [
  { task_id: "repeat", label: "Repeat the sentence", duration_ms: null },
  { task_id: "fluency", label: "Name as many fruits as you can in one minute", duration_ms: 60000 },
  { task_id: "share", label: "Tell us about a place you like", duration_ms: null },
];

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

function browserTransport(ws: WebSocket): Transport {
  ws.binaryType = "arraybuffer";
  let handler: ((data: Uint8Array) => void) | null = null;
  ws.onmessage = (ev) => handler?.(new Uint8Array(ev.data as ArrayBuffer));
  return {
    send: (data) => ws.send(data),
    close: () => ws.close(),
    onMessage: (cb) => {
      handler = cb;
    },
  };
}

class App {
  private client: SessionClient | null = null;
  private capture: CaptureHandle | null = null;
  private taskIndex = 0;
  private syntheticTimer: number | null = null;

  async connect(): Promise<void> {
    const manifest: ClipManifest = await (await fetch("clips/manifest.json")).json();
    const ws = new WebSocket(`ws://${location.host}/ws`);
    await new Promise<void>((resolve, reject) => {
      ws.onopen = () => resolve();
      ws.onerror = () => reject(new Error("websocket connect failed"));
    });
    this.client = new SessionClient(
      browserTransport(ws),
      new HtmlClipPlayer("."),
      manifest,
      {
        sessionId: `web-${Date.now()}`,
        onError: (code, detail) => this.banner(`${code}: ${detail}`),
      },
    );
    await this.client.hello();
    this.banner("connected");
    this.renderTask();
  }

  private task(): TaskDef {
    return TASKS[this.taskIndex];
  }

  private banner(text: string): void {
    el("status").textContent = text;
  }

  renderTask(): void {
    el("prompt").textContent = this.task().label;
    el("progress").textContent = `Task ${this.taskIndex + 1}/${TASKS.length}`;
    el("phase").textContent = "Ready to start";
    (el("countdown") as HTMLProgressElement).hidden = true;
  }

  replayPrompt(): void {
    const path = this.client?.manifest.prompts?.[this.task().task_id];
    if (path) {
      void new HtmlClipPlayer(".").play(path);
    }
  }

  async startAnswering(synthetic: boolean): Promise<void> {
    const client = this.client;
    if (!client) {
      return;
    }
    if (!synthetic) {
      try {
        this.capture = await startCapture((chunk) => client.sendAudio(chunk));
      } catch {
        // Mic denied: visible error, no start_task on the wire.
        this.banner("microphone permission denied");
        return;
      }
    }
    const state = client.startTask(this.task().task_id);
    el("phase").textContent = "Task in progress";
    const bar = el<HTMLProgressElement>("countdown");
    const duration = this.task().duration_ms;
    if (duration) {
      bar.hidden = false;
      bar.max = duration;
      bar.value = duration;
    }
    if (synthetic) {
      this.runSynthetic(client, duration ?? 20000);
    }
    this.watch(state, bar);
  }

  private runSynthetic(client: SessionClient, totalMs: number): void {
    const chunks = chunked(renderFor(totalMs));
    const pump = () => {
      const next = chunks.next();
      if (next.done || client.task?.phase !== "InProgress") {
        this.syntheticTimer = null;
        client.endTask();
        return;
      }
      client.sendAudio(next.value);
      this.syntheticTimer = window.setTimeout(pump, 20);
    };
    pump();
  }

  private watch(state: UiTaskState, bar: HTMLProgressElement): void {
    const render = () => {
      if (state.remainingMs !== null) {
        bar.value = state.remainingMs;
      }
      el("log").textContent = state.transcriptLog
        .slice(-12)
        .map((e) => `${(e.t_ms / 1000).toFixed(1)}s  ${e.text}`)
        .join("\n");
      if (state.phase === "Done") {
        this.stopAudio();
        el("phase").textContent = "Done";
        return;
      }
      window.setTimeout(render, 100);
    };
    render();
  }

  terminateTask(): void {
    this.client?.endTask();
    this.stopAudio();
  }

  nextTask(): void {
    this.terminateTask();
    this.taskIndex = (this.taskIndex + 1) % TASKS.length;
    this.renderTask();
  }

  private stopAudio(): void {
    this.capture?.stop();
    this.capture = null;
    if (this.syntheticTimer !== null) {
      clearTimeout(this.syntheticTimer);
      this.syntheticTimer = null;
    }
  }
}

const app = new App();
el("connect").addEventListener("click", () => void app.connect());
el("replay").addEventListener("click", () => app.replayPrompt());
el("start").addEventListener("click", () =>
  void app.startAnswering(el<HTMLInputElement>("synthetic").checked),
);
el("terminate").addEventListener("click", () => app.terminateTask());
el("next").addEventListener("click", () => app.nextTask());
