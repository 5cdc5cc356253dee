/**
 * Browser entry point: DOM wiring for the assessment flow. One task at a
 * time: prompt and "ready to start", then live capture with a countdown
 * and backchannel playback, then done. A "synthetic stream" toggle runs
 * the whole flow without a microphone.
 */
import { startCapture } from "./capture.js";
import { HtmlClipPlayer } from "./playback.js";
import { SessionClient } from "./session.js";
import { chunked, renderFor } from "./synthetic.js";
// One demo task per type.
const TASKS = [
    { task_id: "repeat", label: "Repeat the sentence", duration_ms: null },
    { task_id: "fluency", label: "Name as many fruits as you can in one minute", duration_ms: 60000 },
    { task_id: "share", label: "Tell us about a place you like", duration_ms: null },
];
function el(id) {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
function browserTransport(ws) {
    ws.binaryType = "arraybuffer";
    let handler = null;
    ws.onmessage = (ev) => handler?.(new Uint8Array(ev.data));
    return {
        send: (data) => ws.send(data),
        close: () => ws.close(),
        onMessage: (cb) => {
            handler = cb;
        },
    };
}
class App {
    constructor() {
        this.client = null;
        this.capture = null;
        this.taskIndex = 0;
        this.syntheticTimer = null;
    }
    async connect() {
        const manifest = await (await fetch("clips/manifest.json")).json();
        const ws = new WebSocket(`ws://${location.host}/ws`);
        await new Promise((resolve, reject) => {
            ws.onopen = () => resolve();
            ws.onerror = () => reject(new Error("websocket connect failed"));
        });
        this.client = new SessionClient(browserTransport(ws), new HtmlClipPlayer("."), manifest, {
            sessionId: `web-${Date.now()}`,
            onError: (code, detail) => this.banner(`${code}: ${detail}`),
        });
        await this.client.hello();
        this.banner("connected");
        this.renderTask();
    }
    task() {
        return TASKS[this.taskIndex];
    }
    banner(text) {
        el("status").textContent = text;
    }
    renderTask() {
        el("prompt").textContent = this.task().label;
        el("progress").textContent = `Task ${this.taskIndex + 1}/${TASKS.length}`;
        el("phase").textContent = "Ready to start";
        el("countdown").hidden = true;
    }
    replayPrompt() {
        const path = this.client?.manifest.prompts?.[this.task().task_id];
        if (path) {
            void new HtmlClipPlayer(".").play(path);
        }
    }
    async startAnswering(synthetic) {
        const client = this.client;
        if (!client) {
            return;
        }
        if (!synthetic) {
            try {
                this.capture = await startCapture((chunk) => client.sendAudio(chunk));
            }
            catch {
                // Mic denied: visible error, no start_task on the wire.
                this.banner("microphone permission denied");
                return;
            }
        }
        const state = client.startTask(this.task().task_id);
        el("phase").textContent = "Task in progress";
        const bar = el("countdown");
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
    runSynthetic(client, totalMs) {
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
    watch(state, bar) {
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
    terminateTask() {
        this.client?.endTask();
        this.stopAudio();
    }
    nextTask() {
        this.terminateTask();
        this.taskIndex = (this.taskIndex + 1) % TASKS.length;
        this.renderTask();
    }
    stopAudio() {
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
el("start").addEventListener("click", () => void app.startAnswering(el("synthetic").checked));
el("terminate").addEventListener("click", () => app.terminateTask());
el("next").addEventListener("click", () => app.nextTask());
