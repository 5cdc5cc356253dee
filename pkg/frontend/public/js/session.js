/**
 * Session client: speaks the engine's wire protocol over a transport,
 * drives the per-task UI state machine, streams 16 kHz PCM chunks with a
 * gapless strictly-increasing sequence number, and turns backchannel
 * messages into exactly one clip playback plus one playback_done each.
 */
import { decodeMessage, encodeAudio, encodeControl, floatToPcm16, } from "./protocol.js";
import { clipById } from "./playback.js";
import { UiTaskState } from "./taskState.js";
export class SessionClient {
    constructor(transport, player, manifest, opts) {
        this.task = null;
        this.playbackCount = 0;
        this.playbackDoneCount = 0;
        this.seq = 0;
        this.readyResolve = null;
        this.idleResolve = null;
        this.playing = 0;
        this.transport = transport;
        this.player = player;
        this.manifest = manifest;
        this.opts = opts;
        this.now = opts.now ?? (() => Date.now());
        transport.onMessage((data) => this.dispatch(data));
    }
    hello() {
        const ready = new Promise((resolve) => {
            this.readyResolve = resolve;
        });
        this.transport.send(encodeControl({
            type: "hello",
            session_id: this.opts.sessionId,
            config_ref: this.opts.configRef ?? "default",
        }));
        return ready;
    }
    startTask(taskId) {
        const state = new UiTaskState(taskId);
        this.task = state;
        this.transport.send(encodeControl({ type: "start_task", task_id: taskId }));
        state.start();
        return state;
    }
    /** Stream one chunk of canonical-rate samples. */
    sendAudio(samples) {
        this.seq += 1;
        this.transport.send(encodeAudio(this.seq, floatToPcm16(samples)));
    }
    endTask() {
        if (!this.task || this.task.phase === "Done") {
            return;
        }
        this.transport.send(encodeControl({ type: "end_task" }));
        this.task.finish();
    }
    bye() {
        this.transport.send(encodeControl({ type: "bye" }));
        this.transport.close();
    }
    /** Resolves once every received backchannel has finished playback. */
    playbackIdle() {
        if (this.playing === 0) {
            return Promise.resolve();
        }
        return new Promise((resolve) => {
            this.idleResolve = resolve;
        });
    }
    dispatch(data) {
        const decoded = decodeMessage(data);
        if (decoded.kind !== "json") {
            return; // the server never sends audio frames
        }
        this.handleControl(decoded.msg);
    }
    handleControl(msg) {
        switch (msg.type) {
            case "ready":
                this.readyResolve?.();
                this.readyResolve = null;
                break;
            case "event":
                this.task?.logEvent(msg);
                break;
            case "task_state":
                if (this.task) {
                    this.task.countdown(msg.remaining_ms);
                    if (msg.remaining_ms <= 0 && this.task.phase === "InProgress") {
                        this.endTask(); // countdown expiry ends the recording
                    }
                }
                break;
            case "backchannel":
                void this.onBackchannel(msg);
                break;
            case "error":
                if (this.task) {
                    this.task.lastError = `${msg.code}: ${msg.detail}`;
                }
                this.opts.onError?.(msg.code, msg.detail);
                break;
        }
    }
    async onBackchannel(msg) {
        const received = this.now();
        const clip = clipById(this.manifest, msg.clip_id);
        this.playing += 1;
        try {
            if (clip === undefined) {
                // Fail open: keep the session going, release the server hold.
                console.warn(`unknown clip ${msg.clip_id}`);
            }
            else {
                this.task?.logBackchannel(msg, clip.transcript);
                this.playbackCount += 1;
                this.opts.onPlaybackLatency?.(this.now() - received);
                await this.player.play(clip.path);
            }
        }
        catch (err) {
            console.warn(`playback failed for ${msg.clip_id}:`, err);
        }
        finally {
            this.playing -= 1;
            this.transport.send(encodeControl({ type: "playback_done", clip_id: msg.clip_id }));
            this.playbackDoneCount += 1;
            if (this.playing === 0) {
                this.idleResolve?.();
                this.idleResolve = null;
            }
        }
    }
}
