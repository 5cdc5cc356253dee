/**
 * Session client: speaks the engine's wire protocol over a transport,
 * drives the per-task UI state machine, streams 16 kHz PCM chunks with a
 * gapless strictly-increasing sequence number, and turns backchannel
 * messages into exactly one clip playback plus one playback_done each.
 */

import {
  BackchannelMsg,
  InboundControl,
  decodeMessage,
  encodeAudio,
  encodeControl,
  floatToPcm16,
} from "./protocol.js";
import { ClipManifest, ClipPlayer, clipById } from "./playback.js";
import { UiTaskState } from "./taskState.js";

export interface Transport {
  send(data: Uint8Array): void;
  close(): void;
  onMessage(cb: (data: Uint8Array) => void): void;
}

export interface SessionClientOptions {
  sessionId: string;
  configRef?: string;
  /** Called with the wall-clock ms between receiving a backchannel
   * message and starting its clip playback. */
  onPlaybackLatency?: (ms: number) => void;
  onError?: (code: string, detail: string) => void;
  now?: () => number;
}

export class SessionClient {
  readonly manifest: ClipManifest;
  task: UiTaskState | null = null;
  playbackCount = 0;
  playbackDoneCount = 0;

  private readonly transport: Transport;
  private readonly player: ClipPlayer;
  private readonly opts: SessionClientOptions;
  private readonly now: () => number;
  private seq = 0;
  private readyResolve: (() => void) | null = null;
  private idleResolve: (() => void) | null = null;
  private playing = 0;

  constructor(
    transport: Transport,
    player: ClipPlayer,
    manifest: ClipManifest,
    opts: SessionClientOptions,
  ) {
    this.transport = transport;
    this.player = player;
    this.manifest = manifest;
    this.opts = opts;
    this.now = opts.now ?? (() => Date.now());
    transport.onMessage((data) => this.dispatch(data));
  }

  hello(): Promise<void> {
    const ready = new Promise<void>((resolve) => {
      this.readyResolve = resolve;
    });
    this.transport.send(
      encodeControl({
        type: "hello",
        session_id: this.opts.sessionId,
        config_ref: this.opts.configRef ?? "default",
      }),
    );
    return ready;
  }

  startTask(taskId: string): UiTaskState {
    const state = new UiTaskState(taskId);
    this.task = state;
    this.transport.send(encodeControl({ type: "start_task", task_id: taskId }));
    state.start();
    return state;
  }

  /** Stream one chunk of canonical-rate samples. */
  sendAudio(samples: Float32Array): void {
    this.seq += 1;
    this.transport.send(encodeAudio(this.seq, floatToPcm16(samples)));
  }

  endTask(): void {
    if (!this.task || this.task.phase === "Done") {
      return;
    }
    this.transport.send(encodeControl({ type: "end_task" }));
    this.task.finish();
  }

  bye(): void {
    this.transport.send(encodeControl({ type: "bye" }));
    this.transport.close();
  }

  /** Resolves once every received backchannel has finished playback. */
  playbackIdle(): Promise<void> {
    if (this.playing === 0) {
      return Promise.resolve();
    }
    return new Promise((resolve) => {
      this.idleResolve = resolve;
    });
  }

  private dispatch(data: Uint8Array): void {
    const decoded = decodeMessage(data);
    if (decoded.kind !== "json") {
      return; // the server never sends audio frames
    }
    this.handleControl(decoded.msg);
  }

  private handleControl(msg: InboundControl): void {
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

  private async onBackchannel(msg: BackchannelMsg): Promise<void> {
    const received = this.now();
    const clip = clipById(this.manifest, msg.clip_id);
    this.playing += 1;
    try {
      if (clip === undefined) {
        // Fail open: keep the session going, release the server hold.
        console.warn(`unknown clip ${msg.clip_id}`);
      } else {
        this.task?.logBackchannel(msg, clip.transcript);
        this.playbackCount += 1;
        this.opts.onPlaybackLatency?.(this.now() - received);
        await this.player.play(clip.path);
      }
    } catch (err) {
      console.warn(`playback failed for ${msg.clip_id}:`, err);
    } finally {
      this.playing -= 1;
      this.transport.send(
        encodeControl({ type: "playback_done", clip_id: msg.clip_id }),
      );
      this.playbackDoneCount += 1;
      if (this.playing === 0) {
        this.idleResolve?.();
        this.idleResolve = null;
      }
    }
  }
}
