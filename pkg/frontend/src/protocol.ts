/**
 * Wire protocol codec, WebSocket flavour: each protocol message is one
 * binary frame of tag byte + payload. Control frames carry UTF-8 JSON;
 * audio frames carry a big-endian u32 sequence number followed by raw
 * PCM16LE samples. The byte layout matches the server's length-prefixed
 * TCP framing with the length removed (WS frames carry their own length).
 */

export const TAG_JSON = 0x4a;
export const TAG_AUDIO = 0x41;

export interface HelloMsg {
  type: "hello";
  session_id: string;
  config_ref: string;
  /** Reserved (e.g. demographics); the server stores but never consumes it. */
  metadata?: Record<string, string>;
}

export interface StartTaskMsg {
  type: "start_task";
  task_id: string;
}

export interface EndTaskMsg {
  type: "end_task";
}

export interface PlaybackDoneMsg {
  type: "playback_done";
  clip_id: string;
}

export interface ByeMsg {
  type: "bye";
}

export type OutboundControl =
  | HelloMsg
  | StartTaskMsg
  | EndTaskMsg
  | PlaybackDoneMsg
  | ByeMsg;

export interface ReadyMsg {
  type: "ready";
  session_id: string;
}

export interface SpeechEventMsg {
  type: "event";
  kind: "UtteranceStart" | "UtteranceEnd" | "IntervalTick";
  t_ms: number;
  utterance_span?: [number, number];
  pause_ms?: number;
}

export interface BackchannelMsg {
  type: "backchannel";
  category: "RBC" | "PBC";
  clip_id: string;
  t_ms: number;
}

export interface TaskStateMsg {
  type: "task_state";
  remaining_ms: number;
}

export interface ErrorMsg {
  type: "error";
  code: string;
  detail: string;
}

export type InboundControl =
  | ReadyMsg
  | SpeechEventMsg
  | BackchannelMsg
  | TaskStateMsg
  | ErrorMsg;

const encoder = new TextEncoder();
const decoder = new TextDecoder();

export function encodeControl(msg: OutboundControl): Uint8Array {
  const body = encoder.encode(JSON.stringify(msg));
  const out = new Uint8Array(1 + body.length);
  out[0] = TAG_JSON;
  out.set(body, 1);
  return out;
}

/** PCM samples must already be 16 kHz mono int16. */
export function encodeAudio(seq: number, pcm: Int16Array): Uint8Array {
  const out = new Uint8Array(5 + pcm.length * 2);
  const view = new DataView(out.buffer);
  out[0] = TAG_AUDIO;
  view.setUint32(1, seq, false);
  for (let i = 0; i < pcm.length; i++) {
    view.setInt16(5 + 2 * i, pcm[i], true);
  }
  return out;
}

export type Decoded =
  | { kind: "json"; msg: InboundControl }
  | { kind: "audio"; seq: number; pcm: Int16Array };

export function decodeMessage(data: Uint8Array): Decoded {
  if (data.length === 0) {
    throw new Error("empty protocol message");
  }
  const tag = data[0];
  if (tag === TAG_JSON) {
    return { kind: "json", msg: JSON.parse(decoder.decode(data.subarray(1))) };
  }
  if (tag === TAG_AUDIO) {
    if (data.length < 5) {
      throw new Error("short audio message");
    }
    const view = new DataView(data.buffer, data.byteOffset);
    const seq = view.getUint32(1, false);
    const n = (data.length - 5) >> 1;
    const pcm = new Int16Array(n);
    for (let i = 0; i < n; i++) {
      pcm[i] = view.getInt16(5 + 2 * i, true);
    }
    return { kind: "audio", seq, pcm };
  }
  throw new Error(`unknown protocol tag 0x${tag.toString(16)}`);
}

/** Float samples in [-1, 1] to PCM16, matching the server's scaling. */
export function floatToPcm16(samples: Float32Array): Int16Array {
  const out = new Int16Array(samples.length);
  for (let i = 0; i < samples.length; i++) {
    const v = Math.max(-1, Math.min(1, samples[i]));
    out[i] = Math.max(-32768, Math.min(32767, Math.round(v * 32768)));
  }
  return out;
}
