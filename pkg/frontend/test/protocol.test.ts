import { describe, expect, it } from "vitest";

import {
  TAG_AUDIO,
  TAG_JSON,
  decodeMessage,
  encodeAudio,
  encodeControl,
  floatToPcm16,
} from "../src/protocol.js";

describe("protocol codec", () => {
  it("control messages are tag + JSON utf-8", () => {
    const msg = { type: "hello", session_id: "s1", config_ref: "default" } as const;
    const data = encodeControl(msg);
    expect(data[0]).toBe(TAG_JSON);
    expect(JSON.parse(new TextDecoder().decode(data.subarray(1)))).toEqual(msg);
    const decoded = decodeMessage(data);
    expect(decoded).toEqual({ kind: "json", msg });
  });

  it("audio messages carry big-endian seq and little-endian pcm", () => {
    const pcm = new Int16Array([0, 1, -1, 32767, -32768]);
    const data = encodeAudio(0x01020304, pcm);
    expect(data[0]).toBe(TAG_AUDIO);
    expect(Array.from(data.subarray(1, 5))).toEqual([1, 2, 3, 4]);
    // PCM16LE: 1 -> 01 00, -1 -> ff ff
    expect(Array.from(data.subarray(5, 9))).toEqual([0, 0, 1, 0]);
    const decoded = decodeMessage(data);
    if (decoded.kind !== "audio") throw new Error("expected audio");
    expect(decoded.seq).toBe(0x01020304);
    expect(Array.from(decoded.pcm)).toEqual(Array.from(pcm));
  });

  it("float conversion matches the server scaling", () => {
    const pcm = floatToPcm16(new Float32Array([0, 0.5, -0.5, 1, -1, 2, -2]));
    expect(Array.from(pcm)).toEqual([0, 16384, -16384, 32767, -32768, 32767, -32768]);
  });

  it("rejects unknown tags and empty frames", () => {
    expect(() => decodeMessage(new Uint8Array([0xff, 1]))).toThrow(/unknown/);
    expect(() => decodeMessage(new Uint8Array([]))).toThrow(/empty/);
  });
});
