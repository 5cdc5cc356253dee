/**
 * Mic-less synthetic audio source: a repeating schedule of falling-pitch
 * utterances and long silences at the canonical rate, chunked like live
 * capture. Drives the loopback mode and the end-to-end tests without any
 * audio hardware.
 */
import { TARGET_RATE } from "./downsample.js";
export function defaultSchedule(totalMs) {
    const segments = [];
    let t = 0;
    let i = 0;
    while (t < totalMs) {
        const utterance = {
            kind: "tone",
            durationMs: 1200,
            startHz: 220 - (i % 3) * 20,
            endHz: 140 - (i % 3) * 10,
            amplitude: 0.5,
        };
        const pause = { kind: "silence", durationMs: 7800 };
        segments.push(utterance, pause);
        t += utterance.durationMs + pause.durationMs;
        i += 1;
    }
    return segments;
}
export function renderSchedule(segments) {
    const total = segments.reduce((n, s) => n + (TARGET_RATE * s.durationMs) / 1000, 0);
    const out = new Float32Array(total);
    let offset = 0;
    for (const seg of segments) {
        const n = (TARGET_RATE * seg.durationMs) / 1000;
        if (seg.kind === "tone") {
            const f0 = seg.startHz ?? 200;
            const f1 = seg.endHz ?? f0;
            const amp = seg.amplitude ?? 0.5;
            let phase = 0;
            for (let i = 0; i < n; i++) {
                const f = f0 + ((f1 - f0) * i) / n;
                phase += (2 * Math.PI * f) / TARGET_RATE;
                out[offset + i] = amp * Math.sin(phase);
            }
        }
        offset += n;
    }
    return out;
}
/** Render the default schedule truncated to exactly totalMs of audio. */
export function renderFor(totalMs) {
    const samples = renderSchedule(defaultSchedule(totalMs));
    return samples.subarray(0, (TARGET_RATE * totalMs) / 1000);
}
/** Split rendered audio into capture-sized chunks (default 20 ms). */
export function* chunked(samples, chunkMs = 20) {
    const chunk = (TARGET_RATE * chunkMs) / 1000;
    for (let i = 0; i < samples.length; i += chunk) {
        yield samples.subarray(i, Math.min(i + chunk, samples.length));
    }
}
