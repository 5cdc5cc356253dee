/**
 * Browser microphone capture: AudioWorklet posts device-rate blocks to
 * the main thread, where the windowed-sinc downsampler produces canonical
 * 16 kHz chunks for the session client.
 */

import { Downsampler } from "./downsample.js";

export interface CaptureHandle {
  stop(): void;
}

export async function startCapture(
  onChunk: (samples: Float32Array) => void,
  workletUrl = "js/worklet.js",
): Promise<CaptureHandle> {
  const stream = await navigator.mediaDevices.getUserMedia({
    audio: { channelCount: 1, echoCancellation: true },
  });
  const ctx = new AudioContext();
  await ctx.audioWorklet.addModule(workletUrl);
  const source = ctx.createMediaStreamSource(stream);
  const node = new AudioWorkletNode(ctx, "pcm-forward");
  const down = new Downsampler(ctx.sampleRate);
  node.port.onmessage = (ev: MessageEvent<Float32Array>) => {
    const out = down.push(ev.data);
    if (out.length) {
      onChunk(out);
    }
  };
  source.connect(node);
  node.connect(ctx.destination);
  return {
    stop() {
      node.disconnect();
      source.disconnect();
      stream.getTracks().forEach((t) => t.stop());
      void ctx.close();
    },
  };
}
