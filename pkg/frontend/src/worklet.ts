/**
 * AudioWorklet processor: forwards raw capture blocks (mono channel 0,
 * device rate) to the main thread, which owns downsampling and framing.
 * Compiled standalone; loaded via audioWorklet.addModule.
 */

declare class AudioWorkletProcessor {
  readonly port: MessagePort;
}

declare function registerProcessor(
  name: string,
  ctor: new () => AudioWorkletProcessor,
): void;

class PcmForwardProcessor extends AudioWorkletProcessor {
  process(inputs: Float32Array[][]): boolean {
    const channel = inputs[0]?.[0];
    if (channel && channel.length) {
      const copy = new Float32Array(channel.length);
      copy.set(channel);
      this.port.postMessage(copy, [copy.buffer]);
    }
    return true;
  }
}

registerProcessor("pcm-forward", PcmForwardProcessor);

export {};
