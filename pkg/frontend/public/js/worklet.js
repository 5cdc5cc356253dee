/**
 * AudioWorklet processor: forwards raw capture blocks (mono channel 0,
 * device rate) to the main thread, which owns downsampling and framing.
 * Compiled standalone; loaded via audioWorklet.addModule.
 */
class PcmForwardProcessor extends AudioWorkletProcessor {
    process(inputs) {
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
