/**
 * Windowed-sinc resampler down to the engine's canonical 16 kHz.
 *
 * Browsers capture at 44.1 or 48 kHz; every output sample is a dot
 * product of the input with a Hamming-windowed sinc kernel centred at the
 * corresponding input position, with the cutoff at 45% of the output rate
 * to keep aliases out of the band.
 */
export const TARGET_RATE = 16000;
const HALF_TAPS = 24; // kernel support: 2*HALF_TAPS+1 input samples
function kernel(offset, ratio) {
    // Normalized cutoff relative to the input rate.
    const cutoff = 0.45 / ratio;
    if (offset === 0) {
        return 2 * cutoff;
    }
    const x = Math.PI * offset;
    const sinc = Math.sin(2 * cutoff * x) / x;
    const window = 0.54 + 0.46 * Math.cos(x / HALF_TAPS); // Hamming
    return sinc * window;
}
export class Downsampler {
    constructor(inputRate) {
        this.buffer = new Float32Array(0);
        this.consumed = 0; // input samples dropped from the front
        this.nextOutput = 0; // output sample index
        if (inputRate < TARGET_RATE) {
            throw new Error(`input rate ${inputRate} below target ${TARGET_RATE}`);
        }
        this.inputRate = inputRate;
        this.ratio = inputRate / TARGET_RATE;
    }
    /** Push captured samples; returns whatever 16 kHz output is ready. */
    push(samples) {
        const joined = new Float32Array(this.buffer.length + samples.length);
        joined.set(this.buffer);
        joined.set(samples, this.buffer.length);
        this.buffer = joined;
        const out = [];
        for (;;) {
            const centre = this.nextOutput * this.ratio;
            if (centre + HALF_TAPS >= this.consumed + this.buffer.length) {
                break;
            }
            out.push(this.sampleAt(centre));
            this.nextOutput += 1;
        }
        const keepFrom = Math.floor(this.nextOutput * this.ratio) - HALF_TAPS;
        if (keepFrom > this.consumed) {
            this.buffer = this.buffer.slice(keepFrom - this.consumed);
            this.consumed = keepFrom;
        }
        return Float32Array.from(out);
    }
    sampleAt(centre) {
        const base = Math.floor(centre);
        const frac = centre - base;
        let acc = 0;
        for (let k = -HALF_TAPS; k <= HALF_TAPS; k++) {
            const idx = base + k - this.consumed;
            if (idx < 0 || idx >= this.buffer.length) {
                continue;
            }
            acc += this.buffer[idx] * kernel(k - frac, this.ratio);
        }
        return acc;
    }
}
