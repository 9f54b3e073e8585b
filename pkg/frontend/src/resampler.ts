// Streaming linear resampler from the capture device rate to 16 kHz.
// Keeps fractional read position across pushes so chunk boundaries on the
// device side never shift the output grid.

export class LinearResampler {
  private readonly step: number;
  private buffer = new Float32Array(0);
  private position = 0; // fractional index into `buffer`

  constructor(fromRate: number, private readonly toRate = 16000) {
    if (fromRate <= 0 || toRate <= 0) throw new Error('rates must be positive');
    this.step = fromRate / toRate;
  }

  get passthrough(): boolean {
    return this.step === 1;
  }

  push(samples: Float32Array): Float32Array {
    if (this.passthrough && this.buffer.length === 0) return samples.slice();

    const merged = new Float32Array(this.buffer.length + samples.length);
    merged.set(this.buffer);
    merged.set(samples, this.buffer.length);

    const out: number[] = [];
    let pos = this.position;
    while (pos + 1 < merged.length) {
      const i = Math.floor(pos);
      const frac = pos - i;
      out.push(merged[i] * (1 - frac) + merged[i + 1] * frac);
      pos += this.step;
    }

    // Drop fully consumed input, keeping one sample of history for the
    // next interpolation.
    const keepFrom = Math.max(0, Math.floor(pos) - 1);
    this.buffer = merged.slice(keepFrom);
    this.position = pos - keepFrom;
    return Float32Array.from(out);
  }
}
