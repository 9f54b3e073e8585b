// Accumulates 16 kHz float samples and emits fixed 240-sample wire frames.
// The client-side protocol invariant lives here: nothing other than
// 480-byte frames ever leaves.

import { CHUNK_SAMPLES, encodeFrame, floatToS16 } from './protocol.js';

export class FrameChunker {
  private pending = new Float32Array(0);

  /** Feed captured samples; returns zero or more ready wire frames. */
  push(samples: Float32Array): ArrayBuffer[] {
    const merged = new Float32Array(this.pending.length + samples.length);
    merged.set(this.pending);
    merged.set(samples, this.pending.length);

    const frames: ArrayBuffer[] = [];
    let offset = 0;
    while (merged.length - offset >= CHUNK_SAMPLES) {
      frames.push(encodeFrame(floatToS16(merged.subarray(offset, offset + CHUNK_SAMPLES))));
      offset += CHUNK_SAMPLES;
    }
    this.pending = merged.slice(offset);
    return frames;
  }

  get buffered(): number {
    return this.pending.length;
  }
}
