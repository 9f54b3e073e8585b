// Playback-side jitter buffer: primes to a fixed depth before playing, then
// hands out frames in order. A pop on an empty buffer during playback counts
// an underrun and yields silence; arriving frames simply resume the queue,
// so order is never lost.

import { CHUNK_SAMPLES } from './protocol.js';

export class JitterBuffer {
  private queue: Int16Array[] = [];
  private started = false;
  underruns = 0;

  constructor(private readonly depth = 2) {}

  push(frame: Int16Array): void {
    this.queue.push(frame);
  }

  /** Next frame to play, or silence if the buffer ran dry. */
  pop(): Int16Array {
    if (!this.started) {
      if (this.queue.length < this.depth) return new Int16Array(CHUNK_SAMPLES);
      this.started = true;
    }
    const frame = this.queue.shift();
    if (frame === undefined) {
      this.underruns += 1;
      return new Int16Array(CHUNK_SAMPLES);
    }
    return frame;
  }

  get level(): number {
    return this.queue.length;
  }

  get isPlaying(): boolean {
    return this.started;
  }
}
