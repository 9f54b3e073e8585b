// Runs on the audio thread: plays samples pushed from the main thread and
// asks for more when its reserve drops below one frame. Starved output is
// silence; the main-thread jitter buffer counts the underruns.

const FRAME = 240;

class PlaybackProcessor extends AudioWorkletProcessor {
  private queue: Float32Array[] = [];
  private offset = 0;
  private pending = 0;

  constructor() {
    super();
    this.port.onmessage = (ev: MessageEvent) => {
      this.queue.push(ev.data as Float32Array);
      this.pending -= 1;
    };
  }

  private buffered(): number {
    let total = -this.offset;
    for (const q of this.queue) total += q.length;
    return total;
  }

  process(_inputs: Float32Array[][], outputs: Float32Array[][]): boolean {
    const out = outputs[0]?.[0];
    if (!out) return true;
    let filled = 0;
    while (filled < out.length && this.queue.length > 0) {
      const head = this.queue[0];
      const n = Math.min(out.length - filled, head.length - this.offset);
      out.set(head.subarray(this.offset, this.offset + n), filled);
      filled += n;
      this.offset += n;
      if (this.offset === head.length) {
        this.queue.shift();
        this.offset = 0;
      }
    }
    for (; filled < out.length; filled++) out[filled] = 0;
    if (this.buffered() < FRAME && this.pending <= 0) {
      this.pending += 1;
      this.port.postMessage({ need: 1 });
    }
    return true;
  }
}

registerProcessor('playback', PlaybackProcessor);
