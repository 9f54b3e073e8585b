// Minimal local echo server speaking the conversion service's wire protocol:
// single active session, a speaker catalog, audio frames echoed back as the
// "conversion". Used for loopback testing of the client without a backend.

import { FRAME_BYTES } from './protocol.js';
import { Transport, WireData } from './transport.js';

export interface EchoOptions {
  speakers?: string[];
  /** Frames to withhold (then release) after this many echoed frames;
      simulates a server stall. */
  stallAfter?: number;
  stallFrames?: number;
  /** Start the client in the queue at this position. */
  queueAt?: number;
}

export class EchoServer {
  framesSeen = 0;
  selected: string | null = null;
  private readonly speakers: Set<string>;
  private held: ArrayBuffer[] = [];
  private stalledLeft: number;

  constructor(private readonly conn: Transport, private readonly opts: EchoOptions = {}) {
    this.speakers = new Set(opts.speakers ?? ['p001', 'p002']);
    this.stalledLeft = 0;
    conn.onMessage((data) => this.handle(data));
    if (opts.queueAt !== undefined) {
      conn.send(JSON.stringify({ type: 'queue', position: opts.queueAt }));
    } else {
      conn.send(JSON.stringify({ type: 'active' }));
    }
  }

  promote(): void {
    this.conn.send(JSON.stringify({ type: 'active' }));
  }

  expire(): void {
    this.conn.send(JSON.stringify({ type: 'expired' }));
    this.conn.close();
  }

  private handle(data: WireData): void {
    if (typeof data === 'string') {
      this.handleControl(data);
      return;
    }
    if (data.byteLength !== FRAME_BYTES) {
      this.conn.send(
        JSON.stringify({ type: 'error', reason: 'bad_frame_size', got: data.byteLength })
      );
      this.conn.close();
      return;
    }
    if (this.selected === null) {
      this.conn.send(JSON.stringify({ type: 'error', reason: 'no_speaker' }));
      return;
    }
    this.framesSeen += 1;
    const { stallAfter, stallFrames = 0 } = this.opts;
    if (stallAfter !== undefined && this.framesSeen === stallAfter) {
      this.stalledLeft = stallFrames;
    }
    if (this.stalledLeft > 0) {
      this.held.push(data);
      this.stalledLeft -= 1;
      if (this.stalledLeft === 0) {
        for (const frame of this.held) this.conn.send(frame);
        this.held = [];
      }
      return;
    }
    this.conn.send(data);
  }

  private handleControl(text: string): void {
    let msg: { type?: string; id?: string };
    try {
      msg = JSON.parse(text);
    } catch {
      this.conn.send(JSON.stringify({ type: 'error', reason: 'bad_message' }));
      return;
    }
    switch (msg.type) {
      case 'hello':
        this.conn.send(JSON.stringify({ type: 'active' }));
        break;
      case 'select_speaker':
        if (msg.id !== undefined && this.speakers.has(msg.id)) {
          this.selected = msg.id;
          this.conn.send(JSON.stringify({ type: 'speaker', id: msg.id }));
        } else {
          this.conn.send(JSON.stringify({ type: 'error', reason: 'unknown_speaker' }));
        }
        break;
      case 'stats':
        this.conn.send(JSON.stringify({ type: 'stats', frames_in: this.framesSeen }));
        break;
      case 'bye':
        this.conn.close();
        break;
      default:
        this.conn.send(JSON.stringify({ type: 'error', reason: 'unknown_type' }));
    }
  }
}
