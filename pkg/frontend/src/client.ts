// The conversion client: capture samples in, played frames out.
//
// Outbound: device-rate float samples -> resampler -> 240-sample chunker ->
// 480-byte frames (the only binary shape this client ever sends).
// Inbound: binary frames -> jitter buffer (2-chunk depth) -> playback;
// text -> session state machine.

import { FrameChunker } from './chunker.js';
import { JitterBuffer } from './jitterBuffer.js';
import { levelDb } from './meters.js';
import {
  ClientMessage,
  decodeFrame,
  encodeClientMessage,
  FRAME_BYTES,
  s16ToFloat,
} from './protocol.js';
import { LinearResampler } from './resampler.js';
import { SessionView } from './stateMachine.js';
import { Transport } from './transport.js';

export interface ClientOptions {
  deviceSampleRate?: number;
  jitterDepth?: number;
  now?: () => number;
}

export class ConversionClient {
  readonly view: SessionView;
  readonly jitter: JitterBuffer;
  private readonly chunker = new FrameChunker();
  private readonly resampler: LinearResampler;

  constructor(private readonly transport: Transport, opts: ClientOptions = {}) {
    this.view = new SessionView(opts.now);
    this.jitter = new JitterBuffer(opts.jitterDepth ?? 2);
    this.resampler = new LinearResampler(opts.deviceSampleRate ?? 16000);
    this.view.onConnecting();
    transport.onMessage((data) => {
      if (typeof data === 'string') {
        this.view.onServerMessage(data);
      } else {
        this.onAudio(data);
      }
    });
    transport.onClose(() => this.view.onClose());
  }

  /** Feed captured device-rate samples; ready frames go out immediately. */
  sendAudio(samples: Float32Array): number {
    const at16k = this.resampler.push(samples);
    const frames = this.chunker.push(at16k);
    for (const frame of frames) {
      if (frame.byteLength !== FRAME_BYTES) {
        // The chunker guarantees this; treat anything else as a local bug
        // and refuse to violate the protocol.
        throw new Error(`refusing to send a ${frame.byteLength}-byte frame`);
      }
      this.transport.send(frame);
      this.view.onFrameSent(levelDb(decodeFrame(frame)));
    }
    return frames.length;
  }

  /** Next 240 samples for the output device (silence when buffering). */
  pullPlayback(): Float32Array {
    return s16ToFloat(this.jitter.pop());
  }

  selectSpeaker(id: string): void {
    this.view.selectSpeakerRequested(id);
    this.send({ type: 'select_speaker', id });
  }

  hello(): void {
    this.send({ type: 'hello' });
  }

  requestStats(): void {
    this.send({ type: 'stats' });
  }

  bye(): void {
    this.send({ type: 'bye' });
    this.transport.close();
  }

  get underruns(): number {
    return this.jitter.underruns;
  }

  private send(msg: ClientMessage): void {
    this.transport.send(encodeClientMessage(msg));
  }

  private onAudio(data: ArrayBuffer): void {
    if (data.byteLength !== FRAME_BYTES) {
      this.view.protocolViolations += 1;
      return;
    }
    const pcm = decodeFrame(data);
    this.jitter.push(pcm);
    this.view.onFrameReceived(levelDb(pcm));
  }
}
