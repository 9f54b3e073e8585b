import { describe, expect, it } from 'vitest';

import {
  CHUNK_SAMPLES,
  decodeFrame,
  encodeFrame,
  FRAME_BYTES,
  floatToS16,
  parseServerEvent,
  s16ToFloat,
} from '../src/protocol.js';

describe('frame encoding', () => {
  it('round-trips 240 samples through 480 bytes', () => {
    const pcm = new Int16Array(CHUNK_SAMPLES).map((_, i) => (i * 137) % 32768 - 16384);
    const wire = encodeFrame(pcm);
    expect(wire.byteLength).toBe(FRAME_BYTES);
    expect(Array.from(decodeFrame(wire))).toEqual(Array.from(pcm));
  });

  it('is little-endian on the wire', () => {
    const pcm = new Int16Array(CHUNK_SAMPLES);
    pcm[0] = 0x0102;
    const bytes = new Uint8Array(encodeFrame(pcm));
    expect(bytes[0]).toBe(0x02);
    expect(bytes[1]).toBe(0x01);
  });

  it('rejects wrong sample counts', () => {
    expect(() => encodeFrame(new Int16Array(100))).toThrow();
    expect(() => decodeFrame(new ArrayBuffer(100))).toThrow();
  });

  it('quantization round trip stays within one LSB', () => {
    const x = new Float32Array(1000).map(() => Math.random() * 2 - 1);
    const back = s16ToFloat(floatToS16(x));
    for (let i = 0; i < x.length; i++) {
      expect(Math.abs(back[i] - x[i])).toBeLessThanOrEqual(1 / 32768);
    }
  });
});

describe('server event alphabet', () => {
  it('accepts every event type the server emits', () => {
    const samples = [
      '{"type":"active"}',
      '{"type":"queue","position":3}',
      '{"type":"expired"}',
      '{"type":"speaker","id":"p001"}',
      '{"type":"stats","frames_in":5}',
      '{"type":"error","reason":"no_speaker"}',
    ];
    for (const text of samples) expect(parseServerEvent(text)).not.toBeNull();
  });

  it('rejects anything outside the alphabet', () => {
    for (const text of ['{"type":"nope"}', 'not json', '42', '{"position":1}',
                        '{"type":"queue"}', '{"type":"speaker"}']) {
      expect(parseServerEvent(text)).toBeNull();
    }
  });
});
