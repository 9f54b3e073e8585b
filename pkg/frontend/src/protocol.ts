// Wire protocol shared with the streaming service: JSON text for control,
// binary frames of exactly 480 bytes (240 samples, s16le mono, 16 kHz).

export const SAMPLE_RATE = 16000;
export const CHUNK_SAMPLES = 240;
export const FRAME_BYTES = CHUNK_SAMPLES * 2;
export const CHUNK_MS = 15;

export type ServerEvent =
  | { type: 'active' }
  | { type: 'queue'; position: number }
  | { type: 'expired' }
  | { type: 'speaker'; id: string }
  | { type: 'stats'; [key: string]: unknown }
  | { type: 'error'; reason: string; [key: string]: unknown };

export type ClientMessage =
  | { type: 'hello' }
  | { type: 'select_speaker'; id: string }
  | { type: 'stats' }
  | { type: 'bye' };

const SERVER_EVENT_TYPES = new Set(['active', 'queue', 'expired', 'speaker', 'stats', 'error']);

/** Parse a server text message; null when it is outside the event alphabet. */
export function parseServerEvent(text: string): ServerEvent | null {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    return null;
  }
  if (typeof doc !== 'object' || doc === null) return null;
  const ev = doc as { type?: unknown; position?: unknown; id?: unknown; reason?: unknown };
  if (typeof ev.type !== 'string' || !SERVER_EVENT_TYPES.has(ev.type)) return null;
  if (ev.type === 'queue' && typeof ev.position !== 'number') return null;
  if (ev.type === 'speaker' && typeof ev.id !== 'string') return null;
  if (ev.type === 'error' && typeof ev.reason !== 'string') return null;
  return doc as ServerEvent;
}

export function encodeClientMessage(msg: ClientMessage): string {
  return JSON.stringify(msg);
}

export function floatToS16(samples: Float32Array): Int16Array {
  const out = new Int16Array(samples.length);
  for (let i = 0; i < samples.length; i++) {
    const q = Math.round(samples[i] * 32768);
    out[i] = Math.max(-32768, Math.min(32767, q));
  }
  return out;
}

export function s16ToFloat(pcm: Int16Array): Float32Array {
  const out = new Float32Array(pcm.length);
  for (let i = 0; i < pcm.length; i++) out[i] = pcm[i] / 32768;
  return out;
}

/** Serialize one 240-sample frame as the 480-byte little-endian wire form. */
export function encodeFrame(samples: Int16Array): ArrayBuffer {
  if (samples.length !== CHUNK_SAMPLES) {
    throw new Error(`frame must have ${CHUNK_SAMPLES} samples, got ${samples.length}`);
  }
  const buf = new ArrayBuffer(FRAME_BYTES);
  const view = new DataView(buf);
  for (let i = 0; i < samples.length; i++) view.setInt16(2 * i, samples[i], true);
  return buf;
}

export function decodeFrame(data: ArrayBuffer): Int16Array {
  if (data.byteLength !== FRAME_BYTES) {
    throw new Error(`frame must be ${FRAME_BYTES} bytes, got ${data.byteLength}`);
  }
  const view = new DataView(data);
  const out = new Int16Array(CHUNK_SAMPLES);
  for (let i = 0; i < out.length; i++) out[i] = view.getInt16(2 * i, true);
  return out;
}
