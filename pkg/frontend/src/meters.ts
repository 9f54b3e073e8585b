// Level metering for the UI: RMS of a frame mapped to dBFS.

export function rms(samples: Float32Array | Int16Array): number {
  if (samples.length === 0) return 0;
  let acc = 0;
  const scale = samples instanceof Int16Array ? 32768 : 1;
  for (let i = 0; i < samples.length; i++) {
    const v = samples[i] / scale;
    acc += v * v;
  }
  return Math.sqrt(acc / samples.length);
}

export const METER_FLOOR_DB = -90;

export function levelDb(samples: Float32Array | Int16Array): number {
  const r = rms(samples);
  if (r <= 0) return METER_FLOOR_DB;
  return Math.max(METER_FLOOR_DB, 20 * Math.log10(r));
}
