/**
 * Wire tensor codec: base64-encoded little-endian f32 buffers.
 *
 * Byte order is written explicitly through DataView so payloads are
 * identical regardless of host endianness, and a round trip through
 * encode/decode preserves every bit of the buffer.
 */

export interface WireTensor {
  dtype: 'f32';
  shape: number[];
  data: string;
}

export class WireError extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function tensorToWire(values: Float32Array, shape: number[]): WireTensor {
  if (elementCount(shape) !== values.length) {
    throw new WireError('bad-tensor', `shape ${JSON.stringify(shape)} does not match length ${values.length}`);
  }
  const buf = Buffer.alloc(values.length * 4);
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  for (let i = 0; i < values.length; i++) {
    view.setFloat32(i * 4, values[i], true);
  }
  return { dtype: 'f32', shape: [...shape], data: buf.toString('base64') };
}

export function tensorFromWire(t: unknown): { values: Float32Array; shape: number[] } {
  const obj = t as WireTensor | undefined;
  if (!obj || obj.dtype !== 'f32' || !Array.isArray(obj.shape) || typeof obj.data !== 'string') {
    throw new WireError('bad-tensor', `malformed tensor payload: ${JSON.stringify(t)}`);
  }
  const shape = obj.shape.map((s) => {
    if (!Number.isInteger(s) || s < 1) {
      throw new WireError('bad-tensor', `bad dimension ${s}`);
    }
    return s;
  });
  const buf = Buffer.from(obj.data, 'base64');
  const expected = elementCount(shape) * 4;
  if (buf.length !== expected) {
    throw new WireError('bad-tensor', `buffer has ${buf.length} bytes, shape implies ${expected}`);
  }
  const view = new DataView(buf.buffer, buf.byteOffset, buf.byteLength);
  const values = new Float32Array(buf.length / 4);
  for (let i = 0; i < values.length; i++) {
    values[i] = view.getFloat32(i * 4, true);
  }
  return { values, shape };
}
