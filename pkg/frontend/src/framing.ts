/** Stream frame parsing: 4-byte big-endian length, then that many PNG bytes. */

export function parseFrame(data: ArrayBuffer): Uint8Array {
  if (data.byteLength < 4) {
    throw new Error(`frame too short: ${data.byteLength} bytes`);
  }
  const view = new DataView(data);
  const length = view.getUint32(0, false);
  if (data.byteLength !== 4 + length) {
    throw new Error(`frame length mismatch: header ${length}, payload ${data.byteLength - 4}`);
  }
  return new Uint8Array(data, 4, length);
}

export function isPng(bytes: Uint8Array): boolean {
  const sig = [0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a];
  return bytes.length >= 8 && sig.every((b, i) => bytes[i] === b);
}
