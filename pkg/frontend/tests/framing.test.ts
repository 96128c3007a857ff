import { describe, expect, it } from "vitest";

import { isPng, parseFrame } from "../src/framing.js";


function frame(payload: number[]): ArrayBuffer {
  const buf = new ArrayBuffer(4 + payload.length);
  new DataView(buf).setUint32(0, payload.length, false);
  new Uint8Array(buf, 4).set(payload);
  return buf;
}

describe("stream framing", () => {
  it("extracts the PNG payload after the big-endian length", () => {
    const bytes = parseFrame(frame([9, 8, 7, 6]));
    expect([...bytes]).toEqual([9, 8, 7, 6]);
  });

  it("rejects truncated frames", () => {
    const buf = frame([1, 2, 3, 4]).slice(0, 6);
    expect(() => parseFrame(buf)).toThrow(/length mismatch/);
  });

  it("rejects frames shorter than the header", () => {
    expect(() => parseFrame(new ArrayBuffer(2))).toThrow(/too short/);
  });

  it("recognizes the PNG signature", () => {
    expect(isPng(new Uint8Array([0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0]))).toBe(true);
    expect(isPng(new Uint8Array([1, 2, 3]))).toBe(false);
  });
});
