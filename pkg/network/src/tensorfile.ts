/**
 * Float32 tensor interchange files: magic "STGT", u32 version=1, u32 rank,
 * u32 dims[rank], then row-major little-endian float32 payload.
 */

import * as fs from 'fs';
import * as path from 'path';

const MAGIC = Buffer.from('STGT', 'ascii');
const VERSION = 1;
const MAX_RANK = 4;

export interface Tensor {
  dims: number[];
  data: Float32Array;
}

export function readTensor(file: string): Tensor {
  const buf = fs.readFileSync(file);
  if (buf.length < 12) {
    throw new Error(`${file}: truncated header`);
  }
  if (!buf.subarray(0, 4).equals(MAGIC)) {
    throw new Error(`${file}: bad magic ${buf.subarray(0, 4).toString()}`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== VERSION) {
    throw new Error(`${file}: unsupported version ${version}`);
  }
  const rank = buf.readUInt32LE(8);
  if (rank > MAX_RANK) {
    throw new Error(`${file}: rank ${rank} exceeds ${MAX_RANK}`);
  }
  const head = 12 + 4 * rank;
  if (buf.length < head) {
    throw new Error(`${file}: header ends before dims`);
  }
  const dims: number[] = [];
  for (let i = 0; i < rank; i++) {
    dims.push(buf.readUInt32LE(12 + 4 * i));
  }
  const count = dims.reduce((a, b) => a * b, 1);
  if (buf.length - head < 4 * count) {
    throw new Error(`${file}: payload shorter than ${4 * count} bytes`);
  }
  const data = new Float32Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = buf.readFloatLE(head + 4 * i);
  }
  return { dims, data };
}

export function writeTensor(t: Tensor, file: string): void {
  const count = t.dims.reduce((a, b) => a * b, 1);
  if (count !== t.data.length) {
    throw new Error(`dims ${t.dims} do not match ${t.data.length} values`);
  }
  if (t.dims.length > MAX_RANK) {
    throw new Error(`rank ${t.dims.length} exceeds ${MAX_RANK}`);
  }
  const head = Buffer.alloc(12 + 4 * t.dims.length);
  MAGIC.copy(head, 0);
  head.writeUInt32LE(VERSION, 4);
  head.writeUInt32LE(t.dims.length, 8);
  t.dims.forEach((d, i) => head.writeUInt32LE(d, 12 + 4 * i));
  const payload = Buffer.alloc(4 * count);
  for (let i = 0; i < count; i++) {
    payload.writeFloatLE(t.data[i], 4 * i);
  }
  const tmp = file + '.tmp';
  fs.writeFileSync(tmp, Buffer.concat([head, payload]));
  fs.renameSync(tmp, file);
}

export function listByPattern(dir: string, prefix: string): string[] {
  return fs
    .readdirSync(dir)
    .filter((f) => f.startsWith(prefix) && f.endsWith('.stgt'))
    .sort()
    .map((f) => path.join(dir, f));
}
