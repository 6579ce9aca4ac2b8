/**
 * VSEG1 tensor container: the wire format the segmentation engine consumes.
 *
 * Layout: ASCII magic "VSEG1", u32 LE ndim, ndim x u32 LE dims, then
 * prod(dims) float32 LE values in row-major order.
 */

import { readFileSync, writeFileSync } from 'fs'

const MAGIC = Buffer.from('VSEG1', 'ascii')

export interface Tensor {
  shape: number[]
  data: Float32Array
}

export function encodeTensor(tensor: Tensor): Buffer {
  const { shape, data } = tensor
  const count = shape.reduce((a, b) => a * b, 1)
  if (count !== data.length) {
    throw new Error(`shape [${shape}] does not match ${data.length} values`)
  }
  for (const v of data) {
    if (!Number.isFinite(v)) {
      throw new Error('tensor contains a non-finite value')
    }
  }
  const header = Buffer.alloc(MAGIC.length + 4 + 4 * shape.length)
  MAGIC.copy(header, 0)
  header.writeUInt32LE(shape.length, MAGIC.length)
  shape.forEach((dim, i) => {
    if (!Number.isInteger(dim) || dim <= 0) {
      throw new Error(`invalid dimension ${dim}`)
    }
    header.writeUInt32LE(dim, MAGIC.length + 4 + 4 * i)
  })
  const payload = Buffer.alloc(4 * count)
  for (let i = 0; i < count; i++) {
    payload.writeFloatLE(data[i], 4 * i)
  }
  return Buffer.concat([header, payload])
}

export function writeTensor(path: string, tensor: Tensor): void {
  writeFileSync(path, encodeTensor(tensor))
}

export function readTensor(path: string): Tensor {
  const raw = readFileSync(path)
  if (raw.length < MAGIC.length + 4 || !raw.subarray(0, MAGIC.length).equals(MAGIC)) {
    throw new Error(`${path}: not a VSEG1 file`)
  }
  let off = MAGIC.length
  const ndim = raw.readUInt32LE(off)
  off += 4
  if (ndim < 1 || ndim > 32 || raw.length < off + 4 * ndim) {
    throw new Error(`${path}: corrupt header`)
  }
  const shape: number[] = []
  for (let i = 0; i < ndim; i++) {
    shape.push(raw.readUInt32LE(off))
    off += 4
  }
  const count = shape.reduce((a, b) => a * b, 1)
  if (raw.length - off !== 4 * count) {
    throw new Error(`${path}: payload length mismatch`)
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = raw.readFloatLE(off + 4 * i)
  }
  return { shape, data }
}
