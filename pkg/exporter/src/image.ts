/**
 * Binary PGM (P5) / PPM (P6) frame decoding. Values are normalized to [0, 1].
 */

import { readFileSync } from 'fs'

export interface Image {
  width: number
  height: number
  channels: number
  /** row-major [height][width][channels], values in [0, 1] */
  data: Float32Array
}

function parseHeader(raw: Buffer, path: string) {
  const text = raw.subarray(0, Math.min(raw.length, 512)).toString('latin1')
  const magic = text.slice(0, 2)
  if (magic !== 'P5' && magic !== 'P6') {
    throw new Error(`${path}: not a binary PGM/PPM file`)
  }
  // header = magic + 3 whitespace-separated integers, '#' comments allowed
  const fields: number[] = []
  let pos = 2
  while (fields.length < 3) {
    while (pos < text.length && /\s/.test(text[pos])) pos++
    if (text[pos] === '#') {
      while (pos < text.length && text[pos] !== '\n') pos++
      continue
    }
    let start = pos
    while (pos < text.length && /\d/.test(text[pos])) pos++
    if (pos === start) {
      throw new Error(`${path}: malformed header`)
    }
    fields.push(parseInt(text.slice(start, pos), 10))
  }
  pos++ // the single whitespace byte after maxval
  const [width, height, maxval] = fields
  if (width <= 0 || height <= 0 || maxval <= 0 || maxval > 255) {
    throw new Error(`${path}: unsupported dimensions or maxval`)
  }
  return { magic, width, height, maxval, offset: pos }
}

export function readFrame(path: string): Image {
  const raw = readFileSync(path)
  const { magic, width, height, maxval, offset } = parseHeader(raw, path)
  const channels = magic === 'P6' ? 3 : 1
  const count = width * height * channels
  if (raw.length - offset < count) {
    throw new Error(`${path}: pixel payload truncated`)
  }
  const data = new Float32Array(count)
  for (let i = 0; i < count; i++) {
    data[i] = raw[offset + i] / maxval
  }
  return { width, height, channels, data }
}

export function toGrayscale(img: Image): Float32Array {
  const { width, height, channels, data } = img
  if (channels === 1) {
    return data.slice()
  }
  const gray = new Float32Array(width * height)
  for (let i = 0; i < width * height; i++) {
    gray[i] =
      0.299 * data[i * channels] +
      0.587 * data[i * channels + 1] +
      0.114 * data[i * channels + 2]
  }
  return gray
}

export function encodePgm(gray: Float32Array, width: number, height: number): Buffer {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, 'ascii')
  const body = Buffer.alloc(width * height)
  for (let i = 0; i < width * height; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(gray[i] * 255)))
  }
  return Buffer.concat([header, body])
}

export function encodePpm(
  rgb: Float32Array,
  width: number,
  height: number,
): Buffer {
  const header = Buffer.from(`P6\n${width} ${height}\n255\n`, 'ascii')
  const body = Buffer.alloc(width * height * 3)
  for (let i = 0; i < width * height * 3; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(rgb[i] * 255)))
  }
  return Buffer.concat([header, body])
}
