/**
 * Appearance feature extraction on a regular grid.
 *
 * The default extractor is self-contained (no checkpoint downloads): per grid
 * cell it pools an 8-bin gradient-orientation histogram with color and
 * intensity statistics over a window of 2x the stride, and L2-normalizes the
 * result. Network-backed extractors can be registered under their own model
 * id and selected with the same flag.
 */

import { Image, toGrayscale } from './image'
import { Tensor } from './vseg'

export interface FeatureExtractor {
  readonly id: string
  readonly dim: number
  extract(img: Image, stride: number): Tensor
}

const ORIENT_BINS = 8

class GridDescriptorExtractor implements FeatureExtractor {
  readonly id = 'grid-descriptor'
  readonly dim = ORIENT_BINS + 3 + 2 // orientations + mean color + mean/std intensity

  extract(img: Image, stride: number): Tensor {
    const { width, height, channels, data } = img
    const gray = toGrayscale(img)
    const rows = Math.floor(height / stride)
    const cols = Math.floor(width / stride)
    if (rows < 1 || cols < 1) {
      throw new Error(`stride ${stride} too large for a ${width}x${height} frame`)
    }

    const gx = new Float32Array(width * height)
    const gy = new Float32Array(width * height)
    for (let y = 0; y < height; y++) {
      for (let x = 0; x < width; x++) {
        const xm = Math.max(x - 1, 0)
        const xp = Math.min(x + 1, width - 1)
        const ym = Math.max(y - 1, 0)
        const yp = Math.min(y + 1, height - 1)
        gx[y * width + x] = (gray[y * width + xp] - gray[y * width + xm]) / 2
        gy[y * width + x] = (gray[yp * width + x] - gray[ym * width + x]) / 2
      }
    }

    const out = new Float32Array(rows * cols * this.dim)
    for (let r = 0; r < rows; r++) {
      for (let c = 0; c < cols; c++) {
        const cy = r * stride + stride / 2
        const cx = c * stride + stride / 2
        const y0 = Math.max(0, Math.floor(cy - stride))
        const y1 = Math.min(height, Math.ceil(cy + stride))
        const x0 = Math.max(0, Math.floor(cx - stride))
        const x1 = Math.min(width, Math.ceil(cx + stride))

        const desc = new Float64Array(this.dim)
        let n = 0
        let sum = 0
        let sumSq = 0
        for (let y = y0; y < y1; y++) {
          for (let x = x0; x < x1; x++) {
            const i = y * width + x
            const mag = Math.hypot(gx[i], gy[i])
            if (mag > 1e-12) {
              // unsigned orientation in [0, pi)
              let angle = Math.atan2(gy[i], gx[i])
              if (angle < 0) angle += Math.PI
              let bin = Math.floor((angle / Math.PI) * ORIENT_BINS)
              if (bin === ORIENT_BINS) bin = 0
              desc[bin] += mag
            }
            for (let ch = 0; ch < 3; ch++) {
              desc[ORIENT_BINS + ch] += data[i * channels + Math.min(ch, channels - 1)]
            }
            sum += gray[i]
            sumSq += gray[i] * gray[i]
            n++
          }
        }
        for (let ch = 0; ch < 3; ch++) {
          desc[ORIENT_BINS + ch] /= n
        }
        const mean = sum / n
        desc[ORIENT_BINS + 3] = mean
        desc[ORIENT_BINS + 4] = Math.sqrt(Math.max(sumSq / n - mean * mean, 0))

        let norm = 0
        for (const v of desc) norm += v * v
        norm = Math.sqrt(norm)
        const base = (r * cols + c) * this.dim
        for (let k = 0; k < this.dim; k++) {
          out[base + k] = norm > 1e-12 ? desc[k] / norm : 0
        }
      }
    }
    return { shape: [rows, cols, this.dim], data: out }
  }
}

const extractors = new Map<string, FeatureExtractor>()

export function registerExtractor(extractor: FeatureExtractor): void {
  extractors.set(extractor.id, extractor)
}

registerExtractor(new GridDescriptorExtractor())

export function getExtractor(id: string): FeatureExtractor {
  const extractor = extractors.get(id)
  if (!extractor) {
    const known = [...extractors.keys()].join(', ')
    throw new Error(`unknown appearance model '${id}' (available: ${known})`)
  }
  return extractor
}

export const DEFAULT_APPEARANCE_MODEL = 'grid-descriptor'
