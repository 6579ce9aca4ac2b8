/**
 * Dense optical flow between frame pairs.
 *
 * The default estimator is coarse-to-fine block matching: integer SAD search
 * on a stride grid at each pyramid level, refined down the pyramid and
 * bilinearly densified to a per-pixel [H, W, 2] field with channel 0 = dx
 * (columns) and channel 1 = dy (rows), in pixel units. Learned estimators
 * can be registered under their own model id.
 */

import { Image, toGrayscale } from './image'
import { Tensor } from './vseg'

export interface FlowEstimator {
  readonly id: string
  estimate(from: Image, to: Image): Tensor
}

interface Level {
  width: number
  height: number
  gray: Float32Array
}

function downsample(level: Level): Level {
  const width = Math.max(1, Math.floor(level.width / 2))
  const height = Math.max(1, Math.floor(level.height / 2))
  const gray = new Float32Array(width * height)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const sy = 2 * y
      const sx = 2 * x
      const sy1 = Math.min(sy + 1, level.height - 1)
      const sx1 = Math.min(sx + 1, level.width - 1)
      gray[y * width + x] =
        (level.gray[sy * level.width + sx] +
          level.gray[sy * level.width + sx1] +
          level.gray[sy1 * level.width + sx] +
          level.gray[sy1 * level.width + sx1]) /
        4
    }
  }
  return { width, height, gray }
}

function sad(
  a: Level,
  b: Level,
  ax: number,
  ay: number,
  bx: number,
  by: number,
  half: number,
): number {
  let total = 0
  let n = 0
  for (let dy = -half; dy <= half; dy++) {
    for (let dx = -half; dx <= half; dx++) {
      const y1 = ay + dy
      const x1 = ax + dx
      const y2 = by + dy
      const x2 = bx + dx
      if (
        y1 < 0 || y1 >= a.height || x1 < 0 || x1 >= a.width ||
        y2 < 0 || y2 >= b.height || x2 < 0 || x2 >= b.width
      ) {
        continue
      }
      total += Math.abs(a.gray[y1 * a.width + x1] - b.gray[y2 * b.width + x2])
      n++
    }
  }
  return n > 0 ? total / n : Number.POSITIVE_INFINITY
}

class BlockMatchingFlow implements FlowEstimator {
  readonly id = 'block-matching'
  constructor(
    private readonly levels = 3,
    private readonly radius = 4,
    private readonly patchHalf = 4,
    private readonly step = 4,
  ) {}

  estimate(from: Image, to: Image): Tensor {
    if (from.width !== to.width || from.height !== to.height) {
      throw new Error('frame pair has mismatched dimensions')
    }
    const pyramidA: Level[] = [
      { width: from.width, height: from.height, gray: toGrayscale(from) },
    ]
    const pyramidB: Level[] = [
      { width: to.width, height: to.height, gray: toGrayscale(to) },
    ]
    for (let l = 1; l < this.levels; l++) {
      if (pyramidA[l - 1].width < 2 * this.step || pyramidA[l - 1].height < 2 * this.step) {
        break
      }
      pyramidA.push(downsample(pyramidA[l - 1]))
      pyramidB.push(downsample(pyramidB[l - 1]))
    }

    // flow on the block grid of the current level, coarse to fine
    let grid: { rows: number; cols: number; dx: Float32Array; dy: Float32Array } | null =
      null
    for (let l = pyramidA.length - 1; l >= 0; l--) {
      const a = pyramidA[l]
      const b = pyramidB[l]
      const rows = Math.max(1, Math.ceil(a.height / this.step))
      const cols = Math.max(1, Math.ceil(a.width / this.step))
      const dx = new Float32Array(rows * cols)
      const dy = new Float32Array(rows * cols)
      for (let r = 0; r < rows; r++) {
        for (let c = 0; c < cols; c++) {
          const y = Math.min(r * this.step + Math.floor(this.step / 2), a.height - 1)
          const x = Math.min(c * this.step + Math.floor(this.step / 2), a.width - 1)
          let seedX = 0
          let seedY = 0
          if (grid) {
            const pr = Math.min(Math.round(y / 2 / this.step), grid.rows - 1)
            const pc = Math.min(Math.round(x / 2 / this.step), grid.cols - 1)
            seedX = Math.round(2 * grid.dx[pr * grid.cols + pc])
            seedY = Math.round(2 * grid.dy[pr * grid.cols + pc])
          }
          let best = Number.POSITIVE_INFINITY
          let bestDist = Number.POSITIVE_INFINITY
          let bestX = seedX
          let bestY = seedY
          for (let oy = -this.radius; oy <= this.radius; oy++) {
            for (let ox = -this.radius; ox <= this.radius; ox++) {
              const fx = seedX + ox
              const fy = seedY + oy
              const cost = sad(a, b, x, y, x + fx, y + fy, this.patchHalf)
              const dist = fx * fx + fy * fy
              // ties (e.g. flat regions) resolve to the smallest displacement
              if (cost < best - 1e-9 || (cost <= best + 1e-9 && dist < bestDist)) {
                best = cost
                bestDist = dist
                bestX = fx
                bestY = fy
              }
            }
          }
          dx[r * cols + c] = bestX
          dy[r * cols + c] = bestY
        }
      }
      grid = { rows, cols, dx, dy }
    }

    // densify the block grid to per-pixel flow by bilinear interpolation
    const { rows, cols, dx, dy } = grid!
    const out = new Float32Array(from.width * from.height * 2)
    for (let y = 0; y < from.height; y++) {
      for (let x = 0; x < from.width; x++) {
        const gr = Math.min(Math.max((y - this.step / 2) / this.step, 0), rows - 1)
        const gc = Math.min(Math.max((x - this.step / 2) / this.step, 0), cols - 1)
        const r0 = Math.floor(gr)
        const c0 = Math.floor(gc)
        const r1 = Math.min(r0 + 1, rows - 1)
        const c1 = Math.min(c0 + 1, cols - 1)
        const fy = gr - r0
        const fx = gc - c0
        const i = (y * from.width + x) * 2
        out[i] =
          dx[r0 * cols + c0] * (1 - fy) * (1 - fx) +
          dx[r0 * cols + c1] * (1 - fy) * fx +
          dx[r1 * cols + c0] * fy * (1 - fx) +
          dx[r1 * cols + c1] * fy * fx
        out[i + 1] =
          dy[r0 * cols + c0] * (1 - fy) * (1 - fx) +
          dy[r0 * cols + c1] * (1 - fy) * fx +
          dy[r1 * cols + c0] * fy * (1 - fx) +
          dy[r1 * cols + c1] * fy * fx
      }
    }
    return { shape: [from.height, from.width, 2], data: out }
  }
}

const estimators = new Map<string, FlowEstimator>()

export function registerEstimator(estimator: FlowEstimator): void {
  estimators.set(estimator.id, estimator)
}

registerEstimator(new BlockMatchingFlow())

export function getEstimator(id: string): FlowEstimator {
  const estimator = estimators.get(id)
  if (!estimator) {
    const known = [...estimators.keys()].join(', ')
    throw new Error(`unknown flow model '${id}' (available: ${known})`)
  }
  return estimator
}

export const DEFAULT_FLOW_MODEL = 'block-matching'
