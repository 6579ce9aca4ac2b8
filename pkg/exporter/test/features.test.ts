import { mkdtempSync, readFileSync, existsSync, mkdirSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'
import { describe, expect, it } from 'vitest'

import { getExtractor } from '../src/features'
import { exportFeatures } from '../src/index'
import { readTensor } from '../src/vseg'
import { texturedFrame, writeFrames } from './frames'

function tempDir(): string {
  return mkdtempSync(join(tmpdir(), 'vseg-feat-'))
}

describe('grid descriptor extractor', () => {
  const extractor = getExtractor('grid-descriptor')

  it('produces the grid implied by the stride and frame size', () => {
    const frame = texturedFrame({ width: 854, height: 480 })
    const t = extractor.extract(frame, 8)
    expect(t.shape).toEqual([60, 106, extractor.dim])
  })

  it('emits L2-normalized cells', () => {
    const frame = texturedFrame({
      width: 64,
      height: 48,
      object: { row: 10, col: 12, size: 16 },
      color: true,
    })
    const t = extractor.extract(frame, 8)
    const d = extractor.dim
    for (let cell = 0; cell < t.shape[0] * t.shape[1]; cell++) {
      let norm = 0
      for (let k = 0; k < d; k++) {
        norm += t.data[cell * d + k] ** 2
      }
      expect(Math.abs(Math.sqrt(norm) - 1)).toBeLessThan(1e-5)
    }
  })

  it('separates object cells from background cells', () => {
    const frame = texturedFrame({
      width: 64,
      height: 64,
      object: { row: 16, col: 16, size: 24 },
      color: true,
    })
    const t = extractor.extract(frame, 8)
    const d = extractor.dim
    const cellAt = (r: number, c: number) =>
      t.data.subarray((r * t.shape[1] + c) * d, (r * t.shape[1] + c) * d + d)
    const dot = (a: Float32Array, b: Float32Array) => {
      let s = 0
      for (let k = 0; k < d; k++) s += a[k] * b[k]
      return s
    }
    const objectCells = [cellAt(3, 3), cellAt(4, 4)]
    const backgroundCells = [cellAt(0, 0), cellAt(7, 7)]
    expect(dot(objectCells[0], objectCells[1])).toBeGreaterThan(
      dot(objectCells[0], backgroundCells[0]) + 0.05,
    )
    expect(dot(backgroundCells[0], backgroundCells[1])).toBeGreaterThan(
      dot(objectCells[1], backgroundCells[1]) + 0.05,
    )
  })

  it('rejects unknown model ids', () => {
    expect(() => getExtractor('no-such-model')).toThrow(/unknown appearance model/)
  })
})

describe('exportFeatures', () => {
  it('writes one readable tensor per frame', () => {
    const dir = tempDir()
    const frames = [0, 1, 2].map(i =>
      texturedFrame({ width: 40, height: 32, shift: { dx: i, dy: 0 } }),
    )
    writeFrames(join(dir, 'frames'), frames)
    const out = join(dir, 'out')
    const written = exportFeatures({ framesDir: join(dir, 'frames'), outDir: out, stride: 8 })
    expect(written).toHaveLength(3)
    for (const path of written) {
      const t = readTensor(path)
      expect(t.shape).toEqual([4, 5, 13])
    }
  })

  it('is deterministic: identical frames give identical files', () => {
    const dir = tempDir()
    const frame = texturedFrame({ width: 48, height: 40, color: true })
    writeFrames(join(dir, 'frames'), [frame, frame])
    const out = join(dir, 'out')
    const [a, b] = exportFeatures({ framesDir: join(dir, 'frames'), outDir: out })
    expect(readFileSync(a).equals(readFileSync(b))).toBe(true)
  })

  it('fails on a corrupt frame without writing partial output', () => {
    const dir = tempDir()
    const framesDir = join(dir, 'frames')
    writeFrames(framesDir, [texturedFrame({ width: 32, height: 32 })])
    writeFileSync(join(framesDir, 'frame_999.pgm'), Buffer.from('P5\n9 9\n255\nxx'))
    const out = join(dir, 'out')
    expect(() => exportFeatures({ framesDir, outDir: out })).toThrow(/truncated/)
    expect(existsSync(out)).toBe(false)
  })

  it('fails on an empty frames directory', () => {
    const dir = tempDir()
    mkdirSync(join(dir, 'frames'))
    expect(() =>
      exportFeatures({ framesDir: join(dir, 'frames'), outDir: join(dir, 'out') }),
    ).toThrow(/no .pgm/)
  })
})
