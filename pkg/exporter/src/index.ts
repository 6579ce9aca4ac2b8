/**
 * Export job orchestration: read a directory of frames, run the configured
 * appearance and flow extractors, and emit VSEG1 files under the engine's
 * naming convention (feat_%05d.vseg, flow_fwd_%05d.vseg, flow_bwd_%05d.vseg,
 * pair (p, p+1) stored at index p; frames re-emitted as frame_%05d.vseg so
 * the engine's reliability filter can run).
 *
 * All frames are decoded and validated before anything is written: a corrupt
 * input produces an error and no partial output.
 */

import { mkdirSync, readdirSync } from 'fs'
import { join } from 'path'

import { DEFAULT_APPEARANCE_MODEL, getExtractor } from './features'
import { DEFAULT_FLOW_MODEL, getEstimator } from './flow'
import { Image, readFrame } from './image'
import { writeTensor } from './vseg'

export interface ExportJob {
  framesDir: string
  outDir: string
  stride?: number
  appearanceModel?: string
  flowModel?: string
}

export function listFrameFiles(framesDir: string): string[] {
  const names = readdirSync(framesDir)
    .filter(name => /\.(pgm|ppm)$/i.test(name))
    .sort()
  if (names.length === 0) {
    throw new Error(`no .pgm/.ppm frames found in ${framesDir}`)
  }
  return names.map(name => join(framesDir, name))
}

export function loadFrames(framesDir: string): Image[] {
  return listFrameFiles(framesDir).map(readFrame)
}

function pad(index: number): string {
  return String(index).padStart(5, '0')
}

export function exportFeatures(job: ExportJob): string[] {
  const stride = job.stride ?? 8
  const extractor = getExtractor(job.appearanceModel ?? DEFAULT_APPEARANCE_MODEL)
  const frames = loadFrames(job.framesDir)
  const tensors = frames.map(frame => extractor.extract(frame, stride))
  mkdirSync(job.outDir, { recursive: true })
  const written: string[] = []
  tensors.forEach((tensor, p) => {
    const path = join(job.outDir, `feat_${pad(p)}.vseg`)
    writeTensor(path, tensor)
    written.push(path)
  })
  return written
}

export function exportFlows(job: ExportJob): string[] {
  const estimator = getEstimator(job.flowModel ?? DEFAULT_FLOW_MODEL)
  const frames = loadFrames(job.framesDir)
  if (frames.length < 2) {
    throw new Error('flow export needs at least two frames')
  }
  const forward = []
  const backward = []
  for (let p = 0; p < frames.length - 1; p++) {
    forward.push(estimator.estimate(frames[p], frames[p + 1]))
    backward.push(estimator.estimate(frames[p + 1], frames[p]))
  }
  mkdirSync(job.outDir, { recursive: true })
  const written: string[] = []
  forward.forEach((tensor, p) => {
    const path = join(job.outDir, `flow_fwd_${pad(p)}.vseg`)
    writeTensor(path, tensor)
    written.push(path)
  })
  backward.forEach((tensor, p) => {
    const path = join(job.outDir, `flow_bwd_${pad(p)}.vseg`)
    writeTensor(path, tensor)
    written.push(path)
  })
  return written
}

export function exportFrames(job: ExportJob): string[] {
  const frames = loadFrames(job.framesDir)
  mkdirSync(job.outDir, { recursive: true })
  const written: string[] = []
  frames.forEach((frame, p) => {
    const path = join(job.outDir, `frame_${pad(p)}.vseg`)
    writeTensor(path, {
      shape: [frame.height, frame.width, frame.channels],
      data: frame.data,
    })
    written.push(path)
  })
  return written
}

export * from './features'
export * from './flow'
export * from './image'
export * from './vseg'
