#!/usr/bin/env node
/**
 * vseg-export: turn a directory of PGM/PPM frames into VSEG1 inputs for the
 * segmentation engine.
 *
 *   vseg-export features --frames video/ --out bundle/ --stride 8
 *   vseg-export flows    --frames video/ --out bundle/
 *   vseg-export all      --frames video/ --out bundle/
 */

import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import {
  DEFAULT_APPEARANCE_MODEL,
  DEFAULT_FLOW_MODEL,
  ExportJob,
  exportFeatures,
  exportFlows,
  exportFrames,
} from './index'

const jobOptions = {
  frames: {
    type: 'string' as const,
    demandOption: true,
    describe: 'directory of input frames (.pgm/.ppm, sorted by name)',
  },
  out: {
    type: 'string' as const,
    demandOption: true,
    describe: 'output directory for .vseg files',
  },
  stride: {
    type: 'number' as const,
    default: 8,
    describe: 'feature grid stride in pixels',
  },
  'appearance-model': {
    type: 'string' as const,
    default: DEFAULT_APPEARANCE_MODEL,
    describe: 'appearance extractor id',
  },
  'flow-model': {
    type: 'string' as const,
    default: DEFAULT_FLOW_MODEL,
    describe: 'flow estimator id',
  },
}

function toJob(argv: Record<string, unknown>): ExportJob {
  return {
    framesDir: argv.frames as string,
    outDir: argv.out as string,
    stride: argv.stride as number,
    appearanceModel: argv['appearance-model'] as string,
    flowModel: argv['flow-model'] as string,
  }
}

async function main(): Promise<number> {
  let failed = false
  await yargs(hideBin(process.argv))
    .scriptName('vseg-export')
    .command(
      'features',
      'export appearance feature grids (feat_*.vseg)',
      jobOptions,
      argv => {
        const written = exportFeatures(toJob(argv))
        console.log(`wrote ${written.length} feature tensors to ${argv.out}`)
      },
    )
    .command(
      'flows',
      'export forward/backward flow fields (flow_fwd_*/flow_bwd_*.vseg)',
      jobOptions,
      argv => {
        const written = exportFlows(toJob(argv))
        console.log(`wrote ${written.length} flow tensors to ${argv.out}`)
      },
    )
    .command(
      'all',
      'export features, flows, and frames',
      jobOptions,
      argv => {
        const job = toJob(argv)
        const n =
          exportFeatures(job).length +
          exportFlows(job).length +
          exportFrames(job).length
        console.log(`wrote ${n} tensors to ${argv.out}`)
      },
    )
    .demandCommand(1)
    .strict()
    .fail((msg, err) => {
      console.error(`error: ${err?.message ?? msg}`)
      failed = true
    })
    .parse()
  return failed ? 1 : 0
}

main().then(
  code => process.exit(code),
  err => {
    console.error(`error: ${err?.message ?? err}`)
    process.exit(1)
  },
)
