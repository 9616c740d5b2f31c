#!/usr/bin/env node
import yargs from 'yargs'
import { hideBin } from 'yargs/helpers'

import { encodePrompt } from './encodePrompt.js'
import { extractGrid } from './extractGrid.js'
import { getProfile, listProfiles } from './profiles.js'

export async function main(argv: string[]): Promise<number> {
  try {
    await yargs(argv)
      .scriptName('slideselect-bridge')
      .command(
        'extract-grid',
        'Encode a tile directory into a patch-embedding container',
        y =>
          y
            .option('tiles', { type: 'string', demandOption: true })
            .option('profile', { type: 'string', demandOption: true, choices: listProfiles() })
            .option('stride', { type: 'number', default: 256 })
            .option('wsi-id', { type: 'string', default: 'wsi' })
            .option('out', { type: 'string', demandOption: true }),
        args => {
          const meta = extractGrid({
            tilesDir: args.tiles,
            profile: getProfile(args.profile),
            stridePx: args.stride,
            wsiId: args['wsi-id'],
            outPath: args.out,
          })
          console.error(`wrote ${meta.grid_h}x${meta.grid_w} grid to ${args.out}`)
        },
      )
      .command(
        'encode-prompt',
        'Encode a text prompt into a one-row container',
        y =>
          y
            .option('text', { type: 'string', demandOption: true })
            .option('profile', { type: 'string', demandOption: true, choices: listProfiles() })
            .option('out', { type: 'string', demandOption: true }),
        args => {
          encodePrompt({
            text: args.text,
            profile: getProfile(args.profile),
            outPath: args.out,
          })
          console.error(`wrote prompt embedding to ${args.out}`)
        },
      )
      .demandCommand(1)
      .strict()
      .fail((msg, err) => {
        throw err ?? new UsageFailure(msg ?? 'usage error')
      })
      .parseAsync()
    return 0
  } catch (err) {
    if (err instanceof UsageFailure) {
      console.error(`error: ${err.message}`)
      return 1
    }
    console.error(`data error: ${err instanceof Error ? err.message : err}`)
    return 2
  }
}

class UsageFailure extends Error {}

const invokedDirectly =
  process.argv[1] !== undefined && import.meta.url.endsWith(process.argv[1].split('/').pop()!)
if (invokedDirectly) {
  main(hideBin(process.argv)).then(code => {
    process.exitCode = code
  })
}
