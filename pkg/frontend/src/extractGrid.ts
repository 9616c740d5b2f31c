import { readdirSync } from 'fs'
import { join } from 'path'

import { GridMeta, gridMetaPath, writeContainer, writeGridMeta } from './container.js'
import { encodeImage } from './encoders.js'
import { EncoderProfile } from './profiles.js'
import { readPgm } from './pgm.js'

const TILE_NAME = /^y(\d+)_x(\d+)\.pgm$/

export interface ExtractOptions {
  tilesDir: string
  profile: EncoderProfile
  stridePx: number
  wsiId: string
  outPath: string
}

/**
 * Encode a directory of `y{gy}_x{gx}.pgm` tiles into a patch-embedding
 * container plus grid metadata.
 *
 * Rows are emitted row-major with index = gy * grid_w + gx — the same
 * convention the core loader assumes — and L2-normalized, so the
 * container's `normalized` sidecar flag is set.
 */
export function extractGrid(options: ExtractOptions): GridMeta {
  const { tilesDir, profile, stridePx, wsiId, outPath } = options
  if (stridePx < 1) {
    throw new Error('stride must be >= 1')
  }
  const tiles = new Map<string, string>()
  let gridH = 0
  let gridW = 0
  for (const name of readdirSync(tilesDir)) {
    const m = TILE_NAME.exec(name)
    if (!m) continue
    const gy = parseInt(m[1], 10)
    const gx = parseInt(m[2], 10)
    tiles.set(`${gy},${gx}`, join(tilesDir, name))
    gridH = Math.max(gridH, gy + 1)
    gridW = Math.max(gridW, gx + 1)
  }
  if (tiles.size === 0) {
    throw new Error(`${tilesDir}: no y*_x*.pgm tiles found`)
  }
  for (let gy = 0; gy < gridH; gy++) {
    for (let gx = 0; gx < gridW; gx++) {
      if (!tiles.has(`${gy},${gx}`)) {
        throw new Error(`${tilesDir}: missing tile y${gy}_x${gx}.pgm`)
      }
    }
  }

  const dim = profile.embeddingDim
  const values = new Float32Array(gridH * gridW * dim)
  for (let gy = 0; gy < gridH; gy++) {
    for (let gx = 0; gx < gridW; gx++) {
      const embedding = encodeImage(readPgm(tiles.get(`${gy},${gx}`)!), profile)
      values.set(embedding, (gy * gridW + gx) * dim)
    }
  }
  writeContainer(values, gridH * gridW, dim, true, outPath)

  const meta: GridMeta = {
    wsi_id: wsiId,
    grid_h: gridH,
    grid_w: gridW,
    stride_px: stridePx,
    patch_px: profile.inputPx,
    mpp: profile.mpp,
    level0_h: gridH * stridePx,
    level0_w: gridW * stridePx,
  }
  writeGridMeta(meta, gridMetaPath(outPath))
  return meta
}
