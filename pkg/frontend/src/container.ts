import { writeFileSync, readFileSync } from 'fs'
import { basename, dirname, join } from 'path'

/**
 * Binary embedding container shared with the core package.
 *
 * Layout (little-endian): "PEMB" | u32 version=1 | u32 dtype=1 (f32) |
 * u64 rows | u64 cols | rows*cols f32 payload, row-major. The
 * `normalized` flag travels in a JSON sidecar at `<path>.json`.
 */
const MAGIC = 'PEMB'
const VERSION = 1
const DTYPE_F32 = 1
const HEADER_BYTES = 4 + 4 + 4 + 8 + 8

export interface Container {
  rows: number
  cols: number
  values: Float32Array
  normalized: boolean
}

export function writeContainer(
  values: Float32Array,
  rows: number,
  cols: number,
  normalized: boolean,
  path: string,
) {
  if (values.length !== rows * cols) {
    throw new Error(`payload has ${values.length} floats, expected ${rows * cols}`)
  }
  for (const v of values) {
    if (!Number.isFinite(v)) {
      throw new Error('container payload contains non-finite values')
    }
  }
  if (normalized) {
    for (let r = 0; r < rows; r++) {
      let sq = 0
      for (let c = 0; c < cols; c++) {
        sq += values[r * cols + c] * values[r * cols + c]
      }
      if (Math.abs(Math.sqrt(sq) - 1) > 1e-4) {
        throw new Error(`normalized flag set but row ${r} is not unit-norm`)
      }
    }
  }
  const buf = Buffer.alloc(HEADER_BYTES + rows * cols * 4)
  buf.write(MAGIC, 0, 'ascii')
  buf.writeUInt32LE(VERSION, 4)
  buf.writeUInt32LE(DTYPE_F32, 8)
  buf.writeBigUInt64LE(BigInt(rows), 12)
  buf.writeBigUInt64LE(BigInt(cols), 20)
  for (let i = 0; i < values.length; i++) {
    buf.writeFloatLE(values[i], HEADER_BYTES + i * 4)
  }
  writeFileSync(path, buf)
  writeFileSync(path + '.json', JSON.stringify({ normalized }) + '\n')
}

export function readContainer(path: string): Container {
  const buf = readFileSync(path)
  if (buf.length < HEADER_BYTES) {
    throw new Error(`${path}: file shorter than header`)
  }
  if (buf.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error(`${path}: bad magic`)
  }
  if (buf.readUInt32LE(4) !== VERSION) {
    throw new Error(`${path}: unsupported version`)
  }
  if (buf.readUInt32LE(8) !== DTYPE_F32) {
    throw new Error(`${path}: unsupported dtype`)
  }
  const rows = Number(buf.readBigUInt64LE(12))
  const cols = Number(buf.readBigUInt64LE(20))
  if (buf.length !== HEADER_BYTES + rows * cols * 4) {
    throw new Error(`${path}: payload size mismatch`)
  }
  const values = new Float32Array(rows * cols)
  for (let i = 0; i < values.length; i++) {
    values[i] = buf.readFloatLE(HEADER_BYTES + i * 4)
  }
  let normalized = false
  try {
    normalized = JSON.parse(readFileSync(path + '.json', 'utf8')).normalized === true
  } catch {
    // sidecar is optional
  }
  return { rows, cols, values, normalized }
}

export interface GridMeta {
  wsi_id: string
  grid_h: number
  grid_w: number
  stride_px: number
  patch_px: number
  mpp: number
  level0_h: number
  level0_w: number
}

/** The core package looks for `<stem>.grid.json` next to `<stem>.emb`. */
export function gridMetaPath(containerPath: string): string {
  const stem = basename(containerPath).replace(/\.[^.]*$/, '')
  return join(dirname(containerPath), stem + '.grid.json')
}

export function writeGridMeta(meta: GridMeta, path: string) {
  if (meta.grid_h * meta.stride_px !== meta.level0_h ||
      meta.grid_w * meta.stride_px !== meta.level0_w) {
    throw new Error('grid size does not tile the level-0 extent')
  }
  writeFileSync(path, JSON.stringify(meta, null, 2) + '\n')
}
