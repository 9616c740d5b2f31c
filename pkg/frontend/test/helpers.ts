import { mkdtempSync, writeFileSync } from 'fs'
import { tmpdir } from 'os'
import { join } from 'path'

export function makeTmpDir(prefix = 'bridge-'): string {
  return mkdtempSync(join(tmpdir(), prefix))
}

/** Write a binary PGM (P5) tile filled per-pixel by `value(x, y)`. */
export function writePgm(
  path: string,
  width: number,
  height: number,
  value: (x: number, y: number) => number,
) {
  const header = Buffer.from(`P5\n${width} ${height}\n255\n`, 'ascii')
  const pixels = Buffer.alloc(width * height)
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      pixels[y * width + x] = Math.max(0, Math.min(255, Math.round(value(x, y))))
    }
  }
  writeFileSync(path, Buffer.concat([header, pixels]))
}
