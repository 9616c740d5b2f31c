import { readFileSync } from 'fs'

export interface GrayImage {
  width: number
  height: number
  pixels: Uint8Array
}

/** Minimal binary PGM (P5, maxval 255) reader for tile fixtures. */
export function readPgm(path: string): GrayImage {
  const buf = readFileSync(path)
  let pos = 0
  const token = () => {
    // skip whitespace and '#' comment lines between header tokens
    for (;;) {
      while (pos < buf.length && /\s/.test(String.fromCharCode(buf[pos]))) pos++
      if (pos < buf.length && buf[pos] === 0x23) {
        while (pos < buf.length && buf[pos] !== 0x0a) pos++
      } else {
        break
      }
    }
    const start = pos
    while (pos < buf.length && !/\s/.test(String.fromCharCode(buf[pos]))) pos++
    return buf.toString('ascii', start, pos)
  }
  if (token() !== 'P5') {
    throw new Error(`${path}: not a binary PGM`)
  }
  const width = parseInt(token(), 10)
  const height = parseInt(token(), 10)
  const maxval = parseInt(token(), 10)
  if (!(width > 0 && height > 0)) {
    throw new Error(`${path}: bad dimensions`)
  }
  if (maxval !== 255) {
    throw new Error(`${path}: only maxval 255 is supported`)
  }
  pos++ // single whitespace byte after maxval
  const pixels = buf.subarray(pos, pos + width * height)
  if (pixels.length !== width * height) {
    throw new Error(`${path}: truncated pixel data`)
  }
  return { width, height, pixels: new Uint8Array(pixels) }
}
