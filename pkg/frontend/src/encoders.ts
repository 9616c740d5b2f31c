import { EncoderProfile } from './profiles.js'
import { GrayImage } from './pgm.js'

function l2Normalize(v: Float32Array): Float32Array {
  let sq = 0
  for (const x of v) sq += x * x
  const norm = Math.sqrt(sq)
  if (norm === 0) {
    throw new Error('cannot normalize zero embedding')
  }
  const out = new Float32Array(v.length)
  for (let i = 0; i < v.length; i++) out[i] = v[i] / norm
  return out
}

/**
 * Center-crop (or zero-pad, with a warning) an image to side x side.
 */
export function centerFit(image: GrayImage, side: number, warn = console.warn): GrayImage {
  if (image.width === side && image.height === side) return image
  if (image.width < side || image.height < side) {
    warn(
      `tile ${image.width}x${image.height} smaller than model input ${side}; center-padding`,
    )
  }
  const out = new Uint8Array(side * side)
  const dy = Math.floor((image.height - side) / 2)
  const dx = Math.floor((image.width - side) / 2)
  for (let y = 0; y < side; y++) {
    for (let x = 0; x < side; x++) {
      const sy = y + dy
      const sx = x + dx
      if (sy >= 0 && sy < image.height && sx >= 0 && sx < image.width) {
        out[y * side + x] = image.pixels[sy * image.width + sx]
      }
    }
  }
  return { width: side, height: side, pixels: out }
}

/**
 * Deterministic image embedding: component 0 is a constant-plus-mean
 * term (so no tile maps to the zero vector), the rest are horizontal
 * band means relative to the global mean. L2-normalized.
 */
export function encodeImage(image: GrayImage, profile: EncoderProfile): Float32Array {
  if (profile.modality === 'text') {
    throw new Error(`profile '${profile.name}' cannot encode images`)
  }
  const fitted = centerFit(image, profile.inputPx)
  const side = profile.inputPx
  const dim = profile.embeddingDim
  let globalMean = 0
  for (const p of fitted.pixels) globalMean += p
  globalMean /= side * side

  const features = new Float32Array(dim)
  features[0] = 0.5 + globalMean / 255
  const bands = dim - 1
  for (let b = 0; b < bands; b++) {
    const y0 = Math.floor((b * side) / bands)
    const y1 = Math.floor(((b + 1) * side) / bands)
    let sum = 0
    let count = 0
    for (let y = y0; y < y1; y++) {
      for (let x = 0; x < side; x++) {
        sum += fitted.pixels[y * side + x]
        count++
      }
    }
    features[b + 1] = count ? (sum / count - globalMean) / 255 : 0
  }
  return l2Normalize(features)
}

/**
 * Deterministic text embedding: FNV-1a hashes of each word scatter unit
 * contributions into the feature buckets. Same prompt, same bytes.
 */
export function encodeText(text: string, profile: EncoderProfile): Float32Array {
  if (profile.modality !== 'both' && profile.modality !== 'text') {
    throw new Error(`profile '${profile.name}' cannot encode text`)
  }
  const words = text.toLowerCase().split(/\s+/).filter(Boolean)
  if (words.length === 0) {
    throw new Error('cannot encode an empty prompt')
  }
  const features = new Float32Array(profile.embeddingDim)
  for (const word of words) {
    let h = 0x811c9dc5
    for (let i = 0; i < word.length; i++) {
      h ^= word.charCodeAt(i)
      h = Math.imul(h, 0x01000193) >>> 0
    }
    features[h % profile.embeddingDim] += 1 + (h >>> 24) / 512
  }
  return l2Normalize(features)
}
