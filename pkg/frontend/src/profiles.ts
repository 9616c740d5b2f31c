export type Modality = 'image' | 'text' | 'both'

export interface EncoderProfile {
  name: string
  /** Side of the square model input in pixels; tiles are center-cropped/padded to it. */
  inputPx: number
  /** Microns per pixel the encoder expects. */
  mpp: number
  embeddingDim: number
  modality: Modality
}

/**
 * Profile registry. Real pretrained weights are out of scope here; the
 * bundled encoders are deterministic stand-ins so the pipeline can be
 * exercised end to end. Both-modality profiles share one embedding space.
 */
const PROFILES: Record<string, EncoderProfile> = {
  'toy-image-8': {
    name: 'toy-image-8',
    inputPx: 32,
    mpp: 0.25,
    embeddingDim: 8,
    modality: 'image',
  },
  'toy-clip-8': {
    name: 'toy-clip-8',
    inputPx: 32,
    mpp: 0.25,
    embeddingDim: 8,
    modality: 'both',
  },
}

export function getProfile(name: string): EncoderProfile {
  const profile = PROFILES[name]
  if (!profile) {
    throw new Error(
      `unknown encoder profile '${name}' (known: ${Object.keys(PROFILES).join(', ')})`,
    )
  }
  if (profile.inputPx < 1 || profile.embeddingDim < 1) {
    throw new Error(`profile '${name}' has non-positive input_px/embedding_dim`)
  }
  return profile
}

export function listProfiles(): string[] {
  return Object.keys(PROFILES)
}
