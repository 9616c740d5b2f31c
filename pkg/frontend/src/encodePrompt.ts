import { writeContainer } from './container.js'
import { encodeText } from './encoders.js'
import { EncoderProfile } from './profiles.js'

export interface PromptOptions {
  text: string
  profile: EncoderProfile
  outPath: string
}

/** Encode a text prompt into a single normalized container row. */
export function encodePrompt(options: PromptOptions): Float32Array {
  const { text, profile, outPath } = options
  if (profile.modality !== 'both') {
    throw new Error(
      `profile '${profile.name}' is ${profile.modality}-only; prompts need a both-modality profile`,
    )
  }
  const embedding = encodeText(text, profile)
  writeContainer(embedding, 1, profile.embeddingDim, true, outPath)
  return embedding
}
