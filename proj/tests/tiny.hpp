#pragma once

// Small codec profile and corpus used across test suites: big enough to
// exercise every code path (two hidden layers, multiple levels), small
// enough that training-dependent tests run in seconds.

#include "recodec/audio.hpp"
#include "recodec/codec.hpp"
#include "recodec/train.hpp"

#include <vector>

namespace tiny {

inline recodec::CodecConfig config() {
  recodec::CodecConfig c;
  c.sample_rate = 8000;
  c.frame_size = 32;
  c.hop = 16;
  c.latent_dim = 12;
  c.code_dim = 3;
  c.n_levels = 2;
  c.codebook_size = 8;
  c.encoder_hidden = {24};
  c.seed = 42;
  return c;
}

inline std::vector<recodec::AudioBuffer> corpus(int n_clips,
                                                double seconds = 0.25,
                                                std::uint64_t seed = 7) {
  recodec::CorpusSpec spec;
  spec.n_clips = n_clips;
  spec.clip_seconds = seconds;
  spec.seed = seed;
  return recodec::synth_corpus(spec);
}

inline recodec::TrainConfig fast_train(std::uint64_t seed = 42) {
  recodec::TrainConfig tc;
  tc.batch_size = 2;
  tc.excerpt_seconds = 0.2;
  tc.warmup_steps = 40;
  tc.log_every = 1000000;  // keep unit-test logs quiet
  tc.val_every = 1000000;
  tc.seed = seed;
  return tc;
}

}  // namespace tiny
