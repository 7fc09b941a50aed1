#pragma once

#include "recodec/audio.hpp"
#include "recodec/codec.hpp"
#include "recodec/train.hpp"

#include <map>
#include <string>

namespace recodec {

// Flat `key = value` text. '#' starts a comment; blank lines are ignored.
struct KvConfig {
  std::map<std::string, std::string> values;

  static KvConfig parse_file(const std::string& path);
  static KvConfig parse_string(const std::string& text);

  bool has(const std::string& key) const { return values.count(key) > 0; }
};

// Keys mirror CorpusSpec field names: n_clips, clip_seconds, seed, mix
// (four comma-separated weights), sample_rate. Unknown keys are errors.
void apply_corpus_config(const KvConfig& kv, CorpusSpec* spec);

// Keys mirror CodecConfig, LossWeights and TrainConfig field names
// (encoder_hidden is a comma-separated list). `seed` sets both the model
// init seed and the training stream seed. Unknown keys are errors.
void apply_model_config(const KvConfig& kv, CodecConfig* codec,
                        LossWeights* weights, TrainConfig* train);

}  // namespace recodec
