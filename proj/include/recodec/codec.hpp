#pragma once

#include "recodec/audio.hpp"
#include "recodec/metrics.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace recodec {

// Model hyperparameters. The reference experiment profile is the default.
struct CodecConfig {
  int sample_rate = 8000;
  int frame_size = 160;
  int hop = 80;
  int latent_dim = 64;    // D: encoder latent width
  int code_dim = 8;       // d: codebook lookup space
  int n_levels = 4;       // L: residual quantizer depth
  int codebook_size = 64; // K: codes per level
  std::vector<int> encoder_hidden{128, 128};
  std::uint64_t seed = 42;

  void validate() const;
};

std::string config_hash_hex(const CodecConfig& config);

// One quantizer level's vectors, K x d.
struct Codebook {
  Eigen::MatrixXd vectors;
};

// Per-frame MLP encoder/decoder around a residual vector quantizer with
// per-level input/output projections. Weight matrices are input x output;
// biases are 1 x output rows.
struct CodecModel {
  CodecConfig config;
  std::vector<Eigen::MatrixXd> enc_w, enc_b;
  std::vector<Eigen::MatrixXd> dec_w, dec_b;
  std::vector<Eigen::MatrixXd> proj_in;   // L of D x d
  std::vector<Eigen::MatrixXd> proj_out;  // L of d x D
  std::vector<Codebook> codebooks;        // L of K x d

  // Every parameter tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> parameters();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> parameters() const;
};

// Random initialization (seeded from config.seed).
CodecModel init_model(const CodecConfig& config);

// Continuous frame-level latents, one row per hop.
Eigen::MatrixXd encode_latents(const CodecModel& m, const AudioBuffer& x);

// L2-normalized nearest-neighbor lookup: both query and codebook rows are
// normalized for the distance, ties break to the lowest index, and the
// returned vectors are the raw (un-normalized) codebook rows. Zero-norm
// queries fall back to unnormalized distances.
std::pair<Eigen::VectorXi, Eigen::MatrixXd> quantize_level(
    const Eigen::Ref<const Eigen::MatrixXd>& codebook,
    const Eigen::Ref<const Eigen::MatrixXd>& queries);

// Intermediate values of one encode pass, kept for loss computation.
struct EncodeTrace {
  Eigen::MatrixXd latents;                 // T x D
  std::vector<Eigen::MatrixXd> projected;  // per level, T x d
  std::vector<Eigen::MatrixXd> selected;   // per level, T x d (raw rows)
};

TokenGrid encode(const CodecModel& m, const AudioBuffer& x,
                 EncodeTrace* trace = nullptr);

AudioBuffer decode(const CodecModel& m, const TokenGrid& tokens, int n_samples);

// encode, decode, then RMS-match against the input.
AudioBuffer roundtrip(const CodecModel& m, const AudioBuffer& x,
                      bool* silent = nullptr);

// Versioned, checksummed binary checkpoint; load(save(m)) is bit-exact.
void save_model(const CodecModel& m, const std::string& path);
CodecModel load_model(const std::string& path);

// Token dump, one "level,frame,index" row per entry.
void write_tokens_csv(const TokenGrid& tokens, const std::string& path);

}  // namespace recodec
