#pragma once

#include "recodec/audio.hpp"
#include "recodec/codec.hpp"
#include "recodec/metrics.hpp"

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace recodec {

// Anything that encodes to tokens and decodes back. The evaluation
// protocols run over these, so mock codecs plug in next to real models.
struct CodecHandle {
  std::string name;
  int hop = 0;
  int sample_rate = 8000;
  std::function<TokenGrid(const AudioBuffer&)> encode;
  std::function<AudioBuffer(const TokenGrid&, int)> decode;  // tokens, n_samples
};

CodecHandle make_handle(const CodecModel& model, const std::string& name);

struct NamedClip {
  std::string name;
  AudioBuffer audio;
};

// Reads every *.wav in dir, sorted by filename; errors if none found.
std::vector<NamedClip> load_clips(const std::string& dir);

struct ClipEval {
  std::string clip;
  std::vector<MetricRow> rows;            // iterations 1..N
  std::vector<std::uint64_t> audio_hash;  // FNV of each iterate's samples
};

// Multi-round re-encoding results. The timestamp stays in memory; emitted
// files are a pure function of inputs and seed.
struct EvalReport {
  std::string model_name;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string timestamp;
  int iterations = 0;
  int levels = 0;
  std::vector<ClipEval> clips;

  struct IterationSummary {
    int iteration = 0;
    double si_sdr_db = 0.0;  // per-clip values capped to +-100 before the mean
    double lsd_db = 0.0;
    double match_rate = std::numeric_limits<double>::quiet_NaN();  // NaN at n=1
    double entropy_pct = 0.0;
  };
  std::vector<IterationSummary> summary;
};

// Per clip: x_0 = input; for n = 1..N: tokens_n = encode(x_{n-1}),
// x_n = match_rms(decode(tokens_n), x_0). Rows record quality vs x_0,
// match rate vs the previous iteration's tokens, and codebook use.
EvalReport eval_multiround(const CodecHandle& codec,
                           const std::vector<NamedClip>& clips, int n_iters);

// rows.csv, summary.json and plot.dat under dir (created if needed).
void emit_report(const EvalReport& report, const std::string& dir);

// Token stability under sub-hop time shifts, paired with multi-round
// SI-SDR, and the correlation between the two across models.
struct ShiftReport {
  std::vector<int> shifts;  // sample offsets, symmetric around 0, 0 excluded
  struct ModelPoint {
    std::string model;
    double mean_match_rate = 0.0;     // over shifts, clips and levels
    double si_sdr_at_n = 0.0;         // capped mean at the final iteration
    Eigen::VectorXd per_shift_match;  // per shift, mean over clips and levels
  };
  std::vector<ModelPoint> models;
  int iterations = 0;
  double pearson_r = std::numeric_limits<double>::quiet_NaN();
};

ShiftReport eval_phase(const std::vector<CodecHandle>& codecs,
                       const std::vector<NamedClip>& clips,
                       double max_shift_ms, int n_iters = 25);

// shifts.csv, phase_summary.json and phase_plot.dat under dir.
void emit_phase_report(const ShiftReport& report, const std::string& dir);

}  // namespace recodec
