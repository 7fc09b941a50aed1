#pragma once

#include "recodec/audio.hpp"

#include <Eigen/Dense>

namespace recodec {

// Integer code indices, one row per quantizer level, one column per frame.
struct TokenGrid {
  Eigen::MatrixXi codes;   // n_levels x n_frames
  int codebook_size = 0;   // K, shared across levels

  int levels() const { return static_cast<int>(codes.rows()); }
  int frames() const { return static_cast<int>(codes.cols()); }
};

// Scale-Invariant Signal-to-Distortion ratio in dB. With
// a = <est, ref>/||ref||^2, returns 10*log10(||a*ref||^2/||a*ref - est||^2).
// +inf for exact (or exactly scaled) reconstruction, -inf for an estimate
// orthogonal to the reference.
double si_sdr_db(const AudioBuffer& reference, const AudioBuffer& estimate);

// RMS over frames and bins of 20*log10((|STFT(ref)|+eps)/(|STFT(est)|+eps)),
// window 256, hop 128, Hann, eps = 1e-8. Zero iff magnitude spectra match.
double log_spectral_distance_db(const AudioBuffer& reference,
                                const AudioBuffer& estimate);

// Per-level fraction of frames whose codes agree.
Eigen::VectorXd match_rate(const TokenGrid& a, const TokenGrid& b);

// Per-level empirical token entropy as a percentage of log(K). Defined as
// 100 for K = 1 (the maximum achievable entropy is zero).
Eigen::VectorXd codebook_use_pct(const TokenGrid& tokens);

// Pearson correlation coefficient, clamped to [-1, 1].
double pearson_corr(const Eigen::Ref<const Eigen::VectorXd>& xs,
                    const Eigen::Ref<const Eigen::VectorXd>& ys);

// One evaluation row of the multi-round re-encoding protocol.
struct MetricRow {
  int iteration = 0;             // n, starting at 1
  double si_sdr_db = 0.0;        // vs the original input; may be +-inf
  double lsd_db = 0.0;
  Eigen::VectorXd match_rate;    // vs previous iteration; empty for n = 1
  Eigen::VectorXd entropy_pct;   // codebook use per level
};

}  // namespace recodec
