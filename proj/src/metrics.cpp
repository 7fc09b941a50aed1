#include "recodec/metrics.hpp"

#include "recodec/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace recodec {

double si_sdr_db(const AudioBuffer& reference, const AudioBuffer& estimate) {
  if (reference.size() != estimate.size())
    throw std::invalid_argument("si_sdr: length mismatch");
  const Eigen::VectorXd& r = reference.samples;
  const Eigen::VectorXd& e = estimate.samples;
  const double ref_energy = r.squaredNorm();
  if (ref_energy <= 0.0) throw std::invalid_argument("si_sdr: zero reference");
  const double alpha = e.dot(r) / ref_energy;
  const double num = alpha * alpha * ref_energy;
  const double den = (alpha * r - e).squaredNorm();
  constexpr double inf = std::numeric_limits<double>::infinity();
  if (den == 0.0) return num == 0.0 ? -inf : inf;
  if (num == 0.0) return -inf;
  return 10.0 * std::log10(num / den);
}

double log_spectral_distance_db(const AudioBuffer& reference,
                                const AudioBuffer& estimate) {
  if (reference.size() != estimate.size())
    throw std::invalid_argument("log_spectral_distance: length mismatch");
  constexpr int kWindow = 256;
  constexpr int kHop = 128;
  constexpr double kEps = 1e-8;
  const Eigen::MatrixXd mr = stft_magnitude(reference.samples, kWindow, kHop);
  const Eigen::MatrixXd me = stft_magnitude(estimate.samples, kWindow, kHop);
  const Eigen::ArrayXXd diff =
      20.0 * ((mr.array() + kEps).log10() - (me.array() + kEps).log10());
  return std::sqrt(diff.square().mean());
}

Eigen::VectorXd match_rate(const TokenGrid& a, const TokenGrid& b) {
  if (a.codes.rows() != b.codes.rows() || a.codes.cols() != b.codes.cols())
    throw std::invalid_argument("match_rate: shape mismatch");
  if (a.frames() < 1) throw std::invalid_argument("match_rate: empty grids");
  Eigen::VectorXd rate(a.levels());
  for (int l = 0; l < a.levels(); ++l) {
    int hits = 0;
    for (int t = 0; t < a.frames(); ++t)
      if (a.codes(l, t) == b.codes(l, t)) ++hits;
    rate[l] = static_cast<double>(hits) / a.frames();
  }
  return rate;
}

Eigen::VectorXd codebook_use_pct(const TokenGrid& tokens) {
  const int K = tokens.codebook_size;
  if (K < 1) throw std::invalid_argument("codebook_use: codebook_size must be >= 1");
  if (tokens.frames() < 1) throw std::invalid_argument("codebook_use: empty grid");
  Eigen::VectorXd use(tokens.levels());
  if (K == 1) {
    use.setConstant(100.0);
    return use;
  }
  const double max_entropy = std::log(static_cast<double>(K));
  for (int l = 0; l < tokens.levels(); ++l) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(K);
    for (int t = 0; t < tokens.frames(); ++t) {
      const int c = tokens.codes(l, t);
      if (c < 0 || c >= K)
        throw std::invalid_argument("codebook_use: code out of range");
      counts[c] += 1.0;
    }
    const double total = static_cast<double>(tokens.frames());
    double entropy = 0.0;
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0.0) {
        const double p = counts[k] / total;
        entropy -= p * std::log(p);
      }
    }
    use[l] = 100.0 * entropy / max_entropy;
  }
  return use;
}

double pearson_corr(const Eigen::Ref<const Eigen::VectorXd>& xs,
                    const Eigen::Ref<const Eigen::VectorXd>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("pearson_corr: length mismatch");
  const Eigen::Index n = xs.size();
  if (n < 2) throw std::invalid_argument("pearson_corr: need at least 2 points");
  const double mx = xs.mean();
  const double my = ys.mean();
  const Eigen::ArrayXd dx = xs.array() - mx;
  const Eigen::ArrayXd dy = ys.array() - my;
  const double sx = std::sqrt((dx * dx).sum());
  const double sy = std::sqrt((dy * dy).sum());
  if (sx == 0.0 || sy == 0.0)
    throw std::invalid_argument("pearson_corr: zero variance");
  const double r = (dx * dy).sum() / (sx * sy);
  return std::clamp(r, -1.0, 1.0);
}

}  // namespace recodec
