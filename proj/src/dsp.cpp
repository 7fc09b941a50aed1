#include "recodec/dsp.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace recodec {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

Eigen::VectorXd hann_window(int n) {
  if (n < 1) throw std::invalid_argument("hann_window: n must be >= 1");
  Eigen::VectorXd w(n);
  for (int k = 0; k < n; ++k) w[k] = 0.5 - 0.5 * std::cos(kTwoPi * k / n);
  return w;
}

int reflect_index(long long i, int n) {
  if (n == 1) return 0;
  const long long period = 2ll * (n - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return static_cast<int>(m);
}

int frame_count(int len, int hop) {
  if (hop < 1) throw std::invalid_argument("frame_count: hop must be >= 1");
  return (len + hop - 1) / hop;
}

Eigen::MatrixXi frame_indices(int n, int frame, int hop) {
  if (n < 1) throw std::invalid_argument("frame_indices: empty signal");
  if (frame < 1 || hop < 1 || hop > frame)
    throw std::invalid_argument("frame_indices: need 1 <= hop <= frame");
  const int pad = (frame - hop) / 2;
  const int T = frame_count(n, hop);
  Eigen::MatrixXi idx(T, frame);
  for (int t = 0; t < T; ++t) {
    const long long start = static_cast<long long>(t) * hop - pad;
    for (int k = 0; k < frame; ++k) idx(t, k) = reflect_index(start + k, n);
  }
  return idx;
}

Eigen::MatrixXd frame_signal(const Eigen::Ref<const Eigen::VectorXd>& x,
                             int frame, int hop) {
  const Eigen::MatrixXi idx = frame_indices(static_cast<int>(x.size()), frame, hop);
  Eigen::MatrixXd out(idx.rows(), idx.cols());
  for (Eigen::Index t = 0; t < idx.rows(); ++t)
    for (Eigen::Index k = 0; k < idx.cols(); ++k) out(t, k) = x[idx(t, k)];
  return out;
}

Eigen::VectorXd ola_window_sum(int frame, int hop, int n_samples) {
  const Eigen::VectorXd w = hann_window(frame);
  const int pad = (frame - hop) / 2;
  const int T = frame_count(n_samples, hop);
  Eigen::VectorXd wsum = Eigen::VectorXd::Zero(n_samples);
  for (int t = 0; t < T; ++t) {
    const long long start = static_cast<long long>(t) * hop - pad;
    for (int k = 0; k < frame; ++k) {
      const long long p = start + k;
      if (p >= 0 && p < n_samples) wsum[static_cast<int>(p)] += w[k];
    }
  }
  return wsum;
}

Eigen::VectorXd overlap_add(const Eigen::Ref<const Eigen::MatrixXd>& frames,
                            int hop, int n_samples) {
  const int frame = static_cast<int>(frames.cols());
  const int T = static_cast<int>(frames.rows());
  if (T != frame_count(n_samples, hop))
    throw std::invalid_argument("overlap_add: frame count does not match length");
  const Eigen::VectorXd w = hann_window(frame);
  const int pad = (frame - hop) / 2;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(n_samples);
  for (int t = 0; t < T; ++t) {
    const long long start = static_cast<long long>(t) * hop - pad;
    for (int k = 0; k < frame; ++k) {
      const long long p = start + k;
      if (p >= 0 && p < n_samples) y[static_cast<int>(p)] += w[k] * frames(t, k);
    }
  }
  const Eigen::VectorXd wsum = ola_window_sum(frame, hop, n_samples);
  for (int i = 0; i < n_samples; ++i)
    if (wsum[i] > 1e-12) y[i] /= wsum[i];
  return y;
}

const DftBasis& dft_basis(int n_fft) {
  static std::map<int, DftBasis> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n_fft);
  if (it != cache.end()) return it->second;
  const int bins = n_fft / 2 + 1;
  DftBasis basis;
  basis.re.resize(n_fft, bins);
  basis.im.resize(n_fft, bins);
  for (int k = 0; k < n_fft; ++k) {
    for (int b = 0; b < bins; ++b) {
      const double a = kTwoPi * k * b / n_fft;
      basis.re(k, b) = std::cos(a);
      basis.im(k, b) = -std::sin(a);
    }
  }
  return cache.emplace(n_fft, std::move(basis)).first->second;
}

Eigen::MatrixXd stft_magnitude(const Eigen::Ref<const Eigen::VectorXd>& x,
                               int window, int hop) {
  if (window < 2 || hop < 1)
    throw std::invalid_argument("stft_magnitude: bad window/hop");
  const int n = static_cast<int>(x.size());
  Eigen::MatrixXd frames;
  if (n < window) {
    frames = Eigen::MatrixXd::Zero(1, window);
    frames.row(0).head(n) = x.transpose();
  } else {
    const int T = (n - window) / hop + 1;
    frames.resize(T, window);
    for (int t = 0; t < T; ++t) frames.row(t) = x.segment(t * hop, window).transpose();
  }
  const Eigen::VectorXd w = hann_window(window);
  frames = frames.array().rowwise() * w.transpose().array();
  const DftBasis& basis = dft_basis(window);
  const Eigen::MatrixXd re = frames * basis.re;
  const Eigen::MatrixXd im = frames * basis.im;
  return (re.array().square() + im.array().square()).sqrt();
}

}  // namespace recodec
