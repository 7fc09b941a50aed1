#pragma once

#include <Eigen/Dense>

namespace recodec {

// Periodic Hann window: w[k] = 0.5 - 0.5*cos(2*pi*k/n). Shifted copies at
// hop = n/2 sum to one, so plain overlap-add has unity gain away from edges.
Eigen::VectorXd hann_window(int n);

// Mirror-folds an index into [0, n) without repeating edge samples.
int reflect_index(long long i, int n);

// Frame count used by the codec: ceil(len / hop).
int frame_count(int len, int hop);

// Codec analysis framing: frame t starts at t*hop - (frame - hop)/2 in
// signal coordinates, out-of-range samples reflected. Returned matrix of
// flat indices has shape frame_count(n, hop) x frame.
Eigen::MatrixXi frame_indices(int n, int frame, int hop);

// Gathers x[frame_indices] into a frames-by-frame matrix.
Eigen::MatrixXd frame_signal(const Eigen::Ref<const Eigen::VectorXd>& x,
                             int frame, int hop);

// Hann-windowed overlap-add of per-frame synthesis output, normalized by
// the accumulated window sum at each output sample. Inverse of the layout
// produced by frame_indices.
Eigen::VectorXd overlap_add(const Eigen::Ref<const Eigen::MatrixXd>& frames,
                            int hop, int n_samples);

// Window-sum profile of the overlap-add above (used for normalization and
// for checking the constant-overlap-add property).
Eigen::VectorXd ola_window_sum(int frame, int hop, int n_samples);

// Real and imaginary DFT projection matrices, n_fft x (n_fft/2 + 1):
// re(k, b) = cos(2*pi*k*b/n_fft), im(k, b) = -sin(2*pi*k*b/n_fft).
struct DftBasis {
  Eigen::MatrixXd re;
  Eigen::MatrixXd im;
};
const DftBasis& dft_basis(int n_fft);

// Magnitudes of the Hann-windowed STFT over frames fully inside the
// signal (frames x bins). Signals shorter than the window are zero-padded
// to a single frame.
Eigen::MatrixXd stft_magnitude(const Eigen::Ref<const Eigen::VectorXd>& x,
                               int window, int hop);

}  // namespace recodec
