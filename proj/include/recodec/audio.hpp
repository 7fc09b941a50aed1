#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace recodec {

// Mono waveform plus its sample rate. Samples are nominally in [-1, 1];
// writers hard-clip anything outside that range.
struct AudioBuffer {
  Eigen::VectorXd samples;
  int sample_rate = 8000;

  int size() const { return static_cast<int>(samples.size()); }
  double seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a RIFF/WAVE file. Accepts 16-bit PCM and 32-bit IEEE float data;
// multichannel input is reduced to the first channel. PCM samples are
// scaled by 1/2^15.
AudioBuffer read_wav(const std::string& path);

// Writes 16-bit PCM mono at buf.sample_rate. Values outside [-1, 1] are
// clipped; 1.0 maps to 32767 and -1.0 to -32768.
void write_wav(const AudioBuffer& buf, const std::string& path);

double rms(const Eigen::Ref<const Eigen::VectorXd>& x);

// Scales `out` so its RMS equals `ref`'s. A silent `out` is returned
// unchanged and reported through `silent` when provided. Re-applying the
// result is an exact no-op.
AudioBuffer match_rms(const AudioBuffer& out, const AudioBuffer& ref,
                      bool* silent = nullptr);

// Delays (positive shift) or advances (negative shift) the signal with
// zero padding; length is preserved. |shift| must be < len.
AudioBuffer time_shift(const AudioBuffer& buf, int shift_samples);

// Synthetic corpus recipe. Class weights are over
// {harmonic tone, chirp, AM noise, tone+noise} in that order.
struct CorpusSpec {
  int n_clips = 32;
  double clip_seconds = 1.0;
  std::uint64_t seed = 42;
  // Class weights {harmonic, chirp, AM noise, tone+noise}. Tonal-heavy like
  // the speech corpora this stands in for; broadband noise is kept present
  // but is not reconstructable at this bitrate, so it stays a minority.
  std::array<double, 4> mix{0.40, 0.25, 0.10, 0.25};
  int sample_rate = 8000;
};

// Deterministic clip generator; every clip is peak-normalized to 0.9.
// Harmonic clips draw f0 in [80, 400] Hz with 3-8 partials, chirps sweep
// linearly within [100, 3500] Hz, AM noise is white noise modulated by
// 0.5 + 0.5*sin(2*pi*fm*t) with fm in [2, 8] Hz.
std::vector<AudioBuffer> synth_corpus(const CorpusSpec& spec);

}  // namespace recodec
