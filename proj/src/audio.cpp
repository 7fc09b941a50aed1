#include "recodec/audio.hpp"

#include "recodec/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace recodec {
namespace {

constexpr double kPi = 3.141592653589793238462643383279;
constexpr double kTwoPi = 2.0 * kPi;

std::uint32_t read_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint16_t read_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff),
                              static_cast<unsigned char>((v >> 16) & 0xff),
                              static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ostream& out, std::uint16_t v) {
  const unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                              static_cast<unsigned char>((v >> 8) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open WAV file: " + path);

  char tag[4];
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("malformed WAV header (missing RIFF): " + path);
  read_u32(in);  // riff size, unused
  in.read(tag, 4);
  if (!in || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("malformed WAV header (missing WAVE): " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::vector<char> data;

  while (in.read(tag, 4)) {
    const std::uint32_t chunk_size = read_u32(in);
    if (!in) throw std::runtime_error("malformed WAV chunk in " + path);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      if (chunk_size < 16) throw std::runtime_error("malformed fmt chunk in " + path);
      format = read_u16(in);
      channels = read_u16(in);
      sample_rate = read_u32(in);
      read_u32(in);  // byte rate
      read_u16(in);  // block align
      bits = read_u16(in);
      in.seekg(chunk_size - 16, std::ios::cur);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      in.read(data.data(), chunk_size);
      if (static_cast<std::uint32_t>(in.gcount()) != chunk_size)
        throw std::runtime_error("truncated data chunk in " + path);
      break;
    } else {
      in.seekg(chunk_size + (chunk_size & 1u), std::ios::cur);
    }
    if (!in) throw std::runtime_error("malformed WAV chunk in " + path);
  }

  if (!have_fmt) throw std::runtime_error("malformed WAV (no fmt chunk): " + path);
  if (channels == 0) throw std::runtime_error("malformed WAV (zero channels): " + path);
  if (sample_rate == 0) throw std::runtime_error("malformed WAV (zero sample rate): " + path);

  const bool pcm16 = format == 1 && bits == 16;
  const bool f32 = format == 3 && bits == 32;
  if (!pcm16 && !f32)
    throw std::runtime_error("unsupported WAV encoding (want PCM16 or float32): " + path);

  const size_t bytes_per_sample = bits / 8;
  const size_t frame_bytes = bytes_per_sample * channels;
  const size_t n_frames = data.size() / frame_bytes;
  if (n_frames == 0) throw std::runtime_error("empty audio: " + path);

  AudioBuffer buf;
  buf.sample_rate = static_cast<int>(sample_rate);
  buf.samples.resize(static_cast<Eigen::Index>(n_frames));
  const unsigned char* raw = reinterpret_cast<const unsigned char*>(data.data());
  for (size_t i = 0; i < n_frames; ++i) {
    const unsigned char* p = raw + i * frame_bytes;  // first channel
    if (pcm16) {
      const std::int16_t s = static_cast<std::int16_t>(p[0] | (p[1] << 8));
      buf.samples[static_cast<Eigen::Index>(i)] = static_cast<double>(s) / 32768.0;
    } else {
      float f;
      std::memcpy(&f, p, 4);
      buf.samples[static_cast<Eigen::Index>(i)] = static_cast<double>(f);
    }
  }
  if (!buf.samples.allFinite())
    throw std::runtime_error("non-finite samples in WAV file: " + path);
  return buf;
}

void write_wav(const AudioBuffer& buf, const std::string& path) {
  if (buf.size() < 1) throw std::invalid_argument("write_wav: empty buffer");
  if (!buf.samples.allFinite())
    throw std::invalid_argument("write_wav: non-finite samples");
  if (buf.sample_rate <= 0)
    throw std::invalid_argument("write_wav: sample rate must be positive");

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);

  const std::uint32_t n = static_cast<std::uint32_t>(buf.size());
  const std::uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  write_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  write_u32(out, 16);
  write_u16(out, 1);  // PCM
  write_u16(out, 1);  // mono
  write_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  write_u32(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
  write_u16(out, 2);
  write_u16(out, 16);
  out.write("data", 4);
  write_u32(out, data_bytes);
  for (int i = 0; i < buf.size(); ++i) {
    long v = std::lround(buf.samples[i] * 32768.0);
    v = std::clamp(v, -32768l, 32767l);
    write_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
  }
  if (!out) throw std::runtime_error("I/O error writing " + path);
}

double rms(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() == 0) return 0.0;
  return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

AudioBuffer match_rms(const AudioBuffer& out, const AudioBuffer& ref, bool* silent) {
  const double ref_rms = rms(ref.samples);
  if (ref_rms <= 0.0) throw std::invalid_argument("match_rms: reference RMS must be > 0");
  if (silent) *silent = false;
  const double out_rms = rms(out.samples);
  if (out_rms == 0.0) {
    if (silent) *silent = true;
    return out;
  }
  const double ratio = ref_rms / out_rms;
  // Short-circuit near-unity ratios so repeated application is an exact no-op.
  if (std::abs(ratio - 1.0) <= 1e-12) return out;
  AudioBuffer scaled = out;
  scaled.samples *= ratio;
  return scaled;
}

AudioBuffer time_shift(const AudioBuffer& buf, int shift_samples) {
  const int n = buf.size();
  if (std::abs(shift_samples) >= n)
    throw std::invalid_argument("time_shift: |shift| must be < signal length");
  if (shift_samples == 0) return buf;
  AudioBuffer shifted = buf;
  shifted.samples.setZero();
  if (shift_samples > 0) {
    shifted.samples.tail(n - shift_samples) = buf.samples.head(n - shift_samples);
  } else {
    const int k = -shift_samples;
    shifted.samples.head(n - k) = buf.samples.tail(n - k);
  }
  return shifted;
}

namespace {

Eigen::VectorXd synth_harmonic(int n, int sr, Rng& rng) {
  const double f0 = rng.uniform(80.0, 400.0);
  const int partials = static_cast<int>(rng.uniform_int(3, 8));
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
  for (int k = 1; k <= partials; ++k) {
    const double fk = k * f0;
    const double phase = rng.uniform(0.0, kTwoPi);
    if (fk >= 0.5 * sr) continue;  // drop partials at or above Nyquist
    const double amp = 1.0 / k;
    const double w = kTwoPi * fk / sr;
    for (int i = 0; i < n; ++i) x[i] += amp * std::sin(w * i + phase);
  }
  return x;
}

Eigen::VectorXd synth_chirp(int n, int sr, Rng& rng) {
  // Formant-like glide: at most an octave per clip, inside [100, 3500] Hz.
  const double f0 = rng.uniform(100.0, 1750.0);
  const double ratio = rng.uniform(1.1, 2.0);
  const double f1 = rng.uniform() < 0.5 ? std::min(f0 * ratio, 3500.0)
                                        : std::max(f0 / ratio, 100.0);
  const double phase = rng.uniform(0.0, kTwoPi);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    const double dur = static_cast<double>(n) / sr;
    x[i] = std::sin(phase + kTwoPi * (f0 * t + 0.5 * (f1 - f0) * t * t / dur));
  }
  return x;
}

Eigen::VectorXd synth_am_noise(int n, int sr, Rng& rng) {
  const double fm = rng.uniform(2.0, 8.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sr;
    x[i] = rng.normal() * (0.5 + 0.5 * std::sin(kTwoPi * fm * t));
  }
  return x;
}

}  // namespace

std::vector<AudioBuffer> synth_corpus(const CorpusSpec& spec) {
  if (spec.n_clips < 0) throw std::invalid_argument("synth_corpus: n_clips must be >= 0");
  if (spec.sample_rate <= 0) throw std::invalid_argument("synth_corpus: bad sample rate");
  const int n = static_cast<int>(std::lround(spec.clip_seconds * spec.sample_rate));
  if (n < 1) throw std::invalid_argument("synth_corpus: clip too short");
  double wsum = 0.0;
  for (double w : spec.mix) {
    if (w < 0.0) throw std::invalid_argument("synth_corpus: negative class weight");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-6)
    throw std::invalid_argument("synth_corpus: class weights must sum to 1");

  Rng base(spec.seed);
  std::vector<AudioBuffer> clips;
  clips.reserve(static_cast<size_t>(spec.n_clips));
  for (int c = 0; c < spec.n_clips; ++c) {
    Rng rng = base.fork(static_cast<std::uint64_t>(c));
    const double u = rng.uniform();
    int cls = 0;
    double acc = 0.0;
    for (int k = 0; k < 4; ++k) {
      acc += spec.mix[static_cast<size_t>(k)];
      if (u < acc) {
        cls = k;
        break;
      }
      cls = k;
    }
    Eigen::VectorXd x;
    switch (cls) {
      case 0:
        x = synth_harmonic(n, spec.sample_rate, rng);
        break;
      case 1:
        x = synth_chirp(n, spec.sample_rate, rng);
        break;
      case 2:
        x = synth_am_noise(n, spec.sample_rate, rng);
        break;
      default: {
        Eigen::VectorXd tone = synth_harmonic(n, spec.sample_rate, rng);
        tone /= std::max(tone.cwiseAbs().maxCoeff(), 1e-12);
        Eigen::VectorXd noise(n);
        for (int i = 0; i < n; ++i) noise[i] = rng.normal();
        noise /= std::max(noise.cwiseAbs().maxCoeff(), 1e-12);
        x = tone + 0.25 * noise;
        break;
      }
    }
    const double peak = x.cwiseAbs().maxCoeff();
    if (peak > 0.0) x *= 0.9 / peak;
    AudioBuffer buf;
    buf.samples = std::move(x);
    buf.sample_rate = spec.sample_rate;
    clips.push_back(std::move(buf));
  }
  return clips;
}

}  // namespace recodec
