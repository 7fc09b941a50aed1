#include "recodec/train.hpp"

#include "recodec/dsp.hpp"
#include "recodec/format.hpp"
#include "recodec/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

namespace recodec {

namespace {

constexpr double kMagEps = 1e-12;  // inside the magnitude sqrt
// Log floor -20 dB relative to O(1) bin magnitudes. A much smaller floor
// makes silent bins dominate the loss with unfittable log-ratio noise whose
// gradients inflate the Adam second moment and stall joint training.
constexpr double kLogEps = 1e-1;
const int kSpecWindows[] = {64, 128, 256};

}  // namespace

IdemKind idem_kind_from_string(const std::string& s) {
  if (s == "none") return IdemKind::none;
  if (s == "enc") return IdemKind::enc;
  if (s == "proj") return IdemKind::proj;
  if (s == "code") return IdemKind::code;
  if (s == "enc_quantized") return IdemKind::enc_quantized;
  throw std::invalid_argument("unknown idempotence loss kind: " + s);
}

std::string to_string(IdemKind kind) {
  switch (kind) {
    case IdemKind::none: return "none";
    case IdemKind::enc: return "enc";
    case IdemKind::proj: return "proj";
    case IdemKind::code: return "code";
    case IdemKind::enc_quantized: return "enc_quantized";
  }
  return "none";
}

// ---------------------------------------------------------------------------
// k-means

namespace {

int count_distinct_rows(const Eigen::Ref<const Eigen::MatrixXd>& m, int stop_at) {
  std::vector<int> order(static_cast<size_t>(m.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (m(a, j) != m(b, j)) return m(a, j) < m(b, j);
    }
    return false;
  });
  int distinct = m.rows() > 0 ? 1 : 0;
  for (size_t i = 1; i < order.size() && distinct < stop_at; ++i) {
    if (m.row(order[i]) != m.row(order[i - 1])) ++distinct;
  }
  return distinct;
}

}  // namespace

Eigen::MatrixXd kmeans_init(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                            int K, Rng& rng) {
  const Eigen::Index N = samples.rows();
  const Eigen::Index d = samples.cols();
  if (K < 1) throw std::invalid_argument("kmeans_init: K must be positive");
  if (count_distinct_rows(samples, K) < K)
    throw std::invalid_argument("kmeans_init: fewer than K distinct samples");

  Eigen::MatrixXd centroids(K, d);
  centroids.row(0) = samples.row(rng.uniform_int(0, static_cast<int>(N) - 1));
  Eigen::VectorXd dist2 =
      (samples.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < K; ++k) {
    const double total = dist2.sum();
    // With >= K distinct samples some point is still off every centroid.
    double r = rng.uniform() * total;
    Eigen::Index pick = N - 1;
    for (Eigen::Index i = 0; i < N; ++i) {
      r -= dist2[i];
      if (r <= 0.0) { pick = i; break; }
    }
    centroids.row(k) = samples.row(pick);
    dist2 = dist2.cwiseMin(
        (samples.rowwise() - centroids.row(k)).rowwise().squaredNorm());
  }

  // Lloyd iterations assign with the quantizer's own lookup rule so the
  // initial centroids are calibrated to the partition used at inference;
  // centroid updates stay plain means so row magnitudes track the data.
  std::vector<int> assign(static_cast<size_t>(N), -1);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    const auto [idx, rows] = quantize_level(centroids, samples);
    for (Eigen::Index i = 0; i < N; ++i) {
      const int best = idx[static_cast<Eigen::Index>(i)];
      if (assign[i] != best) { assign[i] = best; changed = true; }
      dist2[i] = (samples.row(i) - centroids.row(best)).squaredNorm();
    }
    if (!changed && iter > 0) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(K, d);
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(K);
    for (Eigen::Index i = 0; i < N; ++i) {
      sums.row(assign[i]) += samples.row(i);
      counts[assign[i]] += 1;
    }
    for (int k = 0; k < K; ++k) {
      if (counts[k] > 0) {
        centroids.row(k) = sums.row(k) / counts[k];
      } else {
        // Empty cluster: restart it at the point farthest from its centroid.
        Eigen::Index far = 0;
        dist2.maxCoeff(&far);
        centroids.row(k) = samples.row(far);
        dist2[far] = 0.0;
      }
    }
  }

  // No duplicate centroids: jitter exact collisions apart.
  for (bool dirty = true; dirty;) {
    dirty = false;
    for (int a = 0; a < K; ++a) {
      for (int b = a + 1; b < K; ++b) {
        if (centroids.row(a) == centroids.row(b)) {
          for (Eigen::Index j = 0; j < d; ++j)
            centroids(b, j) += 1e-4 * rng.normal();
          dirty = true;
        }
      }
    }
  }
  return centroids;
}

// ---------------------------------------------------------------------------
// Plain loss values

namespace {

Eigen::MatrixXi valid_frame_indices(int n, int window, int hop) {
  const int t = n >= window ? (n - window) / hop + 1 : 0;
  Eigen::MatrixXi idx(t, window);
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < window; ++c) idx(r, c) = r * hop + c;
  return idx;
}

// log(|DFT_w| + eps) over half-overlapping Hann frames; rows = frames.
Eigen::MatrixXd spec_log_mag(const Eigen::VectorXd& x, int w) {
  const Eigen::MatrixXi idx = valid_frame_indices(static_cast<int>(x.size()), w, w / 2);
  const Eigen::VectorXd win = hann_window(w);
  Eigen::MatrixXd f(idx.rows(), w);
  for (Eigen::Index r = 0; r < idx.rows(); ++r)
    for (int c = 0; c < w; ++c) f(r, c) = x[idx(r, c)] * win[c];
  const DftBasis& basis = dft_basis(w);
  Eigen::MatrixXd re = f * basis.re;
  Eigen::MatrixXd im = f * basis.im;
  return ((re.array().square() + im.array().square() + kMagEps).sqrt() + kLogEps)
      .log();
}

}  // namespace

double loss_reconstruction(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat,
                           const LossWeights& weights) {
  if (x.size() != x_hat.size())
    throw std::invalid_argument("loss_reconstruction: length mismatch");
  const double wave =
      (x - x_hat).squaredNorm() / static_cast<double>(x.size());
  double spec = 0.0;
  for (int w : kSpecWindows) {
    if (x.size() < w) continue;
    spec += (spec_log_mag(x_hat, w) - spec_log_mag(x, w)).array().abs().mean();
  }
  return weights.recon_wave * wave + weights.recon_spec * spec;
}

double loss_vq(const std::vector<Eigen::MatrixXd>& projected,
               const std::vector<Eigen::MatrixXd>& selected, double commit) {
  if (projected.size() != selected.size())
    throw std::invalid_argument("loss_vq: level counts differ");
  double acc = 0.0;
  for (size_t l = 0; l < projected.size(); ++l) {
    if (projected[l].rows() != selected[l].rows() ||
        projected[l].cols() != selected[l].cols())
      throw std::invalid_argument("loss_vq: shape mismatch");
    acc += (projected[l] - selected[l]).squaredNorm() /
           static_cast<double>(projected[l].rows());
  }
  return acc + commit * acc;
}

double loss_idem_enc(const CodecModel& m, const AudioBuffer& x,
                     const AudioBuffer& x_prime) {
  const Eigen::MatrixXd z1 = encode_latents(m, x);
  const Eigen::MatrixXd z2 = encode_latents(m, x_prime);
  if (z1.rows() != z2.rows())
    throw std::logic_error("idempotence loss: frame counts differ");
  return (z2 - z1).rowwise().norm().mean();
}

double loss_idem_proj(const CodecModel& m, const AudioBuffer& x,
                      const AudioBuffer& x_prime) {
  EncodeTrace t1, t2;
  encode(m, x, &t1);
  encode(m, x_prime, &t2);
  if (t1.latents.rows() != t2.latents.rows())
    throw std::logic_error("idempotence loss: frame counts differ");
  double acc = 0.0;
  for (size_t l = 0; l < t1.projected.size(); ++l)
    acc += (t2.projected[l] - t1.projected[l]).rowwise().norm().mean();
  return acc;
}

double loss_idem_code(const CodecModel& m, const AudioBuffer& x,
                      const AudioBuffer& x_prime) {
  EncodeTrace t1, t2;
  encode(m, x, &t1);
  encode(m, x_prime, &t2);
  if (t1.latents.rows() != t2.latents.rows())
    throw std::logic_error("idempotence loss: frame counts differ");
  double acc = 0.0;
  for (size_t l = 0; l < t1.selected.size(); ++l)
    acc += (t2.projected[l] - t1.selected[l]).rowwise().norm().mean();
  return acc;
}

// ---------------------------------------------------------------------------
// Graph construction

ad::Var ModelVars::find(const std::string& name) const {
  for (const auto& [n, v] : params)
    if (n == name) return v;
  throw std::logic_error("model variable not lifted: " + name);
}

ModelVars lift_model(ad::Tape& tape, const CodecModel& model,
                     bool train_codebooks, bool train_projections) {
  ModelVars vars;
  for (const auto& [name, p] : model.parameters()) {
    bool trainable = true;
    if (name.rfind("codebook.", 0) == 0) trainable = train_codebooks;
    if (name.rfind("proj_", 0) == 0) trainable = train_projections;
    vars.params.emplace_back(name, tape.leaf(*p, trainable));
  }
  return vars;
}

namespace {

struct GraphCodec {
  std::vector<ad::Var> enc_w, enc_b, dec_w, dec_b, proj_in, proj_out, cb;
};

GraphCodec organize(const ModelVars& vars, const CodecModel& m) {
  GraphCodec g;
  for (size_t i = 0; i < m.enc_w.size(); ++i) {
    g.enc_w.push_back(vars.find("enc.w" + std::to_string(i)));
    g.enc_b.push_back(vars.find("enc.b" + std::to_string(i)));
  }
  for (size_t i = 0; i < m.dec_w.size(); ++i) {
    g.dec_w.push_back(vars.find("dec.w" + std::to_string(i)));
    g.dec_b.push_back(vars.find("dec.b" + std::to_string(i)));
  }
  for (size_t l = 0; l < m.proj_in.size(); ++l) {
    g.proj_in.push_back(vars.find("proj_in." + std::to_string(l)));
    g.proj_out.push_back(vars.find("proj_out." + std::to_string(l)));
    g.cb.push_back(vars.find("codebook." + std::to_string(l)));
  }
  return g;
}

ad::Var encoder_fwd(ad::Tape& t, const GraphCodec& g, ad::Var frames) {
  ad::Var h = frames;
  const size_t n = g.enc_w.size();
  for (size_t i = 0; i + 1 < n; ++i)
    h = t.tanh(t.affine(h, g.enc_w[i], g.enc_b[i]));
  return t.affine(h, g.enc_w[n - 1], g.enc_b[n - 1]);
}

ad::Var decoder_fwd(ad::Tape& t, const GraphCodec& g, ad::Var latents) {
  ad::Var h = latents;
  const size_t n = g.dec_w.size();
  for (size_t i = 0; i + 1 < n; ++i)
    h = t.tanh(t.affine(h, g.dec_w[i], g.dec_b[i]));
  return t.affine(h, g.dec_w[n - 1], g.dec_b[n - 1]);
}

ad::Var spec_term_graph(ad::Tape& t, ad::Var x_hat, const Eigen::VectorXd& x,
                        int w) {
  const Eigen::MatrixXi idx = valid_frame_indices(static_cast<int>(x.size()), w, w / 2);
  const Eigen::VectorXd win = hann_window(w);
  ad::Var frames = t.gather(x_hat, idx);
  ad::Var windowed = t.mul(
      frames, t.constant(win.transpose().replicate(idx.rows(), 1)));
  const DftBasis& basis = dft_basis(w);
  ad::Var re = t.matmul(windowed, t.constant(basis.re));
  ad::Var im = t.matmul(windowed, t.constant(basis.im));
  ad::Var mag =
      t.sqrt(t.add_const(t.add(t.square(re), t.square(im)), kMagEps));
  ad::Var log_mag = t.log(t.add_const(mag, kLogEps));
  return t.mean(t.abs(t.sub(log_mag, t.constant(spec_log_mag(x, w)))));
}

// stop_gradient with SgFreeze support: capture records the detached value,
// replay substitutes it as a constant so finite differences see the same
// function the tape differentiates.
ad::Var freeze_sg(ad::Tape& t, ad::Var u, SgFreeze* fz) {
  if (fz == nullptr) return t.stop_gradient(u);
  if (fz->capturing) {
    fz->values.push_back(t.value(u));
    return t.stop_gradient(u);
  }
  if (fz->cursor >= fz->values.size())
    throw std::logic_error("SgFreeze: replay ran past the captured values");
  return t.constant(fz->values[fz->cursor++]);
}

// straight_through analog; the frozen form is the definitional expansion
// continuous + stop_gradient(quantized - continuous) with the offset fixed.
ad::Var freeze_st(ad::Tape& t, ad::Var continuous, ad::Var quantized,
                  SgFreeze* fz) {
  if (fz == nullptr) return t.straight_through(continuous, quantized);
  if (fz->capturing) {
    fz->values.push_back(t.value(quantized) - t.value(continuous));
    return t.straight_through(continuous, quantized);
  }
  if (fz->cursor >= fz->values.size())
    throw std::logic_error("SgFreeze: replay ran past the captured values");
  return t.add(continuous, t.constant(fz->values[fz->cursor++]));
}

template <class F>
ad::Var guarded_term(const char* term, F&& build) {
  try {
    return build();
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(std::string("non-finite loss term '") + term +
                             "': " + e.what());
  }
}

}  // namespace

Forward build_loss_graph(ad::Tape& tape, const ModelVars& vars,
                         const CodecModel& model, const AudioBuffer& excerpt,
                         const LossWeights& weights, const TrainConfig& tc,
                         const ForwardOptions& opts) {
  const CodecConfig& cfg = model.config;
  if (excerpt.sample_rate != cfg.sample_rate)
    throw std::invalid_argument("train: excerpt sample rate does not match model");
  const int n = excerpt.size();
  if (n < cfg.hop) throw std::invalid_argument("train: excerpt shorter than one hop");

  const int levels =
      (opts.active_levels >= 1 && opts.active_levels <= cfg.n_levels)
          ? opts.active_levels
          : cfg.n_levels;
  const bool idem_active = weights.idem_kind != IdemKind::none &&
                           weights.idem != 0.0 && !opts.bypass_quantizer;

  GraphCodec g = organize(vars, model);
  Forward fwd;
  ad::Tape& t = tape;

  ad::Var x_const = t.constant(excerpt.samples);
  const Eigen::MatrixXi idxm = frame_indices(n, cfg.frame_size, cfg.hop);
  const double T = static_cast<double>(idxm.rows());

  ad::Var vq_cb, vq_commit, zq;
  bool have_vq = false;

  guarded_term("reconstruction", [&] {
    ad::Var z1 = encoder_fwd(t, g, t.gather(x_const, idxm));
    fwd.latents_first = z1;
    if (opts.bypass_quantizer) {
      zq = z1;
    } else {
      ad::Var residual = z1;
      for (int l = 0; l < levels; ++l) {
        ad::Var q = t.matmul(residual, g.proj_in[l]);
        Eigen::VectorXi idx;
        if (opts.pinned_tokens_first) {
          idx = opts.pinned_tokens_first->at(l);
        } else {
          idx = quantize_level(model.codebooks[l].vectors, t.value(q)).first;
        }
        fwd.tokens_first.push_back(idx);
        ad::Var e = t.gather_rows(g.cb[l], idx);
        fwd.projected_first.push_back(q);
        fwd.selected_first.push_back(e);
        ad::Var st = freeze_st(t, q, e, opts.freeze);
        ad::Var dq = t.matmul(st, g.proj_out[l]);
        residual = t.sub(residual, dq);
        zq = l == 0 ? dq : t.add(zq, dq);

        ad::Var cb_l =
            t.scale(t.sum(t.square(t.sub(freeze_sg(t, q, opts.freeze), e))), 1.0 / T);
        ad::Var cm_l =
            t.scale(t.sum(t.square(t.sub(q, freeze_sg(t, e, opts.freeze)))), 1.0 / T);
        vq_cb = have_vq ? t.add(vq_cb, cb_l) : cb_l;
        vq_commit = have_vq ? t.add(vq_commit, cm_l) : cm_l;
        have_vq = true;
      }
    }
    fwd.x_hat = t.overlap_add(decoder_fwd(t, g, zq), cfg.hop, n);
    return fwd.x_hat;
  });

  ad::Var recon_wave =
      guarded_term("recon_wave", [&] { return t.mse(fwd.x_hat, x_const); });
  ad::Var recon_spec = guarded_term("recon_spec", [&] {
    ad::Var acc;
    bool first = true;
    for (int w : kSpecWindows) {
      if (n < w) continue;
      ad::Var term = spec_term_graph(t, fwd.x_hat, excerpt.samples, w);
      acc = first ? term : t.add(acc, term);
      first = false;
    }
    if (first) acc = t.constant_scalar(0.0);
    return acc;
  });

  ad::Var idem_term;
  if (idem_active) {
    guarded_term("idem", [&] {
      const double ref = rms(excerpt.samples);
      if (ref <= 0.0)
        throw std::invalid_argument("idempotence loss needs a non-silent excerpt");
      ad::Var rms_hat = t.sqrt(t.mean(t.square(fwd.x_hat)));
      ad::Var ratio = t.mul(t.constant_scalar(ref), t.reciprocal(rms_hat));
      ad::Var x_prime = t.scale_by(fwd.x_hat, ratio);
      if (tc.detach_roundtrip) x_prime = freeze_sg(t, x_prime, opts.freeze);
      fwd.x_prime = x_prime;

      ad::Var z2 = encoder_fwd(t, g, t.gather(x_prime, idxm));
      fwd.latents_second = z2;
      switch (weights.idem_kind) {
        case IdemKind::enc:
          idem_term = t.mean(t.l2_norm_rows(t.sub(z2, fwd.latents_first)));
          break;
        case IdemKind::enc_quantized:
          idem_term = t.mean(t.l2_norm_rows(t.sub(z2, freeze_sg(t, zq, opts.freeze))));
          break;
        case IdemKind::proj:
        case IdemKind::code: {
          ad::Var r2 = z2;
          for (int l = 0; l < levels; ++l) {
            ad::Var q2 = t.matmul(r2, g.proj_in[l]);
            fwd.projected_second.push_back(q2);
            Eigen::VectorXi idx2;
            if (opts.pinned_tokens_second) {
              idx2 = opts.pinned_tokens_second->at(l);
            } else {
              idx2 = quantize_level(model.codebooks[l].vectors, t.value(q2)).first;
            }
            fwd.tokens_second.push_back(idx2);
            ad::Var term_l =
                weights.idem_kind == IdemKind::proj
                    ? t.mean(t.l2_norm_rows(t.sub(q2, fwd.projected_first[l])))
                    : t.mean(t.l2_norm_rows(t.sub(
                          q2, freeze_sg(t, fwd.selected_first[l], opts.freeze))));
            idem_term = l == 0 ? term_l : t.add(idem_term, term_l);
            if (l + 1 < levels) {
              ad::Var e2 = t.gather_rows(g.cb[l], idx2);
              r2 = t.sub(r2, t.matmul(freeze_st(t, q2, e2, opts.freeze), g.proj_out[l]));
            }
          }
          break;
        }
        case IdemKind::none:
          break;
      }
      return idem_term;
    });
  }

  // Weighted total; zero-weighted terms stay out of the graph sum.
  ad::Var total;
  bool have_total = false;
  auto accumulate = [&](ad::Var term, double w) {
    if (w == 0.0) return;
    ad::Var scaled = t.scale(term, w);
    total = have_total ? t.add(total, scaled) : scaled;
    have_total = true;
  };
  accumulate(recon_wave, weights.recon_wave);
  accumulate(recon_spec, weights.recon_spec);
  if (have_vq) {
    accumulate(vq_cb, weights.codebook);
    accumulate(vq_commit, weights.commit);
  }
  if (idem_active) accumulate(idem_term, weights.idem);
  if (!have_total) total = t.constant_scalar(0.0);
  fwd.total = total;

  fwd.report.recon_wave = t.value(recon_wave)(0, 0);
  fwd.report.recon_spec = t.value(recon_spec)(0, 0);
  if (have_vq) {
    fwd.report.codebook = t.value(vq_cb)(0, 0);
    fwd.report.commit = t.value(vq_commit)(0, 0);
  }
  if (idem_active) fwd.report.idem = t.value(idem_term)(0, 0);
  fwd.report.total = t.value(total)(0, 0);
  return fwd;
}

LossReport evaluate_losses(const CodecModel& model, const AudioBuffer& excerpt,
                           const LossWeights& weights, const TrainConfig& tc) {
  ad::Tape tape;
  ModelVars vars = lift_model(tape, model, true, true);
  return build_loss_graph(tape, vars, model, excerpt, weights, tc).report;
}

// ---------------------------------------------------------------------------
// Optimizer

LossReport train_step(CodecModel& model, TrainState& state,
                      const std::vector<AudioBuffer>& batch,
                      const LossWeights& weights, const TrainConfig& tc) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  const bool idem_on = weights.idem_kind != IdemKind::none && weights.idem != 0.0;
  const bool all_zero = weights.recon_wave == 0.0 && weights.recon_spec == 0.0 &&
                        weights.commit == 0.0 && weights.codebook == 0.0 &&
                        !idem_on;
  if (all_zero) {
    ++state.step;
    return {};
  }

  const bool train_cb = !state.quantizer_frozen;
  const bool train_proj = !(state.quantizer_frozen && tc.freeze_projections);

  std::map<std::string, Eigen::MatrixXd> grads;
  LossReport report;
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  for (const AudioBuffer& item : batch) {
    ForwardOptions opts;
    if (state.dropout_enabled && !state.bypass_quantizer)
      opts.active_levels = state.rng.uniform_int(1, model.config.n_levels);
    opts.bypass_quantizer = state.bypass_quantizer;

    ad::Tape tape;
    ModelVars vars = lift_model(tape, model, train_cb, train_proj);
    Forward fwd = build_loss_graph(tape, vars, model, item, weights, tc, opts);
    tape.backward(fwd.total);

    for (const auto& [name, var] : vars.params) {
      if (name.rfind("codebook.", 0) == 0 && !train_cb) continue;
      if (name.rfind("proj_", 0) == 0 && !train_proj) continue;
      auto it = grads.find(name);
      if (it == grads.end())
        grads.emplace(name, tape.grad(var));
      else
        it->second += tape.grad(var);
    }
    report.total += fwd.report.total;
    report.recon_wave += fwd.report.recon_wave;
    report.recon_spec += fwd.report.recon_spec;
    report.commit += fwd.report.commit;
    report.codebook += fwd.report.codebook;
    report.idem += fwd.report.idem;
  }

  report.total *= inv_b;
  report.recon_wave *= inv_b;
  report.recon_spec *= inv_b;
  report.commit *= inv_b;
  report.codebook *= inv_b;
  report.idem *= inv_b;

  double sq_norm = 0.0;
  for (auto& [name, gm] : grads) {
    gm *= inv_b;
    sq_norm += gm.squaredNorm();
  }
  const double norm = std::sqrt(sq_norm);
  if (!std::isfinite(norm))
    throw std::runtime_error("train_step: non-finite gradient norm");
  if (tc.grad_clip_norm > 0.0 && norm > tc.grad_clip_norm) {
    const double s = tc.grad_clip_norm / norm;
    for (auto& [name, gm] : grads) gm *= s;
  }

  const long tstep = state.step + 1;
  const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(tstep));
  const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(tstep));
  constexpr double kAdamEps = 1e-8;
  for (auto& [name, p] : model.parameters()) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;  // frozen
    const Eigen::MatrixXd& gm = git->second;
    Eigen::MatrixXd& m1 = state.m1.try_emplace(name, Eigen::MatrixXd::Zero(p->rows(), p->cols())).first->second;
    Eigen::MatrixXd& m2 = state.m2.try_emplace(name, Eigen::MatrixXd::Zero(p->rows(), p->cols())).first->second;
    m1 = tc.beta1 * m1 + (1.0 - tc.beta1) * gm;
    m2 = (tc.beta2 * m2.array() + (1.0 - tc.beta2) * gm.array().square()).matrix();
    const Eigen::ArrayXXd m_hat = m1.array() / bc1;
    const Eigen::ArrayXXd v_hat = m2.array() / bc2;
    p->array() -=
        tc.lr * (m_hat / (v_hat.sqrt() + kAdamEps) + tc.weight_decay * p->array());
  }
  ++state.step;
  return report;
}

// ---------------------------------------------------------------------------
// Validation and corpus handling

double validation_recon_loss(const CodecModel& model,
                             const std::vector<AudioBuffer>& clips,
                             const LossWeights& weights) {
  if (clips.empty())
    throw std::invalid_argument("validation_recon_loss: no clips");
  double acc = 0.0;
  for (const AudioBuffer& clip : clips) {
    const AudioBuffer out = decode(model, encode(model, clip), clip.size());
    acc += loss_reconstruction(clip.samples, out.samples, weights);
  }
  return acc / static_cast<double>(clips.size());
}

double validation_si_sdr(const CodecModel& model,
                         const std::vector<AudioBuffer>& clips) {
  if (clips.empty()) throw std::invalid_argument("validation_si_sdr: no clips");
  double acc = 0.0;
  for (const AudioBuffer& clip : clips) {
    const AudioBuffer out = roundtrip(model, clip);
    acc += std::clamp(si_sdr_db(clip, out), -100.0, 100.0);
  }
  return acc / static_cast<double>(clips.size());
}

void split_corpus(const std::vector<AudioBuffer>& corpus,
                  std::vector<AudioBuffer>* train_clips,
                  std::vector<AudioBuffer>* val_clips) {
  train_clips->clear();
  val_clips->clear();
  for (size_t i = 0; i < corpus.size(); ++i) {
    if (i % 5 == 4)
      val_clips->push_back(corpus[i]);
    else
      train_clips->push_back(corpus[i]);
  }
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

class TrainLog {
 public:
  TrainLog(const std::string& path, bool with_idem) {
    if (path.empty()) return;
    out_.open(path);
    if (!out_) throw std::runtime_error("cannot open training log: " + path);
    out_ << "step,recon_wave,recon_spec,commit,codebook,idem,total,val_si_sdr\n";
    (void)with_idem;
  }
  void row(long step, const LossReport& r, double val_si_sdr) {
    if (!out_.is_open()) return;
    out_ << step << ',' << fmt_g17(r.recon_wave) << ',' << fmt_g17(r.recon_spec)
         << ',' << fmt_g17(r.commit) << ',' << fmt_g17(r.codebook) << ','
         << fmt_g17(r.idem) << ',' << fmt_g17(r.total) << ','
         << fmt_g17(val_si_sdr) << '\n';
  }

 private:
  std::ofstream out_;
};

std::vector<AudioBuffer> sample_batch(const std::vector<AudioBuffer>& clips,
                                      const CodecConfig& cfg,
                                      const TrainConfig& tc, Rng& rng) {
  const int ne = static_cast<int>(
      std::lround(tc.excerpt_seconds * static_cast<double>(cfg.sample_rate)));
  std::vector<AudioBuffer> batch;
  batch.reserve(static_cast<size_t>(tc.batch_size));
  for (int b = 0; b < tc.batch_size; ++b) {
    const AudioBuffer& clip =
        clips[static_cast<size_t>(rng.uniform_int(0, static_cast<int>(clips.size()) - 1))];
    AudioBuffer ex;
    ex.sample_rate = clip.sample_rate;
    if (clip.size() <= ne) {
      ex.samples = clip.samples;
    } else {
      const int start = rng.uniform_int(0, clip.size() - ne);
      ex.samples = clip.samples.segment(start, ne);
    }
    batch.push_back(std::move(ex));
  }
  return batch;
}

// Re-seed codebook rows that no training-set frame currently selects onto
// random live queries (jittered so no two rows collide exactly).
void refresh_dead_codes(CodecModel& model,
                        const std::vector<AudioBuffer>& train_clips, Rng& rng) {
  const CodecConfig& cfg = model.config;
  Eigen::Index total = 0;
  std::vector<Eigen::MatrixXd> latents;
  latents.reserve(train_clips.size());
  for (const AudioBuffer& clip : train_clips) {
    latents.push_back(encode_latents(model, clip));
    total += latents.back().rows();
  }
  Eigen::MatrixXd residual(total, cfg.latent_dim);
  Eigen::Index at = 0;
  for (const Eigen::MatrixXd& z : latents) {
    residual.middleRows(at, z.rows()) = z;
    at += z.rows();
  }
  for (int l = 0; l < cfg.n_levels; ++l) {
    const Eigen::MatrixXd q = residual * model.proj_in[l];
    Eigen::MatrixXd& rows = model.codebooks[l].vectors;
    const auto [idx, sel] = quantize_level(rows, q);
    std::vector<bool> used(static_cast<size_t>(rows.rows()), false);
    for (Eigen::Index i = 0; i < idx.size(); ++i) used[static_cast<size_t>(idx[i])] = true;
    for (Eigen::Index k = 0; k < rows.rows(); ++k) {
      if (used[static_cast<size_t>(k)]) continue;
      rows.row(k) = q.row(rng.uniform_int(0, static_cast<int>(q.rows()) - 1));
      for (Eigen::Index j = 0; j < rows.cols(); ++j)
        rows(k, j) += 1e-4 * rng.normal();
    }
    residual -= sel * model.proj_out[l];
  }
}

}  // namespace

CodecModel pretrain(const CodecConfig& config,
                    const std::vector<AudioBuffer>& corpus, long n_steps,
                    const LossWeights& weights, const TrainConfig& tc,
                    const std::string& log_csv_path) {
  config.validate();
  if (corpus.size() < 8)
    throw std::invalid_argument("pretrain: corpus must have at least 8 clips");
  if (n_steps < 1) throw std::invalid_argument("pretrain: n_steps must be positive");

  std::vector<AudioBuffer> train_clips, val_clips;
  split_corpus(corpus, &train_clips, &val_clips);

  CodecModel model = init_model(config);
  TrainState state;
  state.rng = Rng(tc.seed).fork(1);
  TrainLog log(log_csv_path, false);

  // Phase 1: waveform-reconstruction-only warmup with the quantizer
  // bypassed. The spectral term stays off here: from random init it rewards
  // magnitude-only (phase-scrambled) solutions that joint training cannot
  // escape; once the waveform fits, it joins harmlessly.
  const long warmup = std::min(tc.warmup_steps, n_steps);
  state.bypass_quantizer = true;
  state.dropout_enabled = false;
  LossWeights warm = weights;
  warm.recon_spec = warm.commit = warm.codebook = warm.idem = 0.0;
  warm.idem_kind = IdemKind::none;
  for (long s = 0; s < warmup; ++s) {
    auto batch = sample_batch(train_clips, config, tc, state.rng);
    LossReport r = train_step(model, state, batch, warm, tc);
    if (state.step % tc.log_every == 0)
      log.row(state.step, r, std::numeric_limits<double>::quiet_NaN());
  }

  // Phase 2: sequential k-means codebook init on projected residuals of
  // the warmed-up encoder.
  {
    Eigen::Index total_frames = 0;
    std::vector<Eigen::MatrixXd> latents;
    latents.reserve(train_clips.size());
    for (const AudioBuffer& clip : train_clips) {
      latents.push_back(encode_latents(model, clip));
      total_frames += latents.back().rows();
    }
    Eigen::MatrixXd residual(total_frames, config.latent_dim);
    Eigen::Index at = 0;
    for (const Eigen::MatrixXd& z : latents) {
      residual.middleRows(at, z.rows()) = z;
      at += z.rows();
    }
    Rng km_rng = Rng(tc.seed).fork(2);
    for (int l = 0; l < config.n_levels; ++l) {
      const Eigen::MatrixXd q = residual * model.proj_in[l];
      model.codebooks[l].vectors = kmeans_init(q, config.codebook_size, km_rng);
      auto [idx, rows] = quantize_level(model.codebooks[l].vectors, q);
      residual -= rows * model.proj_out[l];
    }
  }

  // Phase 3: joint training with codebook dropout. Every refresh interval,
  // codebook rows the training set no longer selects are re-seeded onto
  // live projected residuals; without this the codebooks lag the moving
  // encoder and rot into dead, miscalibrated rows.
  constexpr long kRefreshEvery = 500;
  state.bypass_quantizer = false;
  state.dropout_enabled = true;
  for (long s = warmup; s < n_steps; ++s) {
    auto batch = sample_batch(train_clips, config, tc, state.rng);
    LossReport r = train_step(model, state, batch, weights, tc);
    if ((s + 1 - warmup) % kRefreshEvery == 0 && s + 1 < n_steps)
      refresh_dead_codes(model, train_clips, state.rng);
    double vs = std::numeric_limits<double>::quiet_NaN();
    if (state.step % tc.val_every == 0 || state.step == n_steps) {
      vs = validation_si_sdr(model, val_clips);
      state.running_val_loss = validation_recon_loss(model, val_clips, weights);
    }
    if (state.step % tc.log_every == 0 || state.step == n_steps)
      log.row(state.step, r, vs);
  }
  return model;
}

CodecModel finetune(const CodecModel& base,
                    const std::vector<AudioBuffer>& corpus, IdemKind kind,
                    double lambda, long n_steps, const LossWeights& weights,
                    const TrainConfig& tc, const std::string& log_csv_path) {
  if (corpus.size() < 8)
    throw std::invalid_argument("finetune: corpus must have at least 8 clips");
  if (lambda < 0.0) throw std::invalid_argument("finetune: lambda must be >= 0");

  std::vector<AudioBuffer> train_clips, val_clips;
  split_corpus(corpus, &train_clips, &val_clips);

  CodecModel model = base;
  TrainState state;
  state.rng = Rng(tc.seed).fork(3);
  state.quantizer_frozen = true;
  state.dropout_enabled = false;

  LossWeights w = weights;
  w.codebook = 0.0;  // frozen codebooks receive no pull
  w.idem = lambda;
  w.idem_kind = kind;

  TrainLog log(log_csv_path, true);
  for (long s = 0; s < n_steps; ++s) {
    auto batch = sample_batch(train_clips, model.config, tc, state.rng);
    LossReport r = train_step(model, state, batch, w, tc);
    double vs = std::numeric_limits<double>::quiet_NaN();
    if (state.step % tc.val_every == 0 || state.step == n_steps) {
      vs = validation_si_sdr(model, val_clips);
      state.running_val_loss = validation_recon_loss(model, val_clips, weights);
    }
    if (state.step % tc.log_every == 0 || state.step == n_steps)
      log.row(state.step, r, vs);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Lambda sweep

SweepChoice select_lambda(double base_loss,
                          const std::vector<double>& candidate_lambdas,
                          const std::vector<double>& candidate_losses) {
  if (candidate_lambdas.empty() ||
      candidate_lambdas.size() != candidate_losses.size())
    throw std::invalid_argument("select_lambda: candidate lists must match");
  const double threshold = 1.10 * base_loss;
  SweepChoice choice;
  for (size_t i = 0; i < candidate_lambdas.size(); ++i) {
    if (candidate_losses[i] <= threshold &&
        (!choice.qualified || candidate_lambdas[i] > choice.lambda)) {
      choice.lambda = candidate_lambdas[i];
      choice.qualified = true;
    }
  }
  if (!choice.qualified)
    choice.lambda =
        *std::min_element(candidate_lambdas.begin(), candidate_lambdas.end());
  return choice;
}

SweepResult lambda_sweep(const CodecModel& base,
                         const std::vector<AudioBuffer>& corpus, IdemKind kind,
                         long steps_per_candidate, const LossWeights& weights,
                         const TrainConfig& tc) {
  if (kind == IdemKind::none)
    throw std::invalid_argument("lambda_sweep: an idempotence loss kind is required");
  std::vector<AudioBuffer> train_clips, val_clips;
  split_corpus(corpus, &train_clips, &val_clips);

  SweepResult result;
  result.candidate_lambdas = {1.0, 10.0, 100.0, 1000.0};
  result.base_loss = validation_recon_loss(base, val_clips, weights);
  for (double lambda : result.candidate_lambdas) {
    CodecModel m =
        finetune(base, corpus, kind, lambda, steps_per_candidate, weights, tc);
    result.candidate_losses.push_back(
        validation_recon_loss(m, val_clips, weights));
  }
  SweepChoice choice = select_lambda(result.base_loss, result.candidate_lambdas,
                                     result.candidate_losses);
  result.selected = choice.lambda;
  result.any_qualified = choice.qualified;
  if (!choice.qualified)
    std::cerr << "warning: no lambda candidate preserved validation quality; "
                 "falling back to "
              << result.selected << "\n";
  return result;
}

}  // namespace recodec
