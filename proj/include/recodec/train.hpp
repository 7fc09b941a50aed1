#pragma once

#include "recodec/audio.hpp"
#include "recodec/autodiff.hpp"
#include "recodec/codec.hpp"
#include "recodec/rng.hpp"

#include <limits>
#include <map>
#include <string>
#include <vector>

namespace recodec {

// Which idempotence regularizer to apply between the first and second
// encoding of a signal. enc_quantized targets the quantized latents of
// the first encoding instead of the continuous ones.
enum class IdemKind { none, enc, proj, code, enc_quantized };

IdemKind idem_kind_from_string(const std::string& s);
std::string to_string(IdemKind kind);

struct LossWeights {
  // Waveform MSE sits orders of magnitude below the log-spectral L1 once
  // training gets going; 50 keeps the two reconstruction terms comparable
  // (at 1 the spectral term wins and training settles phase-scrambled).
  double recon_wave = 50.0;
  double recon_spec = 1.0;
  double commit = 0.25;
  double codebook = 1.0;
  double idem = 0.0;  // lambda
  IdemKind idem_kind = IdemKind::none;
};

struct TrainConfig {
  int batch_size = 4;
  double excerpt_seconds = 0.5;
  double lr = 1e-4;
  double beta1 = 0.8;
  double beta2 = 0.99;
  double weight_decay = 1e-4;
  double grad_clip_norm = 1.0;
  int log_every = 100;
  int val_every = 500;
  long warmup_steps = 1000;         // reconstruction-only, before k-means init
  bool freeze_projections = false;  // extend the quantizer freeze to f_p/f_dp
  bool detach_roundtrip = false;    // cut gradients through x' entirely
  std::uint64_t seed = 42;
};

struct TrainState {
  long step = 0;
  std::map<std::string, Eigen::MatrixXd> m1, m2;  // AdamW moments by name
  Rng rng{42};
  double running_val_loss = std::numeric_limits<double>::quiet_NaN();
  bool quantizer_frozen = false;
  bool dropout_enabled = true;
  bool bypass_quantizer = false;  // warmup: decoder reads continuous latents
};

struct LossReport {
  double total = 0.0;
  double recon_wave = 0.0;
  double recon_spec = 0.0;
  double commit = 0.0;
  double codebook = 0.0;
  double idem = 0.0;
};

// k-means++ seeding followed by at most 50 Lloyd iterations. Duplicate
// centroids are jittered apart by 1e-4 noise; fewer than K distinct
// samples is an error. Returns K x d centroids.
Eigen::MatrixXd kmeans_init(const Eigen::Ref<const Eigen::MatrixXd>& samples,
                            int K, Rng& rng);

// Plain (tape-free) loss values, arithmetic-identical to the graph terms.
// Waveform MSE plus a multi-window log-magnitude spectral distance.
double loss_reconstruction(const Eigen::VectorXd& x, const Eigen::VectorXd& x_hat,
                           const LossWeights& weights);

// Codebook + commitment value: (1 + commit) * sum_l mean_t ||q_l - e_l||^2.
// The two terms differ only in which operand the gradient reaches.
double loss_vq(const std::vector<Eigen::MatrixXd>& projected,
               const std::vector<Eigen::MatrixXd>& selected, double commit);

// Idempotence losses between the encodings of x and its roundtrip x':
// per-frame L2 distance, mean over frames (summed over levels in d-space
// for the proj/code variants; code targets first-encoding selected rows).
double loss_idem_enc(const CodecModel& m, const AudioBuffer& x,
                     const AudioBuffer& x_prime);
double loss_idem_proj(const CodecModel& m, const AudioBuffer& x,
                      const AudioBuffer& x_prime);
double loss_idem_code(const CodecModel& m, const AudioBuffer& x,
                      const AudioBuffer& x_prime);

// Parameter leaves of a model lifted onto a tape, in parameters() order.
struct ModelVars {
  std::vector<std::pair<std::string, ad::Var>> params;
  ad::Var find(const std::string& name) const;
};
ModelVars lift_model(ad::Tape& tape, const CodecModel& model,
                     bool train_codebooks, bool train_projections);

// Capture/replay of the values the loss graph detaches (stop_gradient
// operands and straight-through offsets). The tape differentiates the
// surrogate in which those values are constants, so a finite-difference
// oracle must difference that same surrogate: one capture build records
// the detached values, then replay builds substitute them as constants.
// Production training never uses this.
struct SgFreeze {
  bool capturing = true;
  std::vector<Eigen::MatrixXd> values;
  std::size_t cursor = 0;  // replay position; reset before each build
};

// Controls for one forward build. Token selections can be pinned so
// finite-difference checks evaluate a fixed-index (differentiable) graph.
struct ForwardOptions {
  int active_levels = -1;  // codebook dropout; -1 means all levels
  bool bypass_quantizer = false;  // reconstruction-only warmup path
  const std::vector<Eigen::VectorXi>* pinned_tokens_first = nullptr;
  const std::vector<Eigen::VectorXi>* pinned_tokens_second = nullptr;
  SgFreeze* freeze = nullptr;
};

// One training forward pass: reconstruction, VQ and (optionally)
// idempotence terms, plus handles to intermediate nodes.
struct Forward {
  ad::Var total;
  LossReport report;
  ad::Var x_hat, x_prime;
  ad::Var latents_first, latents_second;
  std::vector<ad::Var> projected_first, projected_second;
  std::vector<ad::Var> selected_first;
  std::vector<Eigen::VectorXi> tokens_first, tokens_second;
};

Forward build_loss_graph(ad::Tape& tape, const ModelVars& vars,
                         const CodecModel& model, const AudioBuffer& excerpt,
                         const LossWeights& weights, const TrainConfig& tc,
                         const ForwardOptions& opts = {});

// Loss values of one forward pass, no update.
LossReport evaluate_losses(const CodecModel& model, const AudioBuffer& excerpt,
                           const LossWeights& weights,
                           const TrainConfig& tc = {});

// One AdamW update (lr/betas/decay/clip from tc) over a batch of excerpts.
// With every loss weight zero the step is a no-op and parameters are
// untouched. Frozen tensors never receive updates.
LossReport train_step(CodecModel& model, TrainState& state,
                      const std::vector<AudioBuffer>& batch,
                      const LossWeights& weights, const TrainConfig& tc);

// Mean reconstruction loss (wave + spectral terms only) over whole clips.
double validation_recon_loss(const CodecModel& model,
                             const std::vector<AudioBuffer>& clips,
                             const LossWeights& weights);

// Mean SI-SDR of roundtrips over clips, capped to +-100 dB per clip.
double validation_si_sdr(const CodecModel& model,
                         const std::vector<AudioBuffer>& clips);

// Every 5th clip goes to validation, the rest to training.
void split_corpus(const std::vector<AudioBuffer>& corpus,
                  std::vector<AudioBuffer>* train_clips,
                  std::vector<AudioBuffer>* val_clips);

// Reconstruction-only warmup, sequential k-means codebook initialization
// on warmed-up latents, then joint training with codebook dropout.
// n_steps counts warmup and joint steps together. Logs a CSV of
// step, loss terms and validation SI-SDR when log_csv_path is non-empty.
CodecModel pretrain(const CodecConfig& config,
                    const std::vector<AudioBuffer>& corpus, long n_steps,
                    const LossWeights& weights, const TrainConfig& tc,
                    const std::string& log_csv_path = "");

// Freezes the quantizer (codebooks; optionally projections), disables
// codebook dropout, drops the codebook loss term and adds lambda times
// the chosen idempotence loss. The roundtrip x' is recomputed from the
// current model every step.
CodecModel finetune(const CodecModel& base,
                    const std::vector<AudioBuffer>& corpus, IdemKind kind,
                    double lambda, long n_steps, const LossWeights& weights,
                    const TrainConfig& tc, const std::string& log_csv_path = "");

// Selection rule: the largest candidate whose validation loss is at most
// 1.10x the base loss; if none qualifies, the smallest candidate.
struct SweepChoice {
  double lambda = 0.0;
  bool qualified = false;
};
SweepChoice select_lambda(double base_loss,
                          const std::vector<double>& candidate_lambdas,
                          const std::vector<double>& candidate_losses);

struct SweepResult {
  double selected = 0.0;
  bool any_qualified = false;
  double base_loss = 0.0;
  std::vector<double> candidate_lambdas;
  std::vector<double> candidate_losses;
};

// Short fine-tune per candidate in {1, 10, 100, 1000}, then select_lambda.
SweepResult lambda_sweep(const CodecModel& base,
                         const std::vector<AudioBuffer>& corpus, IdemKind kind,
                         long steps_per_candidate, const LossWeights& weights,
                         const TrainConfig& tc);

}  // namespace recodec
