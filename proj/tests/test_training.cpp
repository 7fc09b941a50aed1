#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "recodec/codec.hpp"
#include "recodec/train.hpp"
#include "gradcheck.hpp"
#include "loss_fd.hpp"
#include "tiny.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <utility>
#include <vector>

using namespace recodec;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd sorted_rows(Eigen::MatrixXd m) {
  std::vector<Eigen::Index> order(static_cast<size_t>(m.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (m(a, j) != m(b, j)) return m(a, j) < m(b, j);
    return false;
  });
  Eigen::MatrixXd out(m.rows(), m.cols());
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.row(i) = m.row(order[i]);
  return out;
}

AudioBuffer excerpt_of(const AudioBuffer& clip, int n) {
  AudioBuffer ex;
  ex.sample_rate = clip.sample_rate;
  ex.samples = clip.samples.head(n);
  return ex;
}

bool params_equal(const CodecModel& a, const CodecModel& b) {
  auto pa = a.parameters();
  auto pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i].first != pb[i].first || *pa[i].second != *pb[i].second)
      return false;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// k-means

TEST_CASE("kmeans with K distinct points returns exactly those points") {
  Rng rng(3);
  Eigen::MatrixXd samples = gradcheck::random_matrix(6, 3, rng);
  Rng km(9);
  const Eigen::MatrixXd centroids = kmeans_init(samples, 6, km);
  CHECK(sorted_rows(centroids) == sorted_rows(samples));
}

TEST_CASE("kmeans rejects degenerate inputs") {
  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(20, 4);
  Rng rng(1);
  CHECK_THROWS_AS(kmeans_init(same, 2, rng), std::invalid_argument);

  Eigen::MatrixXd two(2, 2);
  two << 0.0, 1.0, 1.0, 0.0;
  CHECK_THROWS_AS(kmeans_init(two, 3, rng), std::invalid_argument);
  CHECK_THROWS_AS(kmeans_init(two, 0, rng), std::invalid_argument);
}

TEST_CASE("kmeans recovers two separated blob means within 0.1") {
  // Blobs sit on different directions so the lookup-rule assignment and
  // the plain-L2 one agree on the split.
  Rng rng(12);
  Eigen::MatrixXd samples(400, 2);
  for (int i = 0; i < 200; ++i) {
    samples(i, 0) = 5.0 + 0.3 * rng.normal();
    samples(i, 1) = 0.1 * rng.normal();
    samples(200 + i, 0) = 0.1 * rng.normal();
    samples(200 + i, 1) = -4.0 + 0.3 * rng.normal();
  }
  Rng km(5);
  Eigen::MatrixXd c = sorted_rows(kmeans_init(samples, 2, km));
  const Eigen::Vector2d mean_a = samples.topRows(200).colwise().mean();
  const Eigen::Vector2d mean_b = samples.bottomRows(200).colwise().mean();
  CHECK((c.row(0).transpose() - mean_b).norm() < 0.1);
  CHECK((c.row(1).transpose() - mean_a).norm() < 0.1);
}

TEST_CASE("kmeans centroids are pairwise distinct") {
  Rng rng(8);
  // Heavy duplication in the data still may not produce duplicate rows.
  Eigen::MatrixXd samples(60, 3);
  for (int i = 0; i < 60; ++i)
    samples.row(i) = gradcheck::random_matrix(1, 3, rng) * ((i % 5) ? 1.0 : 0.01);
  Rng km(2);
  const Eigen::MatrixXd c = kmeans_init(samples, 12, km);
  for (int a = 0; a < 12; ++a)
    for (int b = a + 1; b < 12; ++b) CHECK(c.row(a) != c.row(b));
}

// ---------------------------------------------------------------------------
// Plain loss values

TEST_CASE("reconstruction loss is zero exactly at the identity") {
  const std::vector<AudioBuffer> clips = tiny::corpus(2);
  const Eigen::VectorXd& x = clips[0].samples;
  LossWeights w;
  CHECK(loss_reconstruction(x, x, w) == 0.0);

  Rng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd y = x;
    y[rng.uniform_int(0, static_cast<int>(x.size()) - 1)] += 0.01;
    CHECK(loss_reconstruction(x, y, w) > 0.0);
  }
  Eigen::VectorXd shorter = x.head(x.size() - 1);
  CHECK_THROWS_AS(loss_reconstruction(x, shorter, w), std::invalid_argument);
}

TEST_CASE("wave-only reconstruction equals plain MSE; FD gradient vanishes at x") {
  const std::vector<AudioBuffer> clips = tiny::corpus(1);
  const Eigen::VectorXd& x = clips[0].samples;
  Rng rng(6);
  Eigen::VectorXd y = x + 0.05 * gradcheck::random_matrix(x.size(), 1, rng).col(0);

  LossWeights w;
  w.recon_wave = 2.5;
  w.recon_spec = 0.0;
  const double mse = (x - y).squaredNorm() / static_cast<double>(x.size());
  CHECK(loss_reconstruction(x, y, w) == doctest::Approx(2.5 * mse).epsilon(1e-14));

  // Central differences at the minimum: symmetric, so exactly zero.
  const double h = 1e-4;
  for (int k : {0, 7, 100}) {
    Eigen::VectorXd up = x, down = x;
    up[k] += h;
    down[k] -= h;
    CHECK(loss_reconstruction(x, up, w) ==
          doctest::Approx(loss_reconstruction(x, down, w)).epsilon(1e-12));
  }
}

TEST_CASE("vq loss value and commit scaling") {
  Rng rng(9);
  std::vector<Eigen::MatrixXd> q{gradcheck::random_matrix(5, 3, rng),
                                 gradcheck::random_matrix(5, 3, rng)};
  CHECK(loss_vq(q, q, 0.25) == 0.0);

  std::vector<Eigen::MatrixXd> e{gradcheck::random_matrix(5, 3, rng),
                                 gradcheck::random_matrix(5, 3, rng)};
  double acc = 0.0;
  for (int l = 0; l < 2; ++l) acc += (q[l] - e[l]).squaredNorm() / 5.0;
  CHECK(loss_vq(q, e, 0.0) == doctest::Approx(acc).epsilon(1e-14));
  CHECK(loss_vq(q, e, 0.25) == doctest::Approx(1.25 * acc).epsilon(1e-14));

  std::vector<Eigen::MatrixXd> bad{e[0]};
  CHECK_THROWS_AS(loss_vq(q, bad, 0.25), std::invalid_argument);
  bad = {e[0], gradcheck::random_matrix(4, 3, rng)};
  CHECK_THROWS_AS(loss_vq(q, bad, 0.25), std::invalid_argument);
}

TEST_CASE("idempotence losses vanish or reduce to quantization error at x' == x") {
  const CodecModel m = init_model(tiny::config());
  const std::vector<AudioBuffer> clips = tiny::corpus(2);
  const AudioBuffer& x = clips[0];

  CHECK(loss_idem_enc(m, x, x) == 0.0);
  CHECK(loss_idem_proj(m, x, x) == 0.0);

  // L_code at x' == x is the distance from each projected residual to its
  // own selected row: the model's quantization error.
  EncodeTrace trace;
  encode(m, x, &trace);
  double want = 0.0;
  for (size_t l = 0; l < trace.projected.size(); ++l)
    want += (trace.projected[l] - trace.selected[l]).rowwise().norm().mean();
  CHECK(loss_idem_code(m, x, x) == doctest::Approx(want).epsilon(1e-12));
  CHECK(loss_idem_code(m, x, x) > 0.0);
}

TEST_CASE("L_proj equals L_enc when the projection is the identity") {
  CodecConfig cfg = tiny::config();
  cfg.code_dim = cfg.latent_dim;
  cfg.n_levels = 1;
  CodecModel m = init_model(cfg);
  m.proj_in[0] = Eigen::MatrixXd::Identity(cfg.latent_dim, cfg.latent_dim);
  m.proj_out[0] = Eigen::MatrixXd::Identity(cfg.latent_dim, cfg.latent_dim);

  const std::vector<AudioBuffer> clips = tiny::corpus(2);
  CHECK(loss_idem_proj(m, clips[0], clips[1]) ==
        loss_idem_enc(m, clips[0], clips[1]));
  CHECK(loss_idem_enc(m, clips[0], clips[1]) > 0.0);
}

// ---------------------------------------------------------------------------
// Graph vs plain recomputation

TEST_CASE("loss graph terms match plain recomputation") {
  const CodecModel m = init_model(tiny::config());
  const std::vector<AudioBuffer> clips = tiny::corpus(1);
  const AudioBuffer ex = excerpt_of(clips[0], 160);

  LossWeights w;
  w.idem = 0.5;
  w.idem_kind = IdemKind::code;
  TrainConfig tc;
  ad::Tape t;
  ModelVars vars = lift_model(t, m, true, true);
  const Forward fwd = build_loss_graph(t, vars, m, ex, w, tc);

  // The reconstruction path in the graph is the inference decode.
  const AudioBuffer plain = decode(m, encode(m, ex), ex.size());
  const Eigen::VectorXd x_hat = t.value(fwd.x_hat);
  CHECK((x_hat - plain.samples).lpNorm<Eigen::Infinity>() < 1e-12);

  LossWeights wave_only, spec_only;
  wave_only.recon_wave = 1.0;
  wave_only.recon_spec = 0.0;
  spec_only.recon_wave = 0.0;
  spec_only.recon_spec = 1.0;
  CHECK(fwd.report.recon_wave ==
        doctest::Approx(loss_reconstruction(ex.samples, x_hat, wave_only))
            .epsilon(1e-12));
  CHECK(fwd.report.recon_spec ==
        doctest::Approx(loss_reconstruction(ex.samples, x_hat, spec_only))
            .epsilon(1e-12));

  EncodeTrace trace;
  encode(m, ex, &trace);
  const double vq = loss_vq(trace.projected, trace.selected, 0.0);
  CHECK(fwd.report.codebook == doctest::Approx(vq).epsilon(1e-12));
  CHECK(fwd.report.commit == doctest::Approx(vq).epsilon(1e-12));

  AudioBuffer x_prime = ex;
  x_prime.samples = t.value(fwd.x_prime);
  CHECK(fwd.report.idem ==
        doctest::Approx(loss_idem_code(m, ex, x_prime)).epsilon(1e-12));

  const double total = w.recon_wave * fwd.report.recon_wave +
                       w.recon_spec * fwd.report.recon_spec +
                       w.commit * fwd.report.commit +
                       w.codebook * fwd.report.codebook + w.idem * fwd.report.idem;
  CHECK(fwd.report.total == doctest::Approx(total).epsilon(1e-12));
}

TEST_CASE("graph idem terms match the plain enc and proj losses") {
  const CodecModel m = init_model(tiny::config());
  const std::vector<AudioBuffer> clips = tiny::corpus(1);
  const AudioBuffer ex = excerpt_of(clips[0], 160);
  TrainConfig tc;

  for (IdemKind kind : {IdemKind::enc, IdemKind::proj}) {
    LossWeights w;
    w.idem = 1.0;
    w.idem_kind = kind;
    ad::Tape t;
    ModelVars vars = lift_model(t, m, true, true);
    const Forward fwd = build_loss_graph(t, vars, m, ex, w, tc);
    AudioBuffer x_prime = ex;
    x_prime.samples = t.value(fwd.x_prime);
    const double plain = kind == IdemKind::enc
                             ? loss_idem_enc(m, ex, x_prime)
                             : loss_idem_proj(m, ex, x_prime);
    CHECK(fwd.report.idem == doctest::Approx(plain).epsilon(1e-12));
  }
}

// ---------------------------------------------------------------------------
// Full-graph finite differences

TEST_CASE("every full loss graph passes finite-difference checks") {
  const std::vector<AudioBuffer> clips = tiny::corpus(2);
  const AudioBuffer ex = excerpt_of(clips[0], 160);
  Rng rng(21);

  struct Case {
    const char* name;
    LossWeights w;
  };
  std::vector<Case> cases;
  {
    Case recon{"reconstruction", {}};
    recon.w.recon_wave = 1.0;
    recon.w.recon_spec = 1.0;
    recon.w.commit = recon.w.codebook = 0.0;
    cases.push_back(recon);
    Case vq{"vq", {}};
    vq.w.recon_wave = vq.w.recon_spec = 0.0;
    vq.w.commit = 0.25;
    vq.w.codebook = 1.0;
    cases.push_back(vq);
    for (IdemKind kind : {IdemKind::enc, IdemKind::proj, IdemKind::code}) {
      Case c{"idem", {}};
      c.w.recon_wave = c.w.recon_spec = c.w.commit = c.w.codebook = 0.0;
      c.w.idem = 1.0;
      c.w.idem_kind = kind;
      cases.push_back(c);
    }
  }

  for (int seed : {1, 2}) {
    CodecConfig cfg = tiny::config();
    cfg.seed = static_cast<std::uint64_t>(seed);
    const CodecModel m = init_model(cfg);
    for (const Case& c : cases) {
      const double err = full_graph_fd(m, ex, c.w, rng);
      CAPTURE(c.name);
      CAPTURE(seed);
      CHECK(err < 1e-4);
    }
  }
}

// ---------------------------------------------------------------------------
// train_step

TEST_CASE("train_step with all weights zero leaves parameters untouched") {
  CodecModel m = init_model(tiny::config());
  const CodecModel before = m;
  TrainState state;
  LossWeights w;
  w.recon_wave = w.recon_spec = w.commit = w.codebook = w.idem = 0.0;
  const std::vector<AudioBuffer> clips = tiny::corpus(2);

  const LossReport r = train_step(m, state, {clips[0]}, w, tiny::fast_train());
  CHECK(params_equal(m, before));
  CHECK(state.step == 1);
  CHECK(r.total == 0.0);

  CHECK_THROWS_AS(train_step(m, state, {}, w, tiny::fast_train()),
                  std::invalid_argument);
}

TEST_CASE("train_step updates parameters and keeps moments shaped like them") {
  CodecModel m = init_model(tiny::config());
  const CodecModel before = m;
  TrainState state;
  state.dropout_enabled = false;
  LossWeights w;
  const std::vector<AudioBuffer> clips = tiny::corpus(2);

  train_step(m, state, {excerpt_of(clips[0], 160)}, w, tiny::fast_train());
  CHECK(state.step == 1);
  CHECK_FALSE(params_equal(m, before));
  for (auto& [name, p] : m.parameters()) {
    REQUIRE(state.m1.count(name) == 1);
    REQUIRE(state.m2.count(name) == 1);
    CHECK(state.m1.at(name).rows() == p->rows());
    CHECK(state.m1.at(name).cols() == p->cols());
    CHECK(state.m2.at(name).rows() == p->rows());
    CHECK(state.m2.at(name).cols() == p->cols());
  }
}

TEST_CASE("train_step is deterministic given the seed") {
  const std::vector<AudioBuffer> clips = tiny::corpus(4);
  LossWeights w;
  auto run = [&] {
    CodecModel m = init_model(tiny::config());
    TrainState state;
    state.rng = Rng(77);
    for (int s = 0; s < 5; ++s)
      train_step(m, state, {excerpt_of(clips[s % 4], 160)}, w, tiny::fast_train());
    return m;
  };
  const CodecModel a = run();
  const CodecModel b = run();
  CHECK(params_equal(a, b));
}

TEST_CASE("non-finite values abort with a diagnostic naming the term") {
  const std::vector<AudioBuffer> clips = tiny::corpus(1);
  const AudioBuffer ex = excerpt_of(clips[0], 160);

  // A poisoned parameter is caught the moment it is lifted.
  CodecModel nan_model = init_model(tiny::config());
  nan_model.enc_w[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  LossWeights w;
  CHECK_THROWS_WITH_AS(evaluate_losses(nan_model, ex, w),
                       doctest::Contains("non-finite"), std::runtime_error);

  // Finite parameters whose roundtrip is exactly silent blow up the
  // volume-matching 1/rms inside the idempotence term.
  CodecModel silent = init_model(tiny::config());
  for (auto& dw : silent.dec_w) dw.setZero();
  for (auto& db : silent.dec_b) db.setZero();
  LossWeights iw;
  iw.idem = 1.0;
  iw.idem_kind = IdemKind::enc;
  CHECK_THROWS_WITH_AS(evaluate_losses(silent, ex, iw),
                       doctest::Contains("non-finite loss term 'idem'"),
                       std::runtime_error);
}

TEST_CASE("one small step on L_enc alone does not increase it") {
  const std::vector<AudioBuffer> clips = tiny::corpus(10);
  TrainConfig tc = tiny::fast_train();
  LossWeights pw;
  CodecModel m = pretrain(tiny::config(), clips, 60, pw, tc);

  LossWeights w;
  w.recon_wave = w.recon_spec = w.commit = w.codebook = 0.0;
  w.idem = 1.0;
  w.idem_kind = IdemKind::enc;
  TrainConfig step_tc = tc;
  step_tc.lr = 1e-5;
  step_tc.weight_decay = 0.0;

  const AudioBuffer ex = excerpt_of(clips[0], 160);
  const double before = evaluate_losses(m, ex, w).idem;
  TrainState state;
  state.dropout_enabled = false;
  train_step(m, state, {ex}, w, step_tc);
  const double after = evaluate_losses(m, ex, w).idem;
  CHECK(after <= before + 1e-9);
}

TEST_CASE("500 steps on a 4-clip corpus halve the reconstruction loss") {
  CodecConfig cfg = tiny::config();
  const std::vector<AudioBuffer> clips = tiny::corpus(4);
  LossWeights w;
  TrainConfig tc = tiny::fast_train();

  CodecModel m = init_model(cfg);
  const double before = validation_recon_loss(m, clips, w);
  TrainState state;
  state.rng = Rng(tc.seed).fork(1);
  // Short bypass warmup, k-means-free: raw straight-through training.
  state.bypass_quantizer = true;
  state.dropout_enabled = false;
  for (int s = 0; s < 40; ++s)
    train_step(m, state, {excerpt_of(clips[s % 4], 400)}, w, tc);
  state.bypass_quantizer = false;
  for (int s = 40; s < 500; ++s)
    train_step(m, state, {excerpt_of(clips[s % 4], 400)}, w, tc);
  const double after = validation_recon_loss(m, clips, w);
  CHECK(after <= 0.5 * before);
}

// ---------------------------------------------------------------------------
// pretrain / finetune protocols

TEST_CASE("pretrain validates its inputs") {
  const std::vector<AudioBuffer> few = tiny::corpus(7);
  LossWeights w;
  CHECK_THROWS_AS(pretrain(tiny::config(), few, 10, w, tiny::fast_train()),
                  std::invalid_argument);
  const std::vector<AudioBuffer> clips = tiny::corpus(8);
  CHECK_THROWS_AS(pretrain(tiny::config(), clips, 0, w, tiny::fast_train()),
                  std::invalid_argument);
}

TEST_CASE("pretrain is deterministic and writes the training log") {
  const std::vector<AudioBuffer> clips = tiny::corpus(10);
  LossWeights w;
  TrainConfig tc = tiny::fast_train();
  tc.warmup_steps = 20;
  tc.log_every = 10;
  tc.val_every = 30;

  const fs::path dir = fs::temp_directory_path() / "recodec_test_training";
  fs::create_directories(dir);
  const fs::path log = dir / "pretrain_log.csv";

  const CodecModel a = pretrain(tiny::config(), clips, 60, w, tc, log.string());
  const CodecModel b = pretrain(tiny::config(), clips, 60, w, tc);
  CHECK(params_equal(a, b));
  CHECK(validation_recon_loss(a, clips, w) == validation_recon_loss(b, clips, w));

  std::ifstream in(log);
  std::string header;
  REQUIRE(std::getline(in, header));
  CHECK(header == "step,recon_wave,recon_spec,commit,codebook,idem,total,val_si_sdr");
  int rows = 0;
  for (std::string line; std::getline(in, line);) ++rows;
  CHECK(rows == 6);  // steps 10..60
}

TEST_CASE("finetune freezes codebooks and honors the projection flag") {
  const std::vector<AudioBuffer> clips = tiny::corpus(10);
  LossWeights w;
  TrainConfig tc = tiny::fast_train();
  const CodecModel base = pretrain(tiny::config(), clips, 50, w, tc);

  const CodecModel tuned = finetune(base, clips, IdemKind::code, 100.0, 8, w, tc);
  for (int l = 0; l < base.config.n_levels; ++l)
    CHECK(tuned.codebooks[l].vectors == base.codebooks[l].vectors);
  CHECK(tuned.enc_w[0] != base.enc_w[0]);  // the rest still trains
  CHECK(tuned.proj_in[0] != base.proj_in[0]);

  TrainConfig frozen_tc = tc;
  frozen_tc.freeze_projections = true;
  const CodecModel locked =
      finetune(base, clips, IdemKind::code, 100.0, 8, w, frozen_tc);
  for (int l = 0; l < base.config.n_levels; ++l) {
    CHECK(locked.codebooks[l].vectors == base.codebooks[l].vectors);
    CHECK(locked.proj_in[l] == base.proj_in[l]);
    CHECK(locked.proj_out[l] == base.proj_out[l]);
  }
  CHECK(locked.enc_w[0] != base.enc_w[0]);

  CHECK_THROWS_AS(finetune(base, clips, IdemKind::code, -1.0, 4, w, tc),
                  std::invalid_argument);
}

TEST_CASE("finetune with lambda zero ignores the idem kind entirely") {
  const std::vector<AudioBuffer> clips = tiny::corpus(10);
  LossWeights w;
  TrainConfig tc = tiny::fast_train();
  const CodecModel base = pretrain(tiny::config(), clips, 50, w, tc);

  const CodecModel a = finetune(base, clips, IdemKind::enc, 0.0, 6, w, tc);
  const CodecModel b = finetune(base, clips, IdemKind::code, 0.0, 6, w, tc);
  CHECK(params_equal(a, b));
}

// ---------------------------------------------------------------------------
// Corpus split and lambda selection

TEST_CASE("split_corpus sends every fifth clip to validation in order") {
  const std::vector<AudioBuffer> clips = tiny::corpus(11);
  std::vector<AudioBuffer> train_clips, val_clips;
  split_corpus(clips, &train_clips, &val_clips);
  CHECK(train_clips.size() == 9);
  CHECK(val_clips.size() == 2);
  CHECK(val_clips[0].samples == clips[4].samples);
  CHECK(val_clips[1].samples == clips[9].samples);
  CHECK(train_clips[0].samples == clips[0].samples);
  CHECK(train_clips[4].samples == clips[5].samples);
}

TEST_CASE("select_lambda follows the largest-qualifying rule on all 16 patterns") {
  const std::vector<double> lambdas{1.0, 10.0, 100.0, 1000.0};
  const double base = 2.0;
  for (int mask = 0; mask < 16; ++mask) {
    std::vector<double> losses(4);
    double want = 1.0;
    bool any = false;
    for (int i = 0; i < 4; ++i) {
      const bool ok = mask & (1 << i);
      losses[static_cast<size_t>(i)] = ok ? base : 3.0 * base;
      if (ok) {
        want = lambdas[static_cast<size_t>(i)];
        any = true;
      }
    }
    const SweepChoice choice = select_lambda(base, lambdas, losses);
    CHECK(choice.qualified == any);
    CHECK(choice.lambda == want);
  }

  // Boundary: exactly 1.10x the base still qualifies.
  const SweepChoice edge =
      select_lambda(1.0, lambdas, {1.1, 1.1000001, 1.2, 1.3});
  CHECK(edge.qualified);
  CHECK(edge.lambda == 1.0);

  // The worked example: third candidate is the largest within threshold.
  const SweepChoice worked =
      select_lambda(1.0, lambdas, {1.0, 1.05, 1.09, 1.5});
  CHECK(worked.qualified);
  CHECK(worked.lambda == 100.0);

  CHECK_THROWS_AS(select_lambda(1.0, lambdas, {1.0}), std::invalid_argument);
  CHECK_THROWS_AS(select_lambda(1.0, {}, {}), std::invalid_argument);
}

TEST_CASE("lambda_sweep runs each candidate and reports the chosen value") {
  const std::vector<AudioBuffer> clips = tiny::corpus(10);
  LossWeights w;
  TrainConfig tc = tiny::fast_train();
  const CodecModel base = pretrain(tiny::config(), clips, 50, w, tc);

  const SweepResult sweep = lambda_sweep(base, clips, IdemKind::enc, 2, w, tc);
  CHECK(sweep.candidate_lambdas == std::vector<double>{1.0, 10.0, 100.0, 1000.0});
  CHECK(sweep.candidate_losses.size() == 4);
  CHECK(sweep.base_loss > 0.0);
  const bool member =
      std::count(sweep.candidate_lambdas.begin(), sweep.candidate_lambdas.end(),
                 sweep.selected) == 1;
  CHECK(member);

  CHECK_THROWS_AS(lambda_sweep(base, clips, IdemKind::none, 2, w, tc),
                  std::invalid_argument);
}

TEST_CASE("idem kind names round-trip") {
  for (IdemKind k : {IdemKind::none, IdemKind::enc, IdemKind::proj,
                     IdemKind::code, IdemKind::enc_quantized})
    CHECK(idem_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(idem_kind_from_string("bogus"), std::invalid_argument);
}
