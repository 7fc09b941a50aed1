#include "recodec/cli.hpp"

#include "recodec/config.hpp"
#include "recodec/format.hpp"
#include "recodec/harness.hpp"
#include "recodec/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace recodec {

namespace {

namespace fs = std::filesystem;

std::vector<AudioBuffer> load_corpus(const std::string& dir) {
  std::vector<AudioBuffer> corpus;
  for (auto& clip : load_clips(dir)) corpus.push_back(std::move(clip.audio));
  return corpus;
}

std::string stem_of(const std::string& path) {
  return fs::path(path).stem().string();
}

int cmd_synth(const std::string& spec_path, const std::string& out_dir,
              bool seed_given, std::uint64_t seed) {
  CorpusSpec spec;
  if (!spec_path.empty()) apply_corpus_config(KvConfig::parse_file(spec_path), &spec);
  if (seed_given) spec.seed = seed;
  const auto clips = synth_corpus(spec);
  fs::create_directories(out_dir);
  for (size_t i = 0; i < clips.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%03zu.wav", i);
    write_wav(clips[i], (fs::path(out_dir) / name).string());
  }
  std::cout << "wrote " << clips.size() << " clips to " << out_dir << "\n";
  return 0;
}

int cmd_pretrain(const std::string& config_path, const std::string& data_dir,
                 long steps, const std::string& out_ckpt,
                 const std::string& log_path, bool seed_given,
                 std::uint64_t seed) {
  CodecConfig cfg;
  LossWeights weights;
  TrainConfig tc;
  if (!config_path.empty())
    apply_model_config(KvConfig::parse_file(config_path), &cfg, &weights, &tc);
  if (seed_given) {
    cfg.seed = seed;
    tc.seed = seed;
  }
  const auto corpus = load_corpus(data_dir);
  const std::string log = log_path.empty() ? out_ckpt + ".log.csv" : log_path;
  const CodecModel model = pretrain(cfg, corpus, steps, weights, tc, log);
  save_model(model, out_ckpt);
  std::cout << "saved checkpoint " << out_ckpt << " (training log: " << log
            << ")\n";
  return 0;
}

int cmd_finetune(const std::string& ckpt, const std::string& config_path,
                 const std::string& data_dir, const std::string& idem,
                 const std::string& lambda_arg, long steps, long sweep_steps,
                 const std::string& out_ckpt, const std::string& log_path,
                 bool seed_given, std::uint64_t seed) {
  const CodecModel base = load_model(ckpt);
  CodecConfig scratch = base.config;  // architecture comes from the checkpoint
  LossWeights weights;
  TrainConfig tc;
  if (!config_path.empty())
    apply_model_config(KvConfig::parse_file(config_path), &scratch, &weights, &tc);
  if (seed_given) tc.seed = seed;
  const IdemKind kind = idem_kind_from_string(idem);
  const auto corpus = load_corpus(data_dir);

  double lambda = 0.0;
  if (lambda_arg == "sweep") {
    if (kind == IdemKind::none)
      throw std::invalid_argument("--lambda sweep needs an idempotence loss (--idem)");
    const SweepResult sweep =
        lambda_sweep(base, corpus, kind, sweep_steps, weights, tc);
    std::cout << "lambda sweep (base validation loss "
              << fmt_g17(sweep.base_loss) << "):\n";
    for (size_t i = 0; i < sweep.candidate_lambdas.size(); ++i) {
      std::cout << "  lambda " << sweep.candidate_lambdas[i]
                << ": validation loss " << fmt_g17(sweep.candidate_losses[i])
                << (sweep.candidate_losses[i] <= 1.10 * sweep.base_loss
                        ? "  (preserved)"
                        : "  (degraded)")
                << "\n";
    }
    std::cout << "selected lambda = " << sweep.selected << "\n";
    lambda = sweep.selected;
  } else {
    try {
      size_t used = 0;
      lambda = std::stod(lambda_arg, &used);
      if (used != lambda_arg.size()) throw std::invalid_argument(lambda_arg);
    } catch (const std::exception&) {
      throw std::invalid_argument("--lambda must be a number or 'sweep'");
    }
  }

  const std::string log = log_path.empty() ? out_ckpt + ".log.csv" : log_path;
  const CodecModel tuned =
      finetune(base, corpus, kind, lambda, steps, weights, tc, log);
  save_model(tuned, out_ckpt);
  std::cout << "saved checkpoint " << out_ckpt << " (idem=" << to_string(kind)
            << ", lambda=" << lambda << ")\n";
  return 0;
}

int cmd_eval_idem(const std::string& ckpt, const std::string& data_dir,
                  int iters, const std::string& out_dir, std::uint64_t seed) {
  const CodecModel model = load_model(ckpt);
  const auto clips = load_clips(data_dir);
  EvalReport report =
      eval_multiround(make_handle(model, stem_of(ckpt)), clips, iters);
  report.config_hash = config_hash_hex(model.config);
  report.seed = seed;
  emit_report(report, out_dir);
  std::cout << "wrote rows.csv, summary.json, plot.dat to " << out_dir << "\n";
  return 0;
}

int cmd_eval_phase(const std::vector<std::string>& ckpts,
                   const std::string& data_dir, double max_shift_ms, int iters,
                   const std::string& out_dir) {
  const auto clips = load_clips(data_dir);
  std::vector<CodecHandle> handles;
  handles.reserve(ckpts.size());
  for (const std::string& path : ckpts)
    handles.push_back(make_handle(load_model(path), stem_of(path)));
  const ShiftReport report = eval_phase(handles, clips, max_shift_ms, iters);
  emit_phase_report(report, out_dir);
  std::cout << "wrote shifts.csv, phase_summary.json, phase_plot.dat to "
            << out_dir << "\n";
  return 0;
}

int cmd_report(const std::string& in_dir) {
  const fs::path idem = fs::path(in_dir) / "summary.json";
  const fs::path phase = fs::path(in_dir) / "phase_summary.json";
  if (fs::exists(idem)) {
    std::ifstream in(idem);
    const nlohmann::json j = nlohmann::json::parse(in);
    std::cout << "model " << j["model"].get<std::string>() << "  (config "
              << j["config_hash"].get<std::string>() << ", seed " << j["seed"]
              << ", " << j["clips"].size() << " clips)\n";
    std::printf("%9s %12s %10s %12s %13s\n", "iteration", "si_sdr_db",
                "lsd_db", "match_rate", "entropy_pct");
    for (const auto& row : j["per_iteration"]) {
      const double match =
          row["match_rate"].is_null() ? std::nan("") : row["match_rate"].get<double>();
      std::printf("%9d %12.4f %10.4f %12.4f %13.4f\n",
                  row["iteration"].get<int>(), row["si_sdr_db"].get<double>(),
                  row["lsd_db"].get<double>(), match,
                  row["entropy_pct"].get<double>());
    }
    return 0;
  }
  if (fs::exists(phase)) {
    std::ifstream in(phase);
    const nlohmann::json j = nlohmann::json::parse(in);
    std::printf("%-24s %16s %12s\n", "model", "mean_match_rate", "si_sdr_db");
    for (const auto& row : j["models"]) {
      std::printf("%-24s %16.4f %12.4f\n",
                  row["model"].get<std::string>().c_str(),
                  row["mean_match_rate"].get<double>(),
                  row["si_sdr_at_n"].get<double>());
    }
    if (j["pearson_r"].is_null())
      std::cout << "pearson_r: undefined (degenerate axis)\n";
    else
      std::cout << "pearson_r: " << fmt_g17(j["pearson_r"].get<double>()) << "\n";
    return 0;
  }
  throw std::invalid_argument("no summary.json or phase_summary.json in " + in_dir);
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"residual-vector-quantizer audio codec: train, re-encode, measure"};
  app.name("recodec");
  app.require_subcommand(1);

  std::string spec_path, config_path, data_dir, out_path, ckpt_path, in_dir;
  std::string log_path, idem = "none", lambda_arg = "0";
  std::vector<std::string> ckpts;
  long steps = 1000, sweep_steps = 2000;
  int iters = 25;
  double max_shift_ms = 2.0;
  std::uint64_t seed = 42;

  auto* synth = app.add_subcommand("synth-data", "generate a synthetic wav corpus");
  synth->add_option("--spec", spec_path, "corpus spec file (key = value)");
  synth->add_option("--out", out_path, "output directory")->required();
  auto* synth_seed = synth->add_option("--seed", seed, "rng seed (default 42)");

  auto* pre = app.add_subcommand("pretrain", "train a codec from scratch");
  pre->add_option("--config", config_path, "model/training config (key = value)");
  pre->add_option("--data", data_dir, "wav corpus directory")->required();
  pre->add_option("--steps", steps, "total steps incl. warmup")->required();
  pre->add_option("--out", out_path, "output checkpoint")->required();
  pre->add_option("--log", log_path, "training log csv (default <out>.log.csv)");
  auto* pre_seed = pre->add_option("--seed", seed, "rng seed (default 42)");

  auto* fine = app.add_subcommand("finetune", "fine-tune with an idempotence loss");
  fine->add_option("--ckpt", ckpt_path, "pretrained checkpoint")->required();
  fine->add_option("--config", config_path, "loss/training config (key = value)");
  fine->add_option("--data", data_dir, "wav corpus directory")->required();
  fine->add_option("--idem", idem,
                   "idempotence loss: none|enc|proj|code|enc_quantized");
  fine->add_option("--lambda", lambda_arg, "loss weight, or 'sweep'");
  fine->add_option("--steps", steps, "fine-tune steps")->required();
  fine->add_option("--sweep-steps", sweep_steps,
                   "per-candidate budget for --lambda sweep (default 2000)");
  fine->add_option("--out", out_path, "output checkpoint")->required();
  fine->add_option("--log", log_path, "training log csv (default <out>.log.csv)");
  auto* fine_seed = fine->add_option("--seed", seed, "rng seed (default 42)");

  auto* evi = app.add_subcommand("eval-idem", "multi-round re-encoding evaluation");
  evi->add_option("--ckpt", ckpt_path, "model checkpoint")->required();
  evi->add_option("--data", data_dir, "wav clips directory")->required();
  evi->add_option("--iters", iters, "encoding iterations (default 25)");
  evi->add_option("--out", out_path, "report directory")->required();
  evi->add_option("--seed", seed, "recorded in the report (default 42)");

  auto* evp = app.add_subcommand("eval-phase", "token stability under time shifts");
  evp->add_option("--ckpts", ckpts, "model checkpoints")->required()->expected(-1);
  evp->add_option("--data", data_dir, "wav clips directory")->required();
  evp->add_option("--max-shift-ms", max_shift_ms, "max |shift| in ms (default 2)");
  evp->add_option("--iters", iters, "iterations for the SI-SDR pairing");
  evp->add_option("--out", out_path, "report directory")->required();

  auto* rep = app.add_subcommand("report", "print a summary of an eval directory");
  rep->add_option("--in", in_dir, "report directory")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (app.got_subcommand(synth))
      return cmd_synth(spec_path, out_path, synth_seed->count() > 0, seed);
    if (app.got_subcommand(pre))
      return cmd_pretrain(config_path, data_dir, steps, out_path, log_path,
                          pre_seed->count() > 0, seed);
    if (app.got_subcommand(fine))
      return cmd_finetune(ckpt_path, config_path, data_dir, idem, lambda_arg,
                          steps, sweep_steps, out_path, log_path,
                          fine_seed->count() > 0, seed);
    if (app.got_subcommand(evi))
      return cmd_eval_idem(ckpt_path, data_dir, iters, out_path, seed);
    if (app.got_subcommand(evp))
      return cmd_eval_phase(ckpts, data_dir, max_shift_ms, iters, out_path);
    if (app.got_subcommand(rep)) return cmd_report(in_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace recodec
