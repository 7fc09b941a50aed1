#include "recodec/harness.hpp"

#include "recodec/format.hpp"
#include "recodec/hash.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>

namespace recodec {

namespace {

double capped(double db) { return std::clamp(db, -100.0, 100.0); }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("failed writing: " + path.string());
}

}  // namespace

CodecHandle make_handle(const CodecModel& model, const std::string& name) {
  auto shared = std::make_shared<CodecModel>(model);
  CodecHandle h;
  h.name = name;
  h.hop = shared->config.hop;
  h.sample_rate = shared->config.sample_rate;
  h.encode = [shared](const AudioBuffer& x) { return encode(*shared, x); };
  h.decode = [shared](const TokenGrid& tokens, int n_samples) {
    return decode(*shared, tokens, n_samples);
  };
  return h;
}

std::vector<NamedClip> load_clips(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir))
    throw std::invalid_argument("not a directory: " + dir);
  std::vector<fs::path> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      paths.push_back(entry.path());
  }
  if (paths.empty()) throw std::invalid_argument("no .wav clips in: " + dir);
  std::sort(paths.begin(), paths.end());
  std::vector<NamedClip> clips;
  clips.reserve(paths.size());
  for (const auto& p : paths)
    clips.push_back({p.stem().string(), read_wav(p.string())});
  return clips;
}

EvalReport eval_multiround(const CodecHandle& codec,
                           const std::vector<NamedClip>& clips, int n_iters) {
  if (clips.empty())
    throw std::invalid_argument("eval_multiround: empty clip list");
  if (n_iters < 1)
    throw std::invalid_argument("eval_multiround: n_iters must be >= 1");

  EvalReport report;
  report.model_name = codec.name;
  report.iterations = n_iters;
  {
    char buf[32];
    const std::time_t now = std::time(nullptr);
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    report.timestamp = buf;
  }

  for (const NamedClip& clip : clips) {
    if (clip.audio.sample_rate != codec.sample_rate)
      throw std::invalid_argument("eval_multiround: clip rate differs from codec: " +
                                  clip.name);
    ClipEval ce;
    ce.clip = clip.name;
    const AudioBuffer& x0 = clip.audio;
    AudioBuffer x = x0;
    TokenGrid prev;
    for (int n = 1; n <= n_iters; ++n) {
      const TokenGrid tokens = codec.encode(x);
      if (report.levels == 0) report.levels = tokens.levels();
      AudioBuffer decoded = codec.decode(tokens, x0.size());
      bool silent = false;
      AudioBuffer xn = match_rms(decoded, x0, &silent);

      MetricRow row;
      row.iteration = n;
      row.si_sdr_db = si_sdr_db(x0, xn);
      row.lsd_db = log_spectral_distance_db(x0, xn);
      if (n >= 2) row.match_rate = match_rate(tokens, prev);
      row.entropy_pct = codebook_use_pct(tokens);
      ce.rows.push_back(std::move(row));
      ce.audio_hash.push_back(fnv1a64(
          reinterpret_cast<const unsigned char*>(xn.samples.data()),
          static_cast<size_t>(xn.samples.size()) * sizeof(double)));

      prev = tokens;
      x = std::move(xn);
    }
    report.clips.push_back(std::move(ce));
  }

  report.summary.reserve(static_cast<size_t>(n_iters));
  const double n_clips = static_cast<double>(report.clips.size());
  for (int n = 1; n <= n_iters; ++n) {
    EvalReport::IterationSummary s;
    s.iteration = n;
    double si = 0, lsd = 0, match = 0, ent = 0;
    for (const ClipEval& ce : report.clips) {
      const MetricRow& row = ce.rows[static_cast<size_t>(n - 1)];
      si += capped(row.si_sdr_db);
      lsd += row.lsd_db;
      if (n >= 2) match += row.match_rate.mean();
      ent += row.entropy_pct.mean();
    }
    s.si_sdr_db = si / n_clips;
    s.lsd_db = lsd / n_clips;
    if (n >= 2) s.match_rate = match / n_clips;
    s.entropy_pct = ent / n_clips;
    report.summary.push_back(s);
  }
  return report;
}

void emit_report(const EvalReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  std::vector<const ClipEval*> order;
  order.reserve(report.clips.size());
  for (const ClipEval& ce : report.clips) order.push_back(&ce);
  std::sort(order.begin(), order.end(),
            [](const ClipEval* a, const ClipEval* b) { return a->clip < b->clip; });

  {
    const fs::path path = fs::path(dir) / "rows.csv";
    std::ofstream out = open_out(path);
    out << "clip,iteration,si_sdr_db,lsd_db";
    for (int l = 0; l < report.levels; ++l) out << ",match_rate_l" << l;
    for (int l = 0; l < report.levels; ++l) out << ",entropy_pct_l" << l;
    out << "\n";
    for (const ClipEval* ce : order) {
      for (const MetricRow& row : ce->rows) {
        out << ce->clip << ',' << row.iteration << ',' << fmt_g17(row.si_sdr_db)
            << ',' << fmt_g17(row.lsd_db);
        for (int l = 0; l < report.levels; ++l)
          out << ',' << (row.match_rate.size() > 0 ? fmt_g17(row.match_rate[l]) : "nan");
        for (int l = 0; l < report.levels; ++l)
          out << ',' << fmt_g17(row.entropy_pct[l]);
        out << "\n";
      }
    }
    finish(out, path);
  }

  {
    nlohmann::json j;
    j["model"] = report.model_name;
    j["config_hash"] = report.config_hash;
    j["seed"] = report.seed;
    j["iterations"] = report.iterations;
    j["levels"] = report.levels;
    nlohmann::json names = nlohmann::json::array();
    for (const ClipEval* ce : order) names.push_back(ce->clip);
    j["clips"] = names;
    nlohmann::json per_iter = nlohmann::json::array();
    for (const auto& s : report.summary) {
      nlohmann::json row;
      row["iteration"] = s.iteration;
      row["si_sdr_db"] = s.si_sdr_db;
      row["lsd_db"] = s.lsd_db;
      if (std::isnan(s.match_rate))
        row["match_rate"] = nullptr;
      else
        row["match_rate"] = s.match_rate;
      row["entropy_pct"] = s.entropy_pct;
      per_iter.push_back(row);
    }
    j["per_iteration"] = per_iter;
    const fs::path path = fs::path(dir) / "summary.json";
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
    finish(out, path);
  }

  {
    const fs::path path = fs::path(dir) / "plot.dat";
    std::ofstream out = open_out(path);
    out << "# iteration si_sdr_db lsd_db match_rate entropy_pct\n";
    for (const auto& s : report.summary) {
      out << s.iteration << ' ' << fmt_g17(s.si_sdr_db) << ' '
          << fmt_g17(s.lsd_db) << ' ' << fmt_g17(s.match_rate) << ' '
          << fmt_g17(s.entropy_pct) << "\n";
    }
    finish(out, path);
  }
}

ShiftReport eval_phase(const std::vector<CodecHandle>& codecs,
                       const std::vector<NamedClip>& clips,
                       double max_shift_ms, int n_iters) {
  if (codecs.empty()) throw std::invalid_argument("eval_phase: no codecs");
  if (clips.empty()) throw std::invalid_argument("eval_phase: empty clip list");
  if (max_shift_ms <= 0.0)
    throw std::invalid_argument("eval_phase: max_shift_ms must be positive");

  ShiftReport report;
  report.iterations = n_iters;
  const int sr = codecs.front().sample_rate;
  const int max_shift = static_cast<int>(std::lround(max_shift_ms * 1e-3 * sr));
  for (int s = -max_shift; s <= max_shift; ++s) {
    if (s == 0) continue;
    bool ok = true;
    for (const CodecHandle& c : codecs) {
      if (std::abs(s) >= c.hop) {
        std::cerr << "warning: shift " << s
                  << " not below one hop; excluded (frame alignment breaks)\n";
        ok = false;
        break;
      }
    }
    if (ok) report.shifts.push_back(s);
  }
  if (report.shifts.empty())
    throw std::invalid_argument("eval_phase: no usable shifts below one hop");

  for (const CodecHandle& codec : codecs) {
    ShiftReport::ModelPoint point;
    point.model = codec.name;
    point.per_shift_match = Eigen::VectorXd::Zero(
        static_cast<Eigen::Index>(report.shifts.size()));

    std::vector<TokenGrid> base;
    base.reserve(clips.size());
    for (const NamedClip& clip : clips) base.push_back(codec.encode(clip.audio));

    for (size_t si = 0; si < report.shifts.size(); ++si) {
      double acc = 0.0;
      for (size_t ci = 0; ci < clips.size(); ++ci) {
        const AudioBuffer shifted = time_shift(clips[ci].audio, report.shifts[si]);
        acc += match_rate(codec.encode(shifted), base[ci]).mean();
      }
      point.per_shift_match[static_cast<Eigen::Index>(si)] =
          acc / static_cast<double>(clips.size());
    }
    point.mean_match_rate = point.per_shift_match.mean();
    const EvalReport idem = eval_multiround(codec, clips, n_iters);
    point.si_sdr_at_n = idem.summary.back().si_sdr_db;
    report.models.push_back(std::move(point));
  }

  if (report.models.size() >= 2) {
    Eigen::VectorXd xs(static_cast<Eigen::Index>(report.models.size()));
    Eigen::VectorXd ys(static_cast<Eigen::Index>(report.models.size()));
    for (size_t i = 0; i < report.models.size(); ++i) {
      xs[static_cast<Eigen::Index>(i)] = report.models[i].mean_match_rate;
      ys[static_cast<Eigen::Index>(i)] = report.models[i].si_sdr_at_n;
    }
    try {
      report.pearson_r = pearson_corr(xs, ys);
    } catch (const std::invalid_argument&) {
      // Degenerate (constant) axis: correlation undefined, left as NaN.
    }
  }
  return report;
}

void emit_phase_report(const ShiftReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  {
    const fs::path path = fs::path(dir) / "shifts.csv";
    std::ofstream out = open_out(path);
    out << "model,shift,match_rate\n";
    for (const auto& m : report.models) {
      for (size_t si = 0; si < report.shifts.size(); ++si) {
        out << m.model << ',' << report.shifts[si] << ','
            << fmt_g17(m.per_shift_match[static_cast<Eigen::Index>(si)]) << "\n";
      }
    }
    finish(out, path);
  }

  {
    nlohmann::json j;
    j["iterations"] = report.iterations;
    j["shifts"] = report.shifts;
    nlohmann::json models = nlohmann::json::array();
    for (const auto& m : report.models) {
      nlohmann::json row;
      row["model"] = m.model;
      row["mean_match_rate"] = m.mean_match_rate;
      row["si_sdr_at_n"] = m.si_sdr_at_n;
      models.push_back(row);
    }
    j["models"] = models;
    if (std::isnan(report.pearson_r))
      j["pearson_r"] = nullptr;
    else
      j["pearson_r"] = report.pearson_r;
    const fs::path path = fs::path(dir) / "phase_summary.json";
    std::ofstream out = open_out(path);
    out << j.dump(2) << "\n";
    finish(out, path);
  }

  {
    const fs::path path = fs::path(dir) / "phase_plot.dat";
    std::ofstream out = open_out(path);
    out << "# shift";
    for (const auto& m : report.models) out << ' ' << m.model;
    out << "\n";
    for (size_t si = 0; si < report.shifts.size(); ++si) {
      out << report.shifts[si];
      for (const auto& m : report.models)
        out << ' ' << fmt_g17(m.per_shift_match[static_cast<Eigen::Index>(si)]);
      out << "\n";
    }
    finish(out, path);
  }
}

}  // namespace recodec
