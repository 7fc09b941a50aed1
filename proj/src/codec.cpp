#include "recodec/codec.hpp"

#include "recodec/dsp.hpp"
#include "recodec/hash.hpp"
#include "recodec/rng.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace recodec {

void CodecConfig::validate() const {
  if (sample_rate <= 0) throw std::invalid_argument("config: sample_rate must be positive");
  if (frame_size < 2 || hop < 1 || hop > frame_size)
    throw std::invalid_argument("config: need 1 <= hop <= frame_size");
  if (latent_dim < 1 || code_dim < 1 || code_dim > latent_dim)
    throw std::invalid_argument("config: need 1 <= code_dim <= latent_dim");
  if (n_levels < 1) throw std::invalid_argument("config: n_levels must be >= 1");
  if (codebook_size < 2) throw std::invalid_argument("config: codebook_size must be >= 2");
  for (int h : encoder_hidden)
    if (h < 1) throw std::invalid_argument("config: hidden widths must be >= 1");
}

std::string config_hash_hex(const CodecConfig& config) {
  std::ostringstream ss;
  ss << config.sample_rate << '|' << config.frame_size << '|' << config.hop << '|'
     << config.latent_dim << '|' << config.code_dim << '|' << config.n_levels << '|'
     << config.codebook_size << '|' << config.seed << '|';
  for (int h : config.encoder_hidden) ss << h << ',';
  const std::string s = ss.str();
  return hex64(fnv1a64(s.data(), s.size()));
}

std::vector<std::pair<std::string, Eigen::MatrixXd*>> CodecModel::parameters() {
  std::vector<std::pair<std::string, Eigen::MatrixXd*>> out;
  for (size_t i = 0; i < enc_w.size(); ++i) {
    out.emplace_back("enc.w" + std::to_string(i), &enc_w[i]);
    out.emplace_back("enc.b" + std::to_string(i), &enc_b[i]);
  }
  for (size_t i = 0; i < dec_w.size(); ++i) {
    out.emplace_back("dec.w" + std::to_string(i), &dec_w[i]);
    out.emplace_back("dec.b" + std::to_string(i), &dec_b[i]);
  }
  for (size_t l = 0; l < proj_in.size(); ++l)
    out.emplace_back("proj_in." + std::to_string(l), &proj_in[l]);
  for (size_t l = 0; l < proj_out.size(); ++l)
    out.emplace_back("proj_out." + std::to_string(l), &proj_out[l]);
  for (size_t l = 0; l < codebooks.size(); ++l)
    out.emplace_back("codebook." + std::to_string(l), &codebooks[l].vectors);
  return out;
}

std::vector<std::pair<std::string, const Eigen::MatrixXd*>> CodecModel::parameters() const {
  auto mut = const_cast<CodecModel*>(this)->parameters();
  std::vector<std::pair<std::string, const Eigen::MatrixXd*>> out;
  out.reserve(mut.size());
  for (auto& [name, p] : mut) out.emplace_back(name, p);
  return out;
}

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, double stddev, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = stddev * rng.normal();
  return m;
}

}  // namespace

CodecModel init_model(const CodecConfig& config) {
  config.validate();
  CodecModel m;
  m.config = config;
  Rng root(config.seed);

  Rng enc_rng = root.fork(0);
  std::vector<int> enc_dims{config.frame_size};
  for (int h : config.encoder_hidden) enc_dims.push_back(h);
  enc_dims.push_back(config.latent_dim);
  for (size_t i = 0; i + 1 < enc_dims.size(); ++i) {
    m.enc_w.push_back(random_matrix(enc_dims[i], enc_dims[i + 1],
                                    1.0 / std::sqrt(enc_dims[i]), enc_rng));
    m.enc_b.push_back(Eigen::MatrixXd::Zero(1, enc_dims[i + 1]));
  }

  Rng dec_rng = root.fork(1);
  std::vector<int> dec_dims{config.latent_dim};
  for (auto it = config.encoder_hidden.rbegin(); it != config.encoder_hidden.rend(); ++it)
    dec_dims.push_back(*it);
  dec_dims.push_back(config.frame_size);
  for (size_t i = 0; i + 1 < dec_dims.size(); ++i) {
    m.dec_w.push_back(random_matrix(dec_dims[i], dec_dims[i + 1],
                                    1.0 / std::sqrt(dec_dims[i]), dec_rng));
    m.dec_b.push_back(Eigen::MatrixXd::Zero(1, dec_dims[i + 1]));
  }

  // The projection pair starts as a tied orthonormal frame so the level
  // update r - f_dp(f_p(r)) begins as an orthogonal projection (never
  // expansive); the two matrices are trained independently afterwards.
  Rng proj_rng = root.fork(2);
  for (int l = 0; l < config.n_levels; ++l) {
    const Eigen::MatrixXd a =
        random_matrix(config.latent_dim, config.code_dim, 1.0, proj_rng);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
    const Eigen::MatrixXd q =
        qr.householderQ() *
        Eigen::MatrixXd::Identity(config.latent_dim, config.code_dim);
    m.proj_in.push_back(q);
    m.proj_out.push_back(q.transpose());
  }

  Rng cb_rng = root.fork(3);
  for (int l = 0; l < config.n_levels; ++l) {
    Codebook cb;
    cb.vectors = random_matrix(config.codebook_size, config.code_dim,
                               1.0 / std::sqrt(config.code_dim), cb_rng);
    m.codebooks.push_back(std::move(cb));
  }
  return m;
}

Eigen::MatrixXd encode_latents(const CodecModel& m, const AudioBuffer& x) {
  if (x.sample_rate != m.config.sample_rate)
    throw std::invalid_argument("encode: sample rate does not match model");
  if (x.size() < m.config.hop)
    throw std::invalid_argument("encode: signal shorter than one hop");
  Eigen::MatrixXd h = frame_signal(x.samples, m.config.frame_size, m.config.hop);
  const size_t n_layers = m.enc_w.size();
  for (size_t i = 0; i + 1 < n_layers; ++i)
    h = ((h * m.enc_w[i]).rowwise() + m.enc_b[i].row(0)).array().tanh();
  h = (h * m.enc_w[n_layers - 1]).rowwise() + m.enc_b[n_layers - 1].row(0);
  return h;
}

namespace {

// Sequential sums keep the arithmetic identical to a plain reference loop.
double sq_norm_seq(const Eigen::Ref<const Eigen::RowVectorXd>& v) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < v.size(); ++j) acc += v[j] * v[j];
  return acc;
}

}  // namespace

std::pair<Eigen::VectorXi, Eigen::MatrixXd> quantize_level(
    const Eigen::Ref<const Eigen::MatrixXd>& codebook,
    const Eigen::Ref<const Eigen::MatrixXd>& queries) {
  if (codebook.cols() != queries.cols())
    throw std::invalid_argument("quantize_level: dimension mismatch");
  const Eigen::Index K = codebook.rows();
  const Eigen::Index T = queries.rows();
  const Eigen::Index d = codebook.cols();

  Eigen::MatrixXd cb_norm(K, d);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double n = std::sqrt(sq_norm_seq(codebook.row(k)));
    cb_norm.row(k) = n > 0.0 ? (codebook.row(k) / n).eval() : codebook.row(k);
  }

  Eigen::VectorXi indices(T);
  Eigen::MatrixXd selected(T, d);
  Eigen::RowVectorXd q(d);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double qn = std::sqrt(sq_norm_seq(queries.row(t)));
    const bool normalized = qn > 0.0;
    if (normalized)
      q = queries.row(t) / qn;
    else
      q = queries.row(t);
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < K; ++k) {
      double dist = 0.0;
      if (normalized) {
        for (Eigen::Index j = 0; j < d; ++j) {
          const double diff = q[j] - cb_norm(k, j);
          dist += diff * diff;
        }
      } else {
        for (Eigen::Index j = 0; j < d; ++j) {
          const double diff = q[j] - codebook(k, j);
          dist += diff * diff;
        }
      }
      if (dist < best_d) {
        best_d = dist;
        best = static_cast<int>(k);
      }
    }
    indices[t] = best;
    selected.row(t) = codebook.row(best);
  }
  return {std::move(indices), std::move(selected)};
}

TokenGrid encode(const CodecModel& m, const AudioBuffer& x, EncodeTrace* trace) {
  Eigen::MatrixXd z = encode_latents(m, x);
  const int T = static_cast<int>(z.rows());
  const int L = m.config.n_levels;
  TokenGrid tokens;
  tokens.codes.resize(L, T);
  tokens.codebook_size = m.config.codebook_size;
  if (trace) {
    trace->latents = z;
    trace->projected.clear();
    trace->selected.clear();
  }
  Eigen::MatrixXd residual = z;
  for (int l = 0; l < L; ++l) {
    const Eigen::MatrixXd q = residual * m.proj_in[l];
    auto [idx, rows] = quantize_level(m.codebooks[l].vectors, q);
    tokens.codes.row(l) = idx.transpose();
    residual -= rows * m.proj_out[l];
    if (trace) {
      trace->projected.push_back(q);
      trace->selected.push_back(rows);
    }
  }
  return tokens;
}

AudioBuffer decode(const CodecModel& m, const TokenGrid& tokens, int n_samples) {
  if (tokens.levels() != m.config.n_levels)
    throw std::invalid_argument("decode: level count does not match model");
  if (tokens.frames() < 1) throw std::invalid_argument("decode: empty token grid");
  if (n_samples < 1) throw std::invalid_argument("decode: n_samples must be >= 1");
  const int T = tokens.frames();
  const int K = m.config.codebook_size;
  Eigen::MatrixXd zq = Eigen::MatrixXd::Zero(T, m.config.latent_dim);
  for (int l = 0; l < tokens.levels(); ++l) {
    Eigen::MatrixXd rows(T, m.config.code_dim);
    for (int t = 0; t < T; ++t) {
      const int code = tokens.codes(l, t);
      if (code < 0 || code >= K)
        throw std::invalid_argument("decode: token out of codebook range");
      rows.row(t) = m.codebooks[l].vectors.row(code);
    }
    zq += rows * m.proj_out[l];
  }
  Eigen::MatrixXd h = zq;
  const size_t n_layers = m.dec_w.size();
  for (size_t i = 0; i + 1 < n_layers; ++i)
    h = ((h * m.dec_w[i]).rowwise() + m.dec_b[i].row(0)).array().tanh();
  h = (h * m.dec_w[n_layers - 1]).rowwise() + m.dec_b[n_layers - 1].row(0);

  AudioBuffer out;
  out.sample_rate = m.config.sample_rate;
  if (frame_count(n_samples, m.config.hop) == T) {
    out.samples = overlap_add(h, m.config.hop, n_samples);
  } else {
    // Token grid and requested length disagree; synthesize the grid's
    // natural span, then crop or zero-pad.
    const int natural = T * m.config.hop;
    const Eigen::VectorXd full = overlap_add(h, m.config.hop, natural);
    out.samples = Eigen::VectorXd::Zero(n_samples);
    out.samples.head(std::min(n_samples, natural)) =
        full.head(std::min(n_samples, natural));
  }
  if (!out.samples.allFinite()) throw std::runtime_error("decode: non-finite output");
  return out;
}

AudioBuffer roundtrip(const CodecModel& m, const AudioBuffer& x, bool* silent) {
  const TokenGrid tokens = encode(m, x);
  const AudioBuffer decoded = decode(m, tokens, x.size());
  return match_rms(decoded, x, silent);
}

namespace {

constexpr char kMagic[4] = {'R', 'V', 'Q', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

void append_bytes(std::string& out, const void* data, size_t len) {
  out.append(static_cast<const char*>(data), len);
}

nlohmann::json config_to_json(const CodecConfig& c) {
  return nlohmann::json{{"sample_rate", c.sample_rate},
                        {"frame_size", c.frame_size},
                        {"hop", c.hop},
                        {"latent_dim", c.latent_dim},
                        {"code_dim", c.code_dim},
                        {"n_levels", c.n_levels},
                        {"codebook_size", c.codebook_size},
                        {"encoder_hidden", c.encoder_hidden},
                        {"seed", c.seed}};
}

CodecConfig config_from_json(const nlohmann::json& j) {
  CodecConfig c;
  c.sample_rate = j.at("sample_rate").get<int>();
  c.frame_size = j.at("frame_size").get<int>();
  c.hop = j.at("hop").get<int>();
  c.latent_dim = j.at("latent_dim").get<int>();
  c.code_dim = j.at("code_dim").get<int>();
  c.n_levels = j.at("n_levels").get<int>();
  c.codebook_size = j.at("codebook_size").get<int>();
  c.encoder_hidden = j.at("encoder_hidden").get<std::vector<int>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

void save_model(const CodecModel& m, const std::string& path) {
  const auto params = m.parameters();
  nlohmann::json header;
  header["format_version"] = kFormatVersion;
  header["config"] = config_to_json(m.config);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, p] : params)
    tensors.push_back({{"name", name}, {"rows", p->rows()}, {"cols", p->cols()}});
  header["tensors"] = tensors;
  const std::string header_str = header.dump();

  std::string body;
  append_bytes(body, header_str.data(), header_str.size());
  for (const auto& [name, p] : params)
    append_bytes(body, p->data(), sizeof(double) * static_cast<size_t>(p->size()));
  const std::uint64_t checksum = fnv1a64(body.data(), body.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, 4);
  const std::uint32_t version = kFormatVersion;
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t header_len = header_str.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  out.write(reinterpret_cast<const char*>(&checksum), sizeof checksum);
  if (!out) throw std::runtime_error("I/O error writing " + path);
}

CodecModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open model file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a model checkpoint: " + path);
  std::uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  if (version != kFormatVersion)
    throw std::runtime_error("unsupported checkpoint format version " +
                             std::to_string(version));
  std::uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in) throw std::runtime_error("truncated checkpoint: " + path);

  // Remaining bytes = header + payload + trailing checksum.
  std::string rest((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (rest.size() < header_len + sizeof(std::uint64_t))
    throw std::runtime_error("truncated checkpoint: " + path);
  const size_t body_len = rest.size() - sizeof(std::uint64_t);
  std::uint64_t stored_checksum = 0;
  std::memcpy(&stored_checksum, rest.data() + body_len, sizeof stored_checksum);
  if (fnv1a64(rest.data(), body_len) != stored_checksum)
    throw std::runtime_error("checkpoint checksum mismatch: " + path);

  const nlohmann::json header = nlohmann::json::parse(rest.substr(0, header_len));
  CodecModel m = init_model(config_from_json(header.at("config")));
  auto params = m.parameters();
  const auto& tensors = header.at("tensors");
  if (tensors.size() != params.size())
    throw std::runtime_error("checkpoint tensor list does not match model");
  size_t offset = static_cast<size_t>(header_len);
  for (size_t i = 0; i < params.size(); ++i) {
    const auto& t = tensors[i];
    auto& [name, p] = params[i];
    if (t.at("name").get<std::string>() != name ||
        t.at("rows").get<Eigen::Index>() != p->rows() ||
        t.at("cols").get<Eigen::Index>() != p->cols())
      throw std::runtime_error("checkpoint tensor mismatch at " + name);
    const size_t bytes = sizeof(double) * static_cast<size_t>(p->size());
    if (offset + bytes > body_len)
      throw std::runtime_error("checkpoint payload too short: " + path);
    std::memcpy(p->data(), rest.data() + offset, bytes);
    offset += bytes;
  }
  if (offset != body_len)
    throw std::runtime_error("checkpoint payload size mismatch: " + path);
  return m;
}

void write_tokens_csv(const TokenGrid& tokens, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "level,frame,index\n";
  for (int l = 0; l < tokens.levels(); ++l)
    for (int t = 0; t < tokens.frames(); ++t)
      out << l << ',' << t << ',' << tokens.codes(l, t) << '\n';
  if (!out) throw std::runtime_error("I/O error writing " + path);
}

}  // namespace recodec
