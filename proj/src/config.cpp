#include "recodec/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace recodec {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const long r = std::stol(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<int>(r);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer for " + key + ": " + v);
  }
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const double r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad number for " + key + ": " + v);
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    size_t used = 0;
    const unsigned long long r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad seed for " + key + ": " + v);
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": " + v);
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

}  // namespace

KvConfig KvConfig::parse_string(const std::string& text) {
  KvConfig kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": empty key");
    kv.values[key] = value;
  }
  return kv;
}

KvConfig KvConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_string(ss.str());
}

void apply_corpus_config(const KvConfig& kv, CorpusSpec* spec) {
  for (const auto& [key, v] : kv.values) {
    if (key == "n_clips") spec->n_clips = parse_int(key, v);
    else if (key == "clip_seconds") spec->clip_seconds = parse_double(key, v);
    else if (key == "seed") spec->seed = parse_u64(key, v);
    else if (key == "sample_rate") spec->sample_rate = parse_int(key, v);
    else if (key == "mix") {
      const auto parts = split_commas(v);
      if (parts.size() != spec->mix.size())
        throw std::invalid_argument("config: mix needs exactly 4 weights");
      for (size_t i = 0; i < parts.size(); ++i)
        spec->mix[i] = parse_double(key, parts[i]);
    } else {
      throw std::invalid_argument("config: unknown corpus key: " + key);
    }
  }
}

void apply_model_config(const KvConfig& kv, CodecConfig* codec,
                        LossWeights* weights, TrainConfig* train) {
  for (const auto& [key, v] : kv.values) {
    // CodecConfig
    if (key == "sample_rate") codec->sample_rate = parse_int(key, v);
    else if (key == "frame_size") codec->frame_size = parse_int(key, v);
    else if (key == "hop") codec->hop = parse_int(key, v);
    else if (key == "latent_dim") codec->latent_dim = parse_int(key, v);
    else if (key == "code_dim") codec->code_dim = parse_int(key, v);
    else if (key == "n_levels") codec->n_levels = parse_int(key, v);
    else if (key == "codebook_size") codec->codebook_size = parse_int(key, v);
    else if (key == "encoder_hidden") {
      codec->encoder_hidden.clear();
      for (const auto& part : split_commas(v))
        codec->encoder_hidden.push_back(parse_int(key, part));
    } else if (key == "seed") {
      codec->seed = parse_u64(key, v);
      train->seed = codec->seed;
    }
    // LossWeights
    else if (key == "recon_wave") weights->recon_wave = parse_double(key, v);
    else if (key == "recon_spec") weights->recon_spec = parse_double(key, v);
    else if (key == "commit") weights->commit = parse_double(key, v);
    else if (key == "codebook") weights->codebook = parse_double(key, v);
    else if (key == "idem") weights->idem = parse_double(key, v);
    else if (key == "idem_kind") weights->idem_kind = idem_kind_from_string(v);
    // TrainConfig
    else if (key == "batch_size") train->batch_size = parse_int(key, v);
    else if (key == "excerpt_seconds") train->excerpt_seconds = parse_double(key, v);
    else if (key == "lr") train->lr = parse_double(key, v);
    else if (key == "beta1") train->beta1 = parse_double(key, v);
    else if (key == "beta2") train->beta2 = parse_double(key, v);
    else if (key == "weight_decay") train->weight_decay = parse_double(key, v);
    else if (key == "grad_clip_norm") train->grad_clip_norm = parse_double(key, v);
    else if (key == "log_every") train->log_every = parse_int(key, v);
    else if (key == "val_every") train->val_every = parse_int(key, v);
    else if (key == "warmup_steps") train->warmup_steps = parse_int(key, v);
    else if (key == "freeze_projections") train->freeze_projections = parse_bool(key, v);
    else if (key == "detach_roundtrip") train->detach_roundtrip = parse_bool(key, v);
    else {
      throw std::invalid_argument("config: unknown key: " + key);
    }
  }
}

}  // namespace recodec
