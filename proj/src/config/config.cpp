#include "hekp/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "hekp/error.hpp"
#include "hekp/seed.hpp"
#include "hekp/text.hpp"

namespace hekp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

// Thrown by value parsers; re-raised with the key and line attached.
struct BadValue {
  std::string what;
};

std::uint64_t parse_uint(const std::string& s) {
  std::uint64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw BadValue{"expected a non-negative integer"};
  return v;
}

double parse_real(const std::string& s) {
  double v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw BadValue{"expected a number"};
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw BadValue{"expected true or false"};
}

struct Key {
  std::string name;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

#define HEKP_SIZE_KEY(key, field)                                                          \
  Key {                                                                                    \
    key, [](const ExperimentConfig& c) { return fmt(static_cast<std::size_t>(c.field)); }, \
        [](ExperimentConfig& c, const std::string& v) { c.field = parse_uint(v); }         \
  }
#define HEKP_REAL_KEY(key, field)                                                 \
  Key {                                                                           \
    key, [](const ExperimentConfig& c) { return fmt(c.field); },                  \
        [](ExperimentConfig& c, const std::string& v) { c.field = parse_real(v); } \
  }
#define HEKP_BOOL_KEY(key, field)                                                 \
  Key {                                                                           \
    key, [](const ExperimentConfig& c) { return fmt(c.field); },                  \
        [](ExperimentConfig& c, const std::string& v) { c.field = parse_bool(v); } \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      HEKP_SIZE_KEY("seed", seed),
      HEKP_SIZE_KEY("preprocess.min_basket_size", rules.min_basket_size),
      HEKP_SIZE_KEY("preprocess.max_basket_size", rules.max_basket_size),
      HEKP_SIZE_KEY("preprocess.min_seq_len", rules.min_seq_len),
      HEKP_SIZE_KEY("preprocess.max_seq_len", rules.max_seq_len),
      HEKP_SIZE_KEY("model.d_model", model.d_model),
      HEKP_SIZE_KEY("model.n_enc_layers", model.n_enc_layers),
      HEKP_SIZE_KEY("model.n_dec_layers", model.n_dec_layers),
      HEKP_SIZE_KEY("model.n_heads", model.n_heads),
      HEKP_SIZE_KEY("model.ffn_mult", model.ffn_mult),
      HEKP_SIZE_KEY("model.max_tokens", model.max_tokens),
      HEKP_REAL_KEY("model.dropout", model.dropout),
      HEKP_SIZE_KEY("relenc.d2", relenc.d2),
      HEKP_SIZE_KEY("relenc.d3", relenc.d3),
      HEKP_SIZE_KEY("relenc.n_experts", relenc.n_experts),
      HEKP_SIZE_KEY("relenc.gcn_layers", relenc.gcn_layers),
      HEKP_SIZE_KEY("relenc.hconv_layers", relenc.hconv_layers),
      HEKP_SIZE_KEY("relenc.top_k", relenc.top_k),
      Key{"relenc.degree_mode",
          [](const ExperimentConfig& c) {
            return std::string(c.relenc.degree_mode == relenc::DegreeMode::kWeighted ? "weighted" : "count");
          },
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "weighted") c.relenc.degree_mode = relenc::DegreeMode::kWeighted;
            else if (v == "count") c.relenc.degree_mode = relenc::DegreeMode::kCount;
            else throw BadValue{"expected weighted or count"};
          }},
      Key{"relenc.hypergraph_rebuild",
          [](const ExperimentConfig& c) {
            return std::string(c.train.rebuild == HypergraphRebuild::kEpoch ? "epoch" : "step");
          },
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "epoch") c.train.rebuild = HypergraphRebuild::kEpoch;
            else if (v == "step") c.train.rebuild = HypergraphRebuild::kStep;
            else throw BadValue{"expected epoch or step"};
          }},
      HEKP_SIZE_KEY("knowledge.n_hops", knowledge.n_hops),
      HEKP_SIZE_KEY("knowledge.beam_width", knowledge.beam_width),
      HEKP_SIZE_KEY("knowledge.token_budget", knowledge.token_budget),
      HEKP_SIZE_KEY("knowledge.template_id", knowledge.template_id),
      HEKP_SIZE_KEY("knowledge.vocab_min_count", knowledge.vocab_min_count),
      Key{"knowledge.templates_file", [](const ExperimentConfig& c) { return c.knowledge.templates_file; },
          [](ExperimentConfig& c, const std::string& v) { c.knowledge.templates_file = v; }},
      HEKP_SIZE_KEY("train.epochs", train.epochs),
      HEKP_SIZE_KEY("train.batch_size", train.batch_size),
      HEKP_REAL_KEY("train.lr_backbone", train.lr_backbone),
      HEKP_REAL_KEY("train.lr_overhead", train.lr_overhead),
      HEKP_REAL_KEY("train.weight_decay", train.weight_decay),
      HEKP_REAL_KEY("train.w_plm", train.weights.plm),
      HEKP_REAL_KEY("train.w_rec", train.weights.rec),
      HEKP_REAL_KEY("train.w_bi", train.weights.bi),
      HEKP_REAL_KEY("train.w_ii", train.weights.ii),
      HEKP_BOOL_KEY("train.diagonal_gate", train.diagonal_gate),
      HEKP_SIZE_KEY("train.workers", train.workers),
      Key{"train.split",
          [](const ExperimentConfig& c) {
            const auto& r = c.train.split_ratios;
            return fmt(r[0]) + "," + fmt(r[1]) + "," + fmt(r[2]);
          },
          [](ExperimentConfig& c, const std::string& v) {
            const auto parts = split_on(v, ',');
            if (parts.size() != 3) throw BadValue{"expected three comma-separated ratios"};
            for (std::size_t k = 0; k < 3; ++k) c.train.split_ratios[k] = parse_real(trim(parts[k]));
          }},
      HEKP_BOOL_KEY("ablate.no_gcn", train.ablate.no_gcn),
      HEKP_BOOL_KEY("ablate.no_hypergcn", train.ablate.no_hypergcn),
      HEKP_BOOL_KEY("ablate.no_fbg", train.ablate.no_fbg),
      HEKP_BOOL_KEY("ablate.no_ktp", train.ablate.no_ktp),
      Key{"eval.hit_mode",
          [](const ExperimentConfig& c) {
            return std::string(c.hit_mode == eval::HitMode::kRecall ? "recall" : "any");
          },
          [](ExperimentConfig& c, const std::string& v) {
            if (v == "recall") c.hit_mode = eval::HitMode::kRecall;
            else if (v == "any") c.hit_mode = eval::HitMode::kAnyHit;
            else throw BadValue{"expected recall or any"};
          }},
  };
  return table;
}

#undef HEKP_SIZE_KEY
#undef HEKP_REAL_KEY
#undef HEKP_BOOL_KEY

}  // namespace

corpus::PreprocessRules ExperimentConfig::preprocess_rules() const {
  corpus::PreprocessRules r = rules;
  r.sample_seed = sub_seed(seed, "preprocess");
  return r;
}

void ExperimentConfig::validate() const {
  rules.validate();
  relenc.validate();
  if (model.d_model == 0 || model.n_heads == 0 || model.d_model % model.n_heads != 0)
    throw ConfigError("model.d_model must be a positive multiple of model.n_heads");
  if (model.max_tokens < 8) throw ConfigError("model.max_tokens must be >= 8");
  if (!(model.dropout >= 0.0 && model.dropout < 1.0)) throw ConfigError("model.dropout must lie in [0, 1)");
  if (train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (train.batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(train.lr_backbone > 0.0) || !(train.lr_overhead > 0.0))
    throw ConfigError("train.lr_backbone and train.lr_overhead must be positive");
  if (knowledge.n_hops < 1 || knowledge.beam_width < 1)
    throw ConfigError("knowledge.n_hops and knowledge.beam_width must be >= 1");
  if (train.workers < 1) throw ConfigError("train.workers must be >= 1");
}

namespace {

// Calls set(key, value) for every key=value line; `set` returns false for
// unknown keys.
void parse_lines(const std::string& text, const std::string& source,
                 const std::function<bool(const std::string&, const std::string&)>& set) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key=value");
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    try {
      if (!set(key, value)) throw ParseError(source, line_no, "unknown config key '" + key + "'");
    } catch (const BadValue& e) {
      throw ParseError(source, line_no, "key '" + key + "': " + e.what + ", got '" + value + "'");
    }
  }
}

std::string read_text(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + what + " " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  ExperimentConfig config;
  const auto& table = keys();
  parse_lines(text, source, [&](const std::string& key, const std::string& value) {
    auto it = std::find_if(table.begin(), table.end(), [&](const Key& k) { return k.name == key; });
    if (it == table.end()) return false;
    it->set(config, value);
    return true;
  });
  try {
    config.validate();
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config;
}

corpus::SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& source) {
  corpus::SyntheticSpec spec;
  parse_lines(text, source, [&](const std::string& key, const std::string& value) {
    if (key == "n_users") spec.n_users = parse_uint(value);
    else if (key == "n_items") spec.n_items = parse_uint(value);
    else if (key == "n_baskets_per_user") spec.n_baskets_per_user = parse_uint(value);
    else if (key == "n_patterns") spec.n_patterns = parse_uint(value);
    else if (key == "pattern_size") spec.pattern_size = parse_uint(value);
    else if (key == "noise_rate") spec.noise_rate = parse_real(value);
    else if (key == "kg_attrs_per_item") spec.kg_attrs_per_item = parse_uint(value);
    else if (key == "drift_rate") spec.drift_rate = parse_real(value);
    else if (key == "max_basket_size") spec.max_basket_size = parse_uint(value);
    else if (key == "seed") spec.seed = parse_uint(value);
    else return false;
    return true;
  });
  try {
    spec.validate();
  } catch (const Error& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return spec;
}

corpus::SyntheticSpec load_synthetic_spec(const std::filesystem::path& path) {
  return parse_synthetic_spec(read_text(path, "synthetic spec"), path.string());
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_text(path, "config file"), path.string());
}

std::map<std::string, std::string> config_entries(const ExperimentConfig& config) {
  std::map<std::string, std::string> out;
  for (const Key& k : keys()) out[k.name] = k.get(config);
  return out;
}

std::string to_config_text(const ExperimentConfig& config) {
  std::string out;
  for (const Key& k : keys()) out += k.name + "=" + k.get(config) + "\n";
  return out;
}

}  // namespace hekp
