#pragma once

// Experiment configuration: flat `key=value` lines, `#` comments, unknown
// keys rejected, absent keys defaulted.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "hekp/corpus.hpp"
#include "hekp/eval.hpp"
#include "hekp/head.hpp"
#include "hekp/relenc.hpp"
#include "hekp/seqenc.hpp"

namespace hekp {

enum class HypergraphRebuild { kEpoch, kStep };

struct KnowledgeConfig {
  std::size_t n_hops = 3;
  std::size_t beam_width = 8;
  std::size_t token_budget = 512;
  std::size_t template_id = 0;
  std::size_t vocab_min_count = 1;
  std::string templates_file;  // empty: built-in templates

  bool operator==(const KnowledgeConfig&) const = default;
};

struct Ablations {
  bool no_gcn = false;
  bool no_hypergcn = false;
  bool no_fbg = false;
  bool no_ktp = false;

  bool operator==(const Ablations&) const = default;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double lr_backbone = 1e-5;
  double lr_overhead = 1e-4;
  double weight_decay = 0.01;
  head::LossWeights weights;
  Ablations ablate;
  bool diagonal_gate = false;
  HypergraphRebuild rebuild = HypergraphRebuild::kEpoch;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  std::size_t workers = 1;

  bool operator==(const TrainConfig&) const = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  corpus::PreprocessRules rules;
  seqenc::ModelConfig model;
  relenc::RelencConfig relenc;
  KnowledgeConfig knowledge;
  TrainConfig train;
  eval::HitMode hit_mode = eval::HitMode::kRecall;

  // Rules with the dataset sampling seed expanded from `seed`.
  corpus::PreprocessRules preprocess_rules() const;
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

// Parses config text; `source` names the origin in error messages.
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
// Every key with its current value, sorted by key.
std::map<std::string, std::string> config_entries(const ExperimentConfig& config);
std::string to_config_text(const ExperimentConfig& config);

// Synthetic generator settings in the same key=value format; keys are the
// SyntheticSpec field names.
corpus::SyntheticSpec parse_synthetic_spec(const std::string& text, const std::string& source = "<spec>");
corpus::SyntheticSpec load_synthetic_spec(const std::filesystem::path& path);

}  // namespace hekp
