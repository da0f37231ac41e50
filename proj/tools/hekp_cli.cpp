// Command-line entry point: synth, train, evaluate, recommend.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include "hekp/config.hpp"
#include "hekp/corpus.hpp"
#include "hekp/error.hpp"
#include "hekp/kg.hpp"
#include "hekp/train.hpp"

namespace {

using namespace hekp;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

// Config problems are the caller's to fix, so they count as usage errors.
struct UsageError : Error {
  using Error::Error;
};

ExperimentConfig read_config(const std::string& path) {
  try {
    return load_config(path);
  } catch (const IoError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

corpus::BasketDataset load_dataset(const std::string& events, const std::string& names,
                                   const ExperimentConfig& config) {
  corpus::BasketDataset ds = corpus::preprocess(corpus::load_interactions(events), config.preprocess_rules());
  if (!names.empty()) corpus::attach_names(ds, corpus::load_item_names(names));
  return ds;
}

void write_or_throw(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out || !(out << text)) throw IoError("cannot write " + path);
}

std::vector<std::size_t> parse_ks(const std::string& text) {
  std::vector<std::size_t> ks;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto comma = text.find(',', start);
    const std::string part = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(part, &used);
      if (used != part.size() || v == 0) throw std::invalid_argument(part);
      ks.push_back(v);
    } catch (const std::exception&) {
      throw UsageError("--k: expected comma-separated positive integers, got '" + text + "'");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return ks;
}

const corpus::BasketDataset& pick_split(const corpus::Split& parts, const corpus::BasketDataset& all,
                                        const std::string& which) {
  if (which == "train") return parts.train;
  if (which == "val") return parts.val;
  if (which == "test") return parts.test;
  if (which == "all") return all;
  throw UsageError("--split: expected train, val, test or all, got '" + which + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge-prompted next-basket recommendation"};
  app.require_subcommand(1);

  std::string spec_path, out_events, out_kg;
  auto* synth = app.add_subcommand("synth", "Generate a planted-pattern synthetic dataset");
  synth->add_option("--spec", spec_path, "key=value generator settings (defaults when omitted)");
  synth->add_option("--out-events", out_events, "interaction TSV to write")->required();
  synth->add_option("--out-kg", out_kg, "knowledge graph TSV to write")->required();

  std::string events, kg_path, names, config_path, out_ckpt, ckpt_path, report_path, ks_text = "5,10",
                                                                                      split_name = "test", user;
  std::size_t workers = 0, n = 10;
  bool cold_only = false;

  auto* train_cmd = app.add_subcommand("train", "Preprocess, split and train; prints one JSON line per epoch");
  train_cmd->add_option("--events", events)->required();
  train_cmd->add_option("--kg", kg_path)->required();
  train_cmd->add_option("--names", names, "TSV item_id<TAB>surface name");
  train_cmd->add_option("--config", config_path)->required();
  train_cmd->add_option("--out", out_ckpt, "checkpoint path")->required();
  train_cmd->add_option("--workers", workers, "parallel per-user forward passes (overrides train.workers)");

  auto* eval_cmd = app.add_subcommand("evaluate", "Metrics of a checkpoint on a split of the events");
  eval_cmd->add_option("--ckpt", ckpt_path)->required();
  eval_cmd->add_option("--events", events)->required();
  eval_cmd->add_option("--kg", kg_path)->required();
  eval_cmd->add_option("--names", names);
  eval_cmd->add_option("--k", ks_text, "comma-separated cutoffs");
  eval_cmd->add_option("--report", report_path, "also write the JSON report here");
  eval_cmd->add_option("--split", split_name, "train, val, test or all");
  eval_cmd->add_option("--workers", workers);
  eval_cmd->add_flag("--cold-only", cold_only, "only users whose target basket has no previously seen item");

  auto* rec_cmd = app.add_subcommand("recommend", "Top-n items for one user's next basket");
  rec_cmd->add_option("--ckpt", ckpt_path)->required();
  rec_cmd->add_option("--user", user)->required();
  rec_cmd->add_option("--events", events)->required();
  rec_cmd->add_option("--kg", kg_path)->required();
  rec_cmd->add_option("--names", names);
  rec_cmd->add_option("--n", n)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      const corpus::SyntheticSpec spec = spec_path.empty() ? corpus::SyntheticSpec{} : [&] {
        try {
          return load_synthetic_spec(spec_path);
        } catch (const IoError&) {
          throw;
        } catch (const Error& e) {
          throw UsageError(e.what());
        }
      }();
      const corpus::SyntheticData data = corpus::gen_synthetic(spec);
      corpus::save_interactions(data.events, out_events);
      knowledge::save_kg(data.kg, out_kg);
      std::cerr << "wrote " << data.events.size() << " events and " << data.kg.triples().size() << " triples\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      ExperimentConfig config = read_config(config_path);
      if (workers > 0) config.train.workers = workers;
      const knowledge::KnowledgeGraph kg = knowledge::load_kg(kg_path);
      const corpus::BasketDataset all = load_dataset(events, names, config);
      const corpus::Split parts = corpus::split(all, config.train.split_ratios, config.seed);
      TrainResult result = train(parts.train, parts.val, kg, config, &std::cout);
      // Workers only affect speed; keep the stored config independent of them.
      result.best.config.train.workers = read_config(config_path).train.workers;
      save_checkpoint(result.best, out_ckpt);
      std::cerr << "best epoch " << result.best.epoch << " val HR@5 " << result.best.val_hr5 << " -> " << out_ckpt
                << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const std::vector<std::size_t> ks = parse_ks(ks_text);
      Checkpoint ckpt = load_checkpoint(ckpt_path);
      if (workers > 0) ckpt.config.train.workers = workers;
      const knowledge::KnowledgeGraph kg = knowledge::load_kg(kg_path);
      const corpus::BasketDataset all = load_dataset(events, names, ckpt.config);
      const corpus::Split parts = corpus::split(all, ckpt.config.train.split_ratios, ckpt.config.seed);
      corpus::BasketDataset target = pick_split(parts, all, split_name);
      if (cold_only) {
        std::erase_if(target.sequences, [](const corpus::UserSequence& s) {
          if (s.baskets.size() < 2) return true;
          std::set<std::size_t> prior;
          for (auto it = s.baskets.begin(); it != s.baskets.end() - 1; ++it) prior.insert(it->begin(), it->end());
          for (auto i : s.baskets.back())
            if (prior.count(i)) return true;
          return false;
        });
        if (target.sequences.empty()) throw DataError("--cold-only: no cold users in the " + split_name + " split");
      }
      for (std::size_t k : ks)
        if (k > ckpt.catalog.size()) throw UsageError("--k: cutoff " + std::to_string(k) + " exceeds catalog size");
      eval::MetricsReport report = evaluate_checkpoint(ckpt, target, kg, ks);
      report.config["eval.split"] = split_name;
      const std::string json = report.to_json();
      std::cout << json << "\n";
      if (!report_path.empty()) write_or_throw(report_path, json + "\n");
      return 0;
    }

    if (rec_cmd->parsed()) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const knowledge::KnowledgeGraph kg = knowledge::load_kg(kg_path);
      const corpus::BasketDataset all = load_dataset(events, names, ckpt.config);
      if (all.catalog != ckpt.catalog) throw DataError(events + ": item catalog differs from the checkpoint");
      const corpus::UserSequence* seq = all.find_user(user);
      if (!seq) throw DataError(events + ": user '" + user + "' not found after preprocessing");
      if (n > ckpt.catalog.size()) throw UsageError("--n exceeds the catalog size");
      const Recommender rec(ckpt, kg);
      const std::vector<double> scores = rec.score(seq->baskets, n);
      const auto top = head::recommend_topn(scores, n);
      for (std::size_t r = 0; r < top.size(); ++r)
        std::cout << (r + 1) << "\t" << ckpt.catalog[top[r]] << "\t" << scores[top[r]] << "\n";
      return 0;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
