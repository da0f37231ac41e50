#include "hekp/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "hekp/error.hpp"
#include "hekp/seed.hpp"
#include "hekp/text.hpp"

namespace hekp::corpus {

namespace {

std::int64_t parse_int(const std::string& s, const std::string& source, std::size_t line,
                       const char* what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw ParseError(source, line, std::string("invalid ") + what + " '" + s + "'");
  return v;
}

std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

bool bernoulli(std::mt19937_64& rng, double p) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

// First `k` entries of a seeded partial Fisher-Yates shuffle.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, std::mt19937_64& rng) {
  k = std::min(k, pool.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace

void PreprocessRules::validate() const {
  if (min_basket_size < 1 || min_basket_size > max_basket_size)
    throw ConfigError("preprocess rules: need 1 <= min_basket_size <= max_basket_size");
  if (min_seq_len < 1 || min_seq_len > max_seq_len)
    throw ConfigError("preprocess rules: need 1 <= min_seq_len <= max_seq_len");
}

std::optional<ItemIndex> BasketDataset::index_of(const std::string& item_id) const {
  auto it = std::lower_bound(catalog.begin(), catalog.end(), item_id);
  if (it == catalog.end() || *it != item_id) return std::nullopt;
  return static_cast<ItemIndex>(it - catalog.begin());
}

const std::string& BasketDataset::surface_name(ItemIndex item) const {
  auto it = names.find(item);
  return it == names.end() ? catalog.at(item) : it->second;
}

const UserSequence* BasketDataset::find_user(const std::string& user_id) const {
  for (const auto& s : sequences)
    if (s.user_id == user_id) return &s;
  return nullptr;
}

std::size_t BasketDataset::basket_count() const {
  std::size_t n = 0;
  for (const auto& s : sequences) n += s.baskets.size();
  return n;
}

bool FrequencyVector::is_zero() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; });
}

std::vector<double> FrequencyVector::indicator() const {
  std::vector<double> beta(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) beta[i] = values[i] > 0.0 ? 1.0 : 0.0;
  return beta;
}

std::vector<InteractionEvent> load_interactions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open events file " + path.string());
  std::vector<InteractionEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3)
      throw ParseError(path.string(), line_no,
                       "expected user_id<TAB>timestamp<TAB>item_id, got " +
                           std::to_string(fields.size()) + " field(s)");
    if (fields[0].empty() || fields[2].empty())
      throw ParseError(path.string(), line_no, "empty user_id or item_id");
    events.push_back({fields[0], parse_int(fields[1], path.string(), line_no, "timestamp"), fields[2]});
  }
  return events;
}

void save_interactions(const std::vector<InteractionEvent>& events,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write events file " + path.string());
  for (const auto& e : events) out << e.user_id << '\t' << e.timestamp << '\t' << e.item_id << '\n';
}

std::map<std::string, std::string> load_item_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open item-names file " + path.string());
  std::map<std::string, std::string> names;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw ParseError(path.string(), line_no, "expected item_id<TAB>surface_name");
    names[fields[0]] = fields[1];
  }
  return names;
}

void attach_names(BasketDataset& dataset, const std::map<std::string, std::string>& names) {
  for (const auto& [id, name] : names)
    if (auto idx = dataset.index_of(id)) dataset.names[*idx] = name;
}

BasketDataset preprocess(const std::vector<InteractionEvent>& events, const PreprocessRules& rules) {
  rules.validate();
  if (events.empty()) throw DataError("preprocess: no interaction events");

  // user -> timestamp -> items
  std::map<std::string, std::map<std::int64_t, std::set<std::string>>> grouped;
  for (const auto& e : events) grouped[e.user_id][e.timestamp].insert(e.item_id);

  struct RawSequence {
    std::string user;
    std::vector<std::int64_t> timestamps;
    std::vector<std::vector<std::string>> baskets;
  };
  std::vector<RawSequence> kept;
  std::set<std::string> items;
  for (const auto& [user, by_time] : grouped) {
    RawSequence seq{user, {}, {}};
    for (const auto& [ts, basket_items] : by_time) {
      if (basket_items.size() < rules.min_basket_size) continue;
      std::vector<std::string> basket(basket_items.begin(), basket_items.end());
      if (basket.size() > rules.max_basket_size) {
        std::mt19937_64 rng(sub_seed(rules.sample_seed, user, static_cast<std::uint64_t>(ts)));
        basket = sample_without_replacement(std::move(basket), rules.max_basket_size, rng);
        std::sort(basket.begin(), basket.end());
      }
      seq.timestamps.push_back(ts);
      seq.baskets.push_back(std::move(basket));
    }
    if (seq.baskets.size() < rules.min_seq_len) continue;
    if (seq.baskets.size() > rules.max_seq_len) {
      const std::size_t drop = seq.baskets.size() - rules.max_seq_len;
      seq.baskets.erase(seq.baskets.begin(), seq.baskets.begin() + static_cast<std::ptrdiff_t>(drop));
      seq.timestamps.erase(seq.timestamps.begin(),
                           seq.timestamps.begin() + static_cast<std::ptrdiff_t>(drop));
    }
    for (const auto& b : seq.baskets) items.insert(b.begin(), b.end());
    kept.push_back(std::move(seq));
  }
  if (kept.empty()) throw DataError("preprocess: every user was filtered out (empty dataset)");

  BasketDataset out;
  out.rules = rules;
  out.catalog.assign(items.begin(), items.end());
  for (auto& raw : kept) {
    UserSequence seq;
    seq.user_id = raw.user;
    seq.timestamps = raw.timestamps;
    for (const auto& b : raw.baskets) {
      Basket basket;
      for (const auto& id : b) basket.push_back(*out.index_of(id));
      std::sort(basket.begin(), basket.end());
      seq.baskets.push_back(std::move(basket));
    }
    out.sequences.push_back(std::move(seq));
  }
  return out;
}

std::vector<InteractionEvent> to_events(const BasketDataset& dataset) {
  std::vector<InteractionEvent> events;
  for (const auto& seq : dataset.sequences)
    for (std::size_t k = 0; k < seq.baskets.size(); ++k)
      for (ItemIndex i : seq.baskets[k])
        events.push_back({seq.user_id, seq.timestamps[k], dataset.catalog[i]});
  return events;
}

Split split(const BasketDataset& dataset, const std::array<double, 3>& ratios, std::uint64_t seed) {
  for (double r : ratios)
    if (!(r > 0.0)) throw DataError("split: ratios must be positive");
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9)
    throw DataError("split: ratios must sum to 1 (got " + std::to_string(total) + ")");
  const std::size_t n = dataset.sequences.size();
  if (n < 3) throw DataError("split: need at least 3 users, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(sub_seed(seed, "split"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[uniform_index(rng, i + 1)]);

  auto count = [n](double r) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(r * static_cast<double>(n))));
  };
  const std::size_t n_val = count(ratios[1]);
  const std::size_t n_test = count(ratios[2]);
  if (n_val + n_test >= n) throw DataError("split: too few users for the requested ratios");
  const std::size_t n_train = n - n_val - n_test;

  Split out;
  for (BasketDataset* part : {&out.train, &out.val, &out.test}) {
    part->catalog = dataset.catalog;
    part->names = dataset.names;
    part->rules = dataset.rules;
  }
  for (std::size_t k = 0; k < n; ++k) {
    BasketDataset& part = k < n_train ? out.train : (k < n_train + n_val ? out.val : out.test);
    part.sequences.push_back(dataset.sequences[order[k]]);
  }
  for (BasketDataset* part : {&out.train, &out.val, &out.test})
    std::sort(part->sequences.begin(), part->sequences.end(),
              [](const UserSequence& a, const UserSequence& b) { return a.user_id < b.user_id; });
  return out;
}

FrequencyVector frequency_vector(const std::vector<Basket>& sequence, std::size_t catalog_size) {
  FrequencyVector f;
  f.values.assign(catalog_size, 0.0);
  std::size_t total = 0;
  for (const auto& b : sequence)
    for (ItemIndex i : b) {
      if (i >= catalog_size)
        throw DataError("frequency_vector: item index " + std::to_string(i) +
                        " outside catalog of size " + std::to_string(catalog_size));
      f.values[i] += 1.0;
      ++total;
    }
  if (total > 0)
    for (double& v : f.values) v /= static_cast<double>(total);
  return f;
}

void SyntheticSpec::validate() const {
  if (n_users < 1 || n_items < 2 || n_baskets_per_user < 1)
    throw ConfigError("synthetic spec: need n_users >= 1, n_items >= 2, n_baskets_per_user >= 1");
  if (n_patterns < 1 || pattern_size < 1)
    throw ConfigError("synthetic spec: need n_patterns >= 1 and pattern_size >= 1");
  if (pattern_size > max_basket_size)
    throw ConfigError("synthetic spec: pattern_size exceeds max_basket_size");
  if (n_patterns * pattern_size > n_items)
    throw ConfigError("synthetic spec: n_patterns * pattern_size exceeds n_items");
  if (!(noise_rate >= 0.0 && noise_rate <= 1.0))
    throw ConfigError("synthetic spec: noise_rate must lie in [0, 1]");
  if (!(drift_rate >= 0.0 && drift_rate <= 1.0))
    throw ConfigError("synthetic spec: drift_rate must lie in [0, 1]");
}

std::string synthetic_item_id(std::size_t ordinal, std::size_t n_items) {
  const std::size_t width = std::max<std::size_t>(3, std::to_string(n_items - 1).size());
  std::string digits = std::to_string(ordinal);
  return "i" + std::string(width - std::min(width, digits.size()), '0') + digits;
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(sub_seed(spec.seed, "synthetic"));
  SyntheticData out;

  std::vector<std::size_t> perm(spec.n_items);
  std::iota(perm.begin(), perm.end(), 0);
  perm = sample_without_replacement(perm, perm.size(), rng);
  std::vector<long> pattern_of(spec.n_items, -1);
  for (std::size_t p = 0; p < spec.n_patterns; ++p) {
    std::vector<ItemIndex> members(perm.begin() + static_cast<std::ptrdiff_t>(p * spec.pattern_size),
                                   perm.begin() + static_cast<std::ptrdiff_t>((p + 1) * spec.pattern_size));
    std::sort(members.begin(), members.end());
    for (ItemIndex i : members) pattern_of[i] = static_cast<long>(p);
    out.patterns.push_back(std::move(members));
  }
  std::vector<std::size_t> cycle(spec.n_patterns);
  std::iota(cycle.begin(), cycle.end(), 0);
  cycle = sample_without_replacement(cycle, cycle.size(), rng);
  out.successor.assign(spec.n_patterns, 0);
  for (std::size_t k = 0; k < cycle.size(); ++k) out.successor[cycle[k]] = cycle[(k + 1) % cycle.size()];

  const std::size_t user_width = std::max<std::size_t>(4, std::to_string(spec.n_users - 1).size());
  const std::size_t min_size = std::min<std::size_t>(2, spec.pattern_size);
  for (std::size_t u = 0; u < spec.n_users; ++u) {
    std::string digits = std::to_string(u);
    const std::string user = "u" + std::string(user_width - std::min(user_width, digits.size()), '0') + digits;
    const std::size_t first = uniform_index(rng, spec.n_patterns);
    const bool drift = spec.n_patterns >= 2 && spec.n_baskets_per_user >= 2 && bernoulli(rng, spec.drift_rate);
    const std::size_t tail =
        drift ? 1 + uniform_index(rng, std::max<std::size_t>(1, spec.n_baskets_per_user / 2)) : 0;
    for (std::size_t k = 0; k < spec.n_baskets_per_user; ++k) {
      const std::size_t p = k >= spec.n_baskets_per_user - tail ? out.successor[first] : first;
      const std::size_t size = min_size + uniform_index(rng, spec.pattern_size - min_size + 1);
      std::vector<ItemIndex> basket = sample_without_replacement(out.patterns[p], size, rng);
      if (bernoulli(rng, spec.noise_rate) && basket.size() < spec.n_items) {
        ItemIndex extra;
        do {
          extra = uniform_index(rng, spec.n_items);
        } while (std::find(basket.begin(), basket.end(), extra) != basket.end());
        basket.push_back(extra);
      }
      std::sort(basket.begin(), basket.end());
      const std::int64_t ts = 1'000'000 + static_cast<std::int64_t>(k) * 86'400;
      for (ItemIndex i : basket) out.events.push_back({user, ts, synthetic_item_id(i, spec.n_items)});
    }
  }

  static const char* kRelations[] = {"function_is", "level_is", "gender_is"};
  for (std::size_t i = 0; i < spec.n_items; ++i) {
    const std::string id = synthetic_item_id(i, spec.n_items);
    const long p = pattern_of[i];
    out.kg.add({id, "category_is", p >= 0 ? "category_" + std::to_string(p) : "category_misc"});
    for (std::size_t a = 0; a < spec.kg_attrs_per_item; ++a) {
      const std::string rel = a < 3 ? kRelations[a] : "attr" + std::to_string(a) + "_is";
      const std::string stem = rel.substr(0, rel.size() - 3);
      const bool follows_pattern = p >= 0 && bernoulli(rng, 0.75);
      const std::size_t value =
          follows_pattern ? (static_cast<std::size_t>(p) * 3 + a) % 8 : uniform_index(rng, 8);
      out.kg.add({id, rel, stem + "_" + std::to_string(value)});
    }
  }
  return out;
}

void write_dataset(const BasketDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write dataset file " + path.string());
  const PreprocessRules& r = dataset.rules;
  out << "#hekp-dataset\tsample_seed=" << r.sample_seed << "\tmin_basket_size=" << r.min_basket_size
      << "\tmax_basket_size=" << r.max_basket_size << "\tmin_seq_len=" << r.min_seq_len
      << "\tmax_seq_len=" << r.max_seq_len << '\n';
  for (const auto& seq : dataset.sequences) {
    out << seq.user_id << '\t';
    for (std::size_t k = 0; k < seq.baskets.size(); ++k) {
      if (k) out << ';';
      out << seq.timestamps[k] << ':';
      for (std::size_t j = 0; j < seq.baskets[k].size(); ++j)
        out << (j ? "," : "") << dataset.catalog[seq.baskets[k][j]];
    }
    out << '\n';
  }
}

BasketDataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing header");
  strip_cr(line);
  auto header = split_tabs(line);
  if (header.empty() || header[0] != "#hekp-dataset")
    throw ParseError(path.string(), 1, "missing #hekp-dataset header");
  PreprocessRules rules;
  for (std::size_t k = 1; k < header.size(); ++k) {
    const auto eq = header[k].find('=');
    if (eq == std::string::npos) throw ParseError(path.string(), 1, "bad header field " + header[k]);
    const std::string key = header[k].substr(0, eq);
    const auto value = static_cast<std::uint64_t>(parse_int(header[k].substr(eq + 1), path.string(), 1, "header value"));
    if (key == "sample_seed") rules.sample_seed = value;
    else if (key == "min_basket_size") rules.min_basket_size = value;
    else if (key == "max_basket_size") rules.max_basket_size = value;
    else if (key == "min_seq_len") rules.min_seq_len = value;
    else if (key == "max_seq_len") rules.max_seq_len = value;
    else throw ParseError(path.string(), 1, "unknown header key " + key);
  }

  struct Raw {
    std::string user;
    std::vector<std::int64_t> ts;
    std::vector<std::vector<std::string>> baskets;
  };
  std::vector<Raw> raws;
  std::set<std::string> items;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 2) throw ParseError(path.string(), line_no, "expected user_id<TAB>baskets");
    Raw raw{fields[0], {}, {}};
    for (const auto& chunk : split_on(fields[1], ';')) {
      const auto colon = chunk.find(':');
      if (colon == std::string::npos) throw ParseError(path.string(), line_no, "basket without timestamp");
      raw.ts.push_back(parse_int(chunk.substr(0, colon), path.string(), line_no, "timestamp"));
      auto basket = split_on(std::string_view(chunk).substr(colon + 1), ',');
      items.insert(basket.begin(), basket.end());
      raw.baskets.push_back(std::move(basket));
    }
    raws.push_back(std::move(raw));
  }
  BasketDataset ds;
  ds.rules = rules;
  ds.catalog.assign(items.begin(), items.end());
  for (auto& raw : raws) {
    UserSequence seq{raw.user, raw.ts, {}};
    for (const auto& b : raw.baskets) {
      Basket basket;
      for (const auto& id : b) basket.push_back(*ds.index_of(id));
      std::sort(basket.begin(), basket.end());
      seq.baskets.push_back(std::move(basket));
    }
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

}  // namespace hekp::corpus
