#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "hekp/error.hpp"
#include "hekp/text.hpp"
#include "hekp/train.hpp"

namespace hekp {

namespace {

constexpr std::string_view kCheckpointSection = "[checkpoint]";
constexpr std::string_view kItemsTensor = "derived.items";

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b, 8);
}

void put_f32(std::ostream& out, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b, 4);
}

std::uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError(path + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int k = 7; k >= 0; --k) v = (v << 8) | b[k];
  return v;
}

float get_f32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw DataError(path + ": truncated checkpoint");
  std::uint32_t v = 0;
  for (int k = 3; k >= 0; --k) v = (v << 8) | b[k];
  float f;
  std::memcpy(&f, &v, 4);
  return f;
}

std::string fmt_real(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

void put_tensor(std::ostream& out, const std::string& name, const ad::Tensor& t) {
  put_u64(out, name.size());
  out.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u64(out, t.rank());
  for (std::size_t d : t.shape()) put_u64(out, d);
  for (double v : t.data()) put_f32(out, static_cast<float>(v));
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ostringstream header;
  header << to_config_text(ckpt.config) << kCheckpointSection << "\n";
  header << "vocab_size=" << ckpt.config.model.vocab_size << "\n";
  header << "epoch=" << ckpt.epoch << "\n";
  header << "val_hr5=" << fmt_real(ckpt.val_hr5) << "\n";
  for (const auto& t : ckpt.vocab) header << "token=" << t << "\n";
  for (std::size_t i = 0; i < ckpt.catalog.size(); ++i)
    header << "item=" << ckpt.catalog[i] << "\t" << ckpt.surfaces[i] << "\t" << fmt_real(ckpt.item_counts[i])
           << "\n";
  const std::string text = header.str();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out << kCheckpointMagic << "\n";
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  put_u64(out, ckpt.params.entries().size() + 1);
  for (const auto& [name, t] : ckpt.params.entries()) put_tensor(out, name, t);
  put_tensor(out, std::string(kItemsTensor), ckpt.items);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + p);
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw DataError(p + ": not a checkpoint (bad magic)");

  const std::uint64_t header_len = get_u64(in, p);
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) throw DataError(p + ": truncated header");
  const auto marker = text.find(std::string(kCheckpointSection) + "\n");
  if (marker == std::string::npos) throw DataError(p + ": header lacks the checkpoint section");

  Checkpoint ckpt;
  ckpt.config = parse_config(text.substr(0, marker), p);
  std::istringstream meta(text.substr(marker + kCheckpointSection.size() + 1));
  std::string line;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError(p + ": bad header line '" + line + "'");
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key == "vocab_size") ckpt.config.model.vocab_size = std::stoul(value);
    else if (key == "epoch") ckpt.epoch = std::stoul(value);
    else if (key == "val_hr5") ckpt.val_hr5 = std::stod(value);
    else if (key == "token") ckpt.vocab.push_back(value);
    else if (key == "item") {
      const auto f = split_tabs(value);
      if (f.size() != 3) throw DataError(p + ": bad item line '" + line + "'");
      ckpt.catalog.push_back(f[0]);
      ckpt.surfaces.push_back(f[1]);
      ckpt.item_counts.push_back(std::stod(f[2]));
    } else {
      throw DataError(p + ": unknown header key '" + key + "'");
    }
  }

  const std::uint64_t n_tensors = get_u64(in, p);
  for (std::uint64_t k = 0; k < n_tensors; ++k) {
    const std::uint64_t name_len = get_u64(in, p);
    if (name_len > 4096) throw DataError(p + ": implausible tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(name_len))) throw DataError(p + ": truncated tensor name");
    const std::uint64_t rank = get_u64(in, p);
    if (rank > 4) throw DataError(p + ": tensor '" + name + "' has implausible rank");
    ad::Shape shape;
    for (std::uint64_t r = 0; r < rank; ++r) shape.push_back(get_u64(in, p));
    std::vector<double> values(ad::shape_numel(shape));
    for (double& v : values) v = static_cast<double>(get_f32(in, p));
    ad::Tensor t = ad::Tensor::from(shape, std::move(values));
    if (name == kItemsTensor) ckpt.items = t;
    else ckpt.params.add(name, t);
  }
  if (!ckpt.items.defined()) throw DataError(p + ": checkpoint lacks item embeddings");
  if (ckpt.vocab.size() + 6 != ckpt.config.model.vocab_size)
    throw DataError(p + ": vocabulary size does not match the model");
  return ckpt;
}

}  // namespace hekp
