#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "xencdec/model.hpp"

namespace xencdec {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'X', 'E', 'D', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ValidationError("checkpoint truncated");
  return value;
}

std::string config_text(const ModelConfig& c) {
  std::ostringstream out;
  out << "num_layers=" << c.num_layers << '\n'
      << "model_dim=" << c.model_dim << '\n'
      << "num_heads=" << c.num_heads << '\n'
      << "ffn_dim=" << c.ffn_dim << '\n'
      << "vocab_size=" << c.vocab_size << '\n'
      << "max_len=" << c.max_len << '\n'
      << "num_languages=" << c.num_languages << '\n';
  out.precision(17);
  out << "label_smoothing=" << c.label_smoothing << '\n'
      << "tag_mode=" << to_string(c.tag_mode) << '\n'
      << "tie_embeddings=" << (c.tie_embeddings ? 1 : 0) << '\n'
      << "attention_layer=" << c.attention_layer << '\n';
  return out.str();
}

ModelConfig parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto need = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ValidationError(std::string("checkpoint config lacks ") + key);
    return it->second;
  };
  ModelConfig c;
  c.num_layers = std::stoul(need("num_layers"));
  c.model_dim = std::stoul(need("model_dim"));
  c.num_heads = std::stoul(need("num_heads"));
  c.ffn_dim = std::stoul(need("ffn_dim"));
  c.vocab_size = std::stoul(need("vocab_size"));
  c.max_len = std::stoul(need("max_len"));
  c.num_languages = std::stoul(need("num_languages"));
  c.label_smoothing = std::stod(need("label_smoothing"));
  c.tag_mode = parse_tag_mode(need("tag_mode"));
  c.tie_embeddings = need("tie_embeddings") == "1";
  c.attention_layer = std::stoi(need("attention_layer"));
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const Seq2SeqModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string cfg = config_text(model.config());
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  const auto params = model.parameters();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    const auto& shape = p.tensor.shape();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put<std::uint64_t>(out, d);
    const auto v = p.tensor.values();
    out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Seq2SeqModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ValidationError(path + " is not a checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  std::string cfg(get<std::uint32_t>(in), '\0');
  in.read(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  Seq2SeqModel model(parse_config_text(cfg), 0);
  auto params = model.parameters();
  const auto count = get<std::uint32_t>(in);
  if (count != params.size()) throw ValidationError("checkpoint tensor count does not match its config");
  for (auto& p : params) {
    std::string name(get<std::uint32_t>(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    if (name != p.name) throw ValidationError("checkpoint tensor '" + name + "' where '" + p.name + "' expected");
    Shape shape(get<std::uint32_t>(in));
    for (auto& d : shape) d = get<std::uint64_t>(in);
    if (shape != p.tensor.shape()) throw ValidationError("checkpoint tensor '" + name + "' has shape " + to_string(shape));
    auto v = p.tensor.mutable_values();
    in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw ValidationError("checkpoint truncated in '" + name + "'");
  }
  return model;
}

}  // namespace xencdec
