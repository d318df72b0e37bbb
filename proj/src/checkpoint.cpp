#include "sse/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "sse/errors.hpp"

namespace sse {
namespace {

constexpr std::array<char, 4> kMagic = {'S', 'S', 'E', '1'};

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b{};
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b{};
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 8)) throw DataError("checkpoint: truncated header");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

struct Entry {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::uint64_t offset = 0;
};

}  // namespace

void save_checkpoint(std::ostream& out, const ModelParams& params) {
  std::ostringstream manifest;
  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& t = params.tensors()[i];
    manifest << "tensor " << params.names()[i] << ' ' << t.rows() << ' ' << t.cols() << ' ' << offset << '\n';
    offset += t.size() * sizeof(float);
  }
  for (const auto& [k, v] : params.config().to_map()) manifest << "config " << k << '=' << v << '\n';
  const std::string text = manifest.str();

  out.write(kMagic.data(), kMagic.size());
  put_u64(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const Tensor& t : params.tensors()) {
    for (double v : t.values()) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) throw IoError("checkpoint: write failed");
}

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  save_checkpoint(out, params);
}

ModelParams load_checkpoint(std::istream& in) {
  std::array<char, 4> magic{};
  if (!in.read(magic.data(), 4) || magic != kMagic) throw DataError("checkpoint: bad magic (expected SSE1)");
  const std::uint64_t length = get_u64(in);
  if (length > (1ULL << 32)) throw DataError("checkpoint: implausible manifest length");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw DataError("checkpoint: truncated manifest");

  std::vector<Entry> entries;
  std::map<std::string, std::string> config_kv;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string kind;
    ls >> kind;
    if (kind == "tensor") {
      Entry e;
      if (!(ls >> e.name >> e.rows >> e.cols >> e.offset)) throw DataError("checkpoint: bad tensor line '" + line + "'");
      entries.push_back(e);
    } else if (kind == "config") {
      const std::string kv = line.substr(7);
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw DataError("checkpoint: bad config line '" + line + "'");
      config_kv[kv.substr(0, eq)] = kv.substr(eq + 1);
    } else {
      throw DataError("checkpoint: unknown manifest entry '" + kind + "'");
    }
  }
  if (entries.size() < kNumFeatures) throw DataError("checkpoint: missing embedding tables");

  ModelConfig config;
  config.apply(config_kv);
  Cardinalities cards{};
  for (std::size_t f = 0; f < kNumFeatures; ++f) cards[f] = entries[f].rows;
  ModelParams params(config, cards);
  if (params.size() != entries.size()) {
    throw DataError("checkpoint: " + std::to_string(entries.size()) + " tensors, config implies " +
                    std::to_string(params.size()));
  }

  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    Tensor& t = params.tensors()[i];
    const Entry& e = entries[i];
    if (e.name != params.names()[i] || e.rows != t.rows() || e.cols != t.cols() || e.offset != expected_offset) {
      throw DataError("checkpoint: tensor '" + e.name + "' does not match the expected layout");
    }
    std::vector<unsigned char> raw(t.size() * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
      throw DataError("checkpoint: truncated payload for '" + e.name + "'");
    }
    auto values = t.values();
    for (std::size_t k = 0; k < values.size(); ++k) {
      std::uint32_t bits = 0;
      for (int b = 3; b >= 0; --b) bits = (bits << 8) | raw[k * 4 + static_cast<std::size_t>(b)];
      values[k] = static_cast<double>(std::bit_cast<float>(bits));
    }
    expected_offset += raw.size();
  }
  return params;
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return load_checkpoint(in);
}

}  // namespace sse
