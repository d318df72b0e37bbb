#include "sse/run_manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>

#include "json.hpp"
#include "sse/errors.hpp"

namespace sse {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(n) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("config line " + std::to_string(n) + ": empty key");
    if (!kv.emplace(key, trim(line.substr(eq + 1))).second) {
      throw ConfigError("config line " + std::to_string(n) + ": duplicate key '" + key + "'");
    }
  }
  return kv;
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw IoError("sha256: init failed");
  std::array<char, 1 << 16> buf{};
  while (in.read(buf.data(), buf.size()) || in.gcount() > 0) {
    EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof(byte), "%02x", md[i]);
    hex += byte;
  }
  return hex;
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("SSE_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long s = std::strtoull(v, &end, 10);
  if (*end != '\0' || *v == '-') throw ConfigError(std::string("SSE_SEED is not an unsigned integer: '") + v + "'");
  return s;
}

RunManifest::RunManifest(std::string path, std::string command)
    : path_(std::move(path)), command_(std::move(command)), started_(utc_now()) {}

void RunManifest::set_config(const std::map<std::string, std::string>& config) {
  config_ = config;
  write();
}

void RunManifest::set_seed(const std::string& name, std::uint64_t seed) {
  seeds_[name] = seed;
  write();
}

void RunManifest::add_input(const std::string& path) {
  inputs_.push_back({path, sha256_file(path)});
  write();
}

void RunManifest::add_artifact(const std::string& path) {
  artifacts_.push_back(path);
  write();
}

void RunManifest::finish(const std::string& status) {
  status_ = status;
  finished_ = utc_now();
  write();
}

void RunManifest::write() const {
  nlohmann::ordered_json j;
  j["command"] = command_;
  j["status"] = status_;
  j["started"] = started_;
  if (!finished_.empty()) j["finished"] = finished_;
  j["config"] = config_;
  j["seeds"] = seeds_;
  j["inputs"] = nlohmann::json::array();
  for (const Input& in : inputs_) j["inputs"].push_back({{"path", in.path}, {"sha256", in.sha256}});
  j["artifacts"] = artifacts_;
  const std::filesystem::path p(path_);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  const std::string tmp = path_ + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write manifest '" + path_ + "'");
    out << j.dump(2) << '\n';
  }
  std::filesystem::rename(tmp, path_);
}

}  // namespace sse
