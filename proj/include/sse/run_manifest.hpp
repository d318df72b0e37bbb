#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace sse {

// key=value per line; '#' starts a comment; blank lines ignored. Duplicate
// keys and lines without '=' are a ConfigError naming the line.
std::map<std::string, std::string> parse_config_file(const std::string& path);
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

// SSE_SEED when set and a valid unsigned integer; ConfigError when malformed.
std::optional<std::uint64_t> env_seed();

// JSON record of one CLI run. Rewritten to disk on every change so an
// interrupted run still names what it finished.
class RunManifest {
 public:
  RunManifest(std::string path, std::string command);

  void set_config(const std::map<std::string, std::string>& config);
  void set_seed(const std::string& name, std::uint64_t seed);
  void add_input(const std::string& path);  // records the digest
  void add_artifact(const std::string& path);
  void finish(const std::string& status);
  void write() const;

  const std::string& path() const { return path_; }

 private:
  struct Input {
    std::string path;
    std::string sha256;
  };

  std::string path_;
  std::string command_;
  std::map<std::string, std::string> config_;
  std::map<std::string, std::uint64_t> seeds_;
  std::vector<Input> inputs_;
  std::vector<std::string> artifacts_;
  std::string started_;
  std::string finished_;
  std::string status_ = "running";
};

}  // namespace sse
