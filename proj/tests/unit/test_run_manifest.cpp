#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "json.hpp"
#include "sse/errors.hpp"
#include "sse/run_manifest.hpp"

namespace fs = std::filesystem;

TEST_CASE("sha256 of known inputs") {
  const fs::path dir = fs::temp_directory_path() / "sse_unit_sha";
  fs::create_directories(dir);
  {
    std::ofstream(dir / "abc") << "abc";
    std::ofstream(dir / "empty");
  }
  CHECK(sse::sha256_file((dir / "abc").string()) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sse::sha256_file((dir / "empty").string()) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK_THROWS_AS(sse::sha256_file((dir / "missing").string()), sse::IoError);
  fs::remove_all(dir);
}

TEST_CASE("config text parsing") {
  const auto kv = sse::parse_config_text("# comment\nepochs = 3\n\nlearning_rate=0.01  # trailing\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("epochs") == "3");
  CHECK(kv.at("learning_rate") == "0.01");
  CHECK_THROWS_AS(sse::parse_config_text("epochs=3\nepochs=4\n"), sse::ConfigError);
  CHECK_THROWS_AS(sse::parse_config_text("no equals sign\n"), sse::ConfigError);
}

TEST_CASE("SSE_SEED") {
  ::unsetenv("SSE_SEED");
  CHECK_FALSE(sse::env_seed().has_value());
  ::setenv("SSE_SEED", "42", 1);
  CHECK(sse::env_seed() == 42u);
  ::setenv("SSE_SEED", "4x", 1);
  CHECK_THROWS_AS(sse::env_seed(), sse::ConfigError);
  ::setenv("SSE_SEED", "-1", 1);
  CHECK_THROWS_AS(sse::env_seed(), sse::ConfigError);
  ::unsetenv("SSE_SEED");
}

TEST_CASE("manifest records inputs, seeds and status") {
  const fs::path dir = fs::temp_directory_path() / "sse_unit_manifest";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream(dir / "in.csv") << "abc";
  const std::string path = (dir / "sub" / "manifest.json").string();
  sse::RunManifest m(path, "train");
  m.set_config({{"epochs", "2"}});
  m.set_seed("seed", 7);
  m.add_input((dir / "in.csv").string());
  auto read = [&] {
    std::ifstream in(path);
    return nlohmann::json::parse(in);
  };
  CHECK(read()["status"] == "running");
  m.add_artifact("fold0/checkpoint.sse");
  m.finish("ok");
  const auto j = read();
  CHECK(j["command"] == "train");
  CHECK(j["status"] == "ok");
  CHECK(j["config"]["epochs"] == "2");
  CHECK(j["seeds"]["seed"] == 7);
  CHECK(j["inputs"][0]["sha256"] == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(j["artifacts"][0] == "fold0/checkpoint.sse");
  CHECK(j.contains("finished"));
  CHECK_FALSE(fs::exists(path + ".tmp"));
  fs::remove_all(dir);
}
