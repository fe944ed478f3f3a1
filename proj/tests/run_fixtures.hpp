#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dlt/runtime.hpp"

namespace fixture {

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("dlt-test-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// A few seconds of single-worker dlt-formal training.
inline dlt::ExperimentConfig tiny_config(std::uint64_t seed) {
  dlt::ExperimentConfig c;
  c.seed = seed;
  c.workers = 1;
  c.batch_size = 8;
  c.total_steps = 20 * c.steps_per_round();
  c.roles.min_period_steps = 256;
  c.roles.max_period_steps = 512;
  c.roles.check_interval = 128;
  c.roles.ma_snapshot_steps = 384;
  return c;
}

}  // namespace fixture
