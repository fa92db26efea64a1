#pragma once

#include "cedge/core/params.hpp"
#include "cedge/env/dataset.hpp"

#include <json.hpp>

#include <chrono>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cedge::experiments {

using json = nlohmann::json;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Serializes with every floating-point number at 17 significant digits.
// Non-finite numbers are rejected.
std::string dump_json(const json& doc, int indent = -1);
// Throws FormatError carrying the byte offset of a syntax error.
json parse_json(const std::string& text, const std::string& source);

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);
json store_to_json(const ParameterStore& store);
ParameterStore store_from_json(const json& j);

struct OptimizerState {
  AdamConfig config;
  long steps = 0;
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;

  static OptimizerState capture(const Adam& adam);
  Adam restore() const;
};

struct Checkpoint {
  static constexpr int kFormatVersion = 1;

  int format_version = kFormatVersion;
  std::string kind;
  std::string config_hash;
  std::uint64_t seed = 0;
  json arch = json::object();
  std::map<std::string, ParameterStore> stores;
  std::map<std::string, OptimizerState> optimizers;
  std::optional<env::Normalizer> normalizer;
  std::vector<double> betas;  // noise schedule, when relevant
  json meta = json::object();
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
// Refuses other format versions; `expected_kind` (if non-empty) must match.
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind = {});

// Append-only JSON-lines log. Every record carries run_id, seed and
// wall_time (seconds since the log was opened).
class MetricsLog {
 public:
  MetricsLog(std::string path, std::string run_id, std::uint64_t seed);

  void write(json record);
  void scalar(const std::string& phase, long step, const std::string& metric, double value);
  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::string run_id_;
  std::uint64_t seed_;
  std::chrono::steady_clock::time_point start_;
};

// Throws FormatError naming the file when it is missing or malformed.
std::vector<json> read_jsonl(const std::string& path);

}  // namespace cedge::experiments
