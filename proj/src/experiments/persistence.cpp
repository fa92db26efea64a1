#include "cedge/experiments/persistence.hpp"

#include "cedge/core/io.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace cedge::experiments {

namespace {

void dump(const json& j, std::string& out, int indent, int depth) {
  const auto newline = [&](int d) {
    if (indent < 0) return;
    out += '\n';
    out.append(static_cast<std::size_t>(indent * d), ' ');
  };
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += '{';
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ',';
        first = false;
        newline(depth + 1);
        out += json(it.key()).dump();
        out += indent < 0 ? ":" : ": ";
        dump(it.value(), out, indent, depth + 1);
      }
      newline(depth);
      out += '}';
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      // Numeric arrays stay on one line.
      const bool flat = std::all_of(j.begin(), j.end(), [](const json& v) { return v.is_primitive(); });
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        if (!flat) newline(depth + 1);
        dump(j[i], out, indent, depth + 1);
      }
      if (!flat) newline(depth);
      out += ']';
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) throw FormatError("cannot serialize non-finite number");
      out += format_double(v);
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_json(const json& doc, int indent) {
  std::string out;
  dump(doc, out, indent, 0);
  return out;
}

json parse_json(const std::string& text, const std::string& source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(fmt::format("{}: parse error at byte {}", source, e.byte));
  }
}

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  try {
    const auto rows = j.at("rows").get<Index>();
    const auto cols = j.at("cols").get<Index>();
    const json& data = j.at("data");
    if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
      throw FormatError("matrix data length does not match its shape");
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index c = 0; c < cols; ++c) m(i, c) = data[static_cast<std::size_t>(i * cols + c)].get<double>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed matrix: ") + e.what());
  }
}

json store_to_json(const ParameterStore& store) {
  json out = json::object();
  for (const auto& [name, value] : store) out[name] = matrix_to_json(value);
  return out;
}

ParameterStore store_from_json(const json& j) {
  ParameterStore store;
  for (auto it = j.begin(); it != j.end(); ++it) store.add(it.key(), matrix_from_json(it.value()));
  return store;
}

OptimizerState OptimizerState::capture(const Adam& adam) {
  return {adam.config(), adam.steps(), adam.first_moments(), adam.second_moments()};
}

Adam OptimizerState::restore() const {
  Adam adam(config);
  adam.restore(steps, m, v);
  return adam;
}

namespace {

json moments_to_json(const std::map<std::string, Matrix>& m) {
  json out = json::object();
  for (const auto& [name, value] : m) out[name] = matrix_to_json(value);
  return out;
}

std::map<std::string, Matrix> moments_from_json(const json& j) {
  std::map<std::string, Matrix> out;
  for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = matrix_from_json(it.value());
  return out;
}

json vector_to_json(const Vector& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json doc;
  doc["format_version"] = ckpt.format_version;
  doc["kind"] = ckpt.kind;
  doc["config_hash"] = ckpt.config_hash;
  doc["seed"] = ckpt.seed;
  doc["arch"] = ckpt.arch;
  doc["meta"] = ckpt.meta;
  json stores = json::object();
  for (const auto& [name, store] : ckpt.stores) stores[name] = store_to_json(store);
  doc["stores"] = std::move(stores);
  json opts = json::object();
  for (const auto& [name, o] : ckpt.optimizers) {
    opts[name] = {{"lr", o.config.lr},
                  {"beta1", o.config.beta1},
                  {"beta2", o.config.beta2},
                  {"eps", o.config.eps},
                  {"weight_decay", o.config.weight_decay},
                  {"steps", o.steps},
                  {"m", moments_to_json(o.m)},
                  {"v", moments_to_json(o.v)}};
  }
  doc["optimizers"] = std::move(opts);
  if (ckpt.normalizer)
    doc["normalizer"] = {{"mean", vector_to_json(ckpt.normalizer->mean())},
                         {"std", vector_to_json(ckpt.normalizer->std())}};
  if (!ckpt.betas.empty()) doc["schedule"] = {{"betas", ckpt.betas}};
  atomic_write(path, dump_json(doc, 1) + "\n");
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_kind) {
  if (!std::filesystem::exists(path)) throw FormatError("missing checkpoint " + path);
  const json doc = parse_json(read_file(path), path);
  Checkpoint ckpt;
  try {
    ckpt.format_version = doc.at("format_version").get<int>();
    if (ckpt.format_version != Checkpoint::kFormatVersion)
      throw FormatError(fmt::format("{}: checkpoint format version {} is not supported (expected {})", path,
                                    ckpt.format_version, Checkpoint::kFormatVersion));
    ckpt.kind = doc.at("kind").get<std::string>();
    if (!expected_kind.empty() && ckpt.kind != expected_kind)
      throw FormatError(path + ": checkpoint holds '" + ckpt.kind + "', expected '" + expected_kind + "'");
    ckpt.config_hash = doc.at("config_hash").get<std::string>();
    ckpt.seed = doc.at("seed").get<std::uint64_t>();
    ckpt.arch = doc.at("arch");
    ckpt.meta = doc.value("meta", json::object());
    for (auto it = doc.at("stores").begin(); it != doc.at("stores").end(); ++it)
      ckpt.stores[it.key()] = store_from_json(it.value());
    for (auto it = doc.at("optimizers").begin(); it != doc.at("optimizers").end(); ++it) {
      const json& o = it.value();
      OptimizerState st;
      st.config = {o.at("lr").get<double>(), o.at("beta1").get<double>(), o.at("beta2").get<double>(),
                   o.at("eps").get<double>(), o.at("weight_decay").get<double>()};
      st.steps = o.at("steps").get<long>();
      st.m = moments_from_json(o.at("m"));
      st.v = moments_from_json(o.at("v"));
      ckpt.optimizers[it.key()] = std::move(st);
    }
    if (doc.contains("normalizer"))
      ckpt.normalizer = env::Normalizer(vector_from_json(doc["normalizer"].at("mean")),
                                        vector_from_json(doc["normalizer"].at("std")));
    if (doc.contains("schedule")) ckpt.betas = doc["schedule"].at("betas").get<std::vector<double>>();
  } catch (const json::exception& e) {
    throw FormatError(path + ": malformed checkpoint: " + e.what());
  }
  return ckpt;
}

MetricsLog::MetricsLog(std::string path, std::string run_id, std::uint64_t seed)
    : path_(std::move(path)), run_id_(std::move(run_id)), seed_(seed), start_(std::chrono::steady_clock::now()) {
  const auto parent = std::filesystem::path(path_).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
}

void MetricsLog::write(json record) {
  record["run_id"] = run_id_;
  record["seed"] = seed_;
  record["wall_time"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to " + path_);
  out << dump_json(record) << '\n';
}

void MetricsLog::scalar(const std::string& phase, long step, const std::string& metric, double value) {
  if (!std::isfinite(value)) {
    write({{"phase", phase}, {"step", step}, {"metric", metric}, {"value", nullptr}});
    return;
  }
  write({{"phase", phase}, {"step", step}, {"metric", metric}, {"value", value}});
}

std::vector<json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing metrics file " + path);
  std::vector<json> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) {
      try {
        out.push_back(json::parse(line));
      } catch (const json::parse_error& e) {
        throw FormatError(fmt::format("{}: parse error at byte {}", path, offset + e.byte - 1));
      }
    }
    offset += line.size() + 1;
  }
  return out;
}

}  // namespace cedge::experiments
