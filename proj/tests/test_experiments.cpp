#include "cedge/core/io.hpp"
#include "cedge/diffusion/denoiser.hpp"
#include "cedge/experiments/commands.hpp"
#include "cedge/experiments/config.hpp"
#include "cedge/experiments/persistence.hpp"
#include "cedge/experiments/report.hpp"
#include "cedge/sampler/guided_sampler.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace cedge;
using namespace cedge::experiments;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cedge-test-" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json eval_record(const std::string& arm, std::uint64_t seed, long episode, double score) {
  return {{"phase", "evaluate"}, {"env", "pointmass"}, {"shift_type", "gravity"}, {"level", 2.0}, {"arm", arm},
          {"seed", seed}, {"episode", episode}, {"score", score}};
}

}  // namespace

TEST_CASE("config merges onto defaults and rejects unknown keys") {
  ExperimentConfig cfg(json{{"seed", 3}, {"diffusion", {{"hidden", 16}}}});
  CHECK(cfg.seed() == 3);
  CHECK(cfg.denoiser_arch().hidden == 16);
  CHECK(cfg.diffusion_steps() == 20);

  try {
    ExperimentConfig bad(json{{"diffusion", {{"hiden", 16}}}});
    FAIL("accepted unknown key");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("diffusion.hiden") != std::string::npos);
  }
  CHECK_THROWS_AS(ExperimentConfig(json{{"seed", "zero"}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig(json{{"diffusion", {{"kernel", 4}}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig(json{{"env", {{"shift", {{"type", "wind"}}}}}}), ConfigError);
}

TEST_CASE("overrides parse values as json") {
  ExperimentConfig cfg;
  cfg.set("energy.weights.ret=2.5");
  CHECK(cfg.guidance_weights().ret == 2.5);
  cfg.set("env.shift.type=friction");
  CHECK(cfg.shift().type == "friction");
  cfg.set("planner.arms=[\"cedge-planner\"]");
  CHECK(cfg.planner_arms().size() == 1);
  CHECK_THROWS_AS(cfg.set("no-equals-sign"), ConfigError);
  CHECK_THROWS_AS(cfg.set("energy.nope=1"), ConfigError);
}

TEST_CASE("sampler rho schedules") {
  ExperimentConfig cfg;
  auto c = cfg.sampler(20);
  CHECK(c.rho.empty());
  CHECK(c.rho_at(20) == 1.0);

  cfg.set("sampler.rho_schedule=tilted");
  cfg.set("sampler.rho=2");
  c = cfg.sampler(20);
  const auto shape = sampler::tilted_gaussian_rho(diffusion::build_cosine_schedule(20), 1.0);
  REQUIRE(c.rho.size() == 20);
  for (int k = 1; k <= 20; ++k) CHECK(c.rho_at(k) == 2.0 * shape[static_cast<std::size_t>(k - 1)]);
  CHECK(c.rho_at(20) < c.rho_at(1));

  CHECK_THROWS_AS(ExperimentConfig(json{{"sampler", {{"rho_schedule", "cosine"}}}}), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig(json{{"sampler", {{"rho_schedule", "tilted"}, {"rho_v0", 0.0}}}}), ConfigError);
}

TEST_CASE("config hash is stable and content sensitive") {
  ExperimentConfig a, b;
  CHECK(a.hash() == b.hash());
  CHECK(a.hash().size() == 64);
  b.set("seed=1");
  CHECK(a.hash() != b.hash());
  // Key order in the source document does not matter.
  ExperimentConfig c(json::parse(R"({"seed": 1, "data": {"target_size": 10, "source_size": 20}})"));
  ExperimentConfig d(json::parse(R"({"data": {"source_size": 20, "target_size": 10}, "seed": 1})"));
  CHECK(c.hash() == d.hash());
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("config file load applies overrides and reports parse errors") {
  const auto dir = scratch("config-load");
  atomic_write((dir / "c.json").string(), R"({"seed": 4})");
  auto cfg = ExperimentConfig::load((dir / "c.json").string(), {"seed=9"});
  CHECK(cfg.seed() == 9);
  atomic_write((dir / "broken.json").string(), "{\"seed\": ");
  CHECK_THROWS_AS(ExperimentConfig::load((dir / "broken.json").string()), ConfigError);
  CHECK_THROWS(ExperimentConfig::load((dir / "missing.json").string()));
}

TEST_CASE("dump_json writes 17 significant digits and round trips") {
  const double x = 0.1 + 0.2;
  const std::string text = dump_json(json{{"x", x}});
  CHECK(text.find("0.30000000000000004") != std::string::npos);
  CHECK(parse_json(text, "mem").at("x").get<double>() == x);
  CHECK_THROWS_AS(dump_json(json{{"x", std::nan("")}}), FormatError);

  try {
    parse_json("{\"a\": [1, 2,, 3]}", "mem");
    FAIL("parsed corrupt json");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte") != std::string::npos);
  }
}

TEST_CASE("checkpoint round trip is bitwise") {
  const auto dir = scratch("ckpt");
  diffusion::DenoiserArch arch;
  arch.hidden = 12;
  arch.embed_dim = 4;
  diffusion::Denoiser den(arch, 5);
  ParameterStore store = den.params();
  store.at("denoiser.l2.bias")(0, 0) = 1.0 / 3.0;

  Adam adam(AdamConfig{});
  std::map<std::string, Matrix> grads;
  for (const auto& [name, value] : store) grads[name] = Matrix::Constant(value.rows(), value.cols(), 0.01);
  adam.step(store, grads);

  Checkpoint ckpt;
  ckpt.kind = "diffusion";
  ckpt.config_hash = "abc";
  ckpt.seed = 7;
  ckpt.stores["params"] = store;
  ckpt.optimizers["params"] = OptimizerState::capture(adam);
  ckpt.betas = {0.1, 1.0 / 7.0, 0.999};
  ckpt.normalizer = env::Normalizer(Vector::Constant(4, 0.25), Vector::Constant(4, 1.0 / 3.0));
  const std::string path = (dir / "c.json").string();
  save_checkpoint(path, ckpt);

  const Checkpoint back = load_checkpoint(path, "diffusion");
  CHECK(back.kind == "diffusion");
  CHECK(back.config_hash == "abc");
  CHECK(back.seed == 7);
  CHECK(back.betas == ckpt.betas);
  REQUIRE(back.normalizer.has_value());
  CHECK(back.normalizer->std()(2) == 1.0 / 3.0);
  const auto& restored = back.stores.at("params");
  CHECK(restored == store);
  for (const auto& [name, value] : store) CHECK(restored.at(name) == value);
  const auto& opt = back.optimizers.at("params");
  CHECK(opt.steps == 1);
  for (const auto& [name, m] : ckpt.optimizers["params"].m) CHECK(opt.m.at(name) == m);
  for (const auto& [name, v] : ckpt.optimizers["params"].v) CHECK(opt.v.at(name) == v);

  // Saving the reloaded checkpoint reproduces the file byte for byte.
  save_checkpoint((dir / "d.json").string(), back);
  CHECK(slurp(dir / "c.json") == slurp(dir / "d.json"));

  CHECK_THROWS_AS(load_checkpoint(path, "energy"), FormatError);
}

TEST_CASE("checkpoint version gate") {
  const auto dir = scratch("ckpt-version");
  Checkpoint ckpt;
  ckpt.kind = "energy";
  const std::string path = (dir / "c.json").string();
  save_checkpoint(path, ckpt);
  json doc = parse_json(slurp(path), path);
  doc["format_version"] = Checkpoint::kFormatVersion + 1;
  atomic_write(path, dump_json(doc));
  try {
    load_checkpoint(path);
    FAIL("loaded a future version");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  atomic_write(path, "{\"format_version\": 1, \"kind\": ");
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
}

TEST_CASE("metrics log appends one object per line") {
  const auto dir = scratch("metrics");
  const std::string path = (dir / "m" / "log.jsonl").string();
  {
    MetricsLog log(path, "run", 3);
    log.scalar("train", 1, "loss", 0.5);
    log.write({{"phase", "eval"}, {"score", 12.0}});
  }
  {
    MetricsLog log(path, "run", 3);
    log.scalar("train", 2, "loss", 0.25);
  }
  const auto records = read_jsonl(path);
  REQUIRE(records.size() == 3);
  CHECK(records[0].at("metric") == "loss");
  CHECK(records[0].at("run_id") == "run");
  CHECK(records[0].at("seed") == 3);
  CHECK(records[0].contains("wall_time"));
  CHECK(records[2].at("value").get<double>() == 0.25);

  try {
    read_jsonl((dir / "absent.jsonl").string());
    FAIL("read a missing file");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("absent.jsonl") != std::string::npos);
  }
}

TEST_CASE("summarize averages per seed then over seeds") {
  std::vector<json> records;
  // seed 0: episodes 10, 20 -> 15; seed 1: 30; seed 2: 45
  records.push_back(eval_record("a", 0, 0, 10));
  records.push_back(eval_record("a", 0, 1, 20));
  records.push_back(eval_record("a", 1, 0, 30));
  records.push_back(eval_record("a", 2, 0, 99));
  records.push_back(eval_record("a", 2, 0, 45));  // replaces the earlier entry
  records.push_back(eval_record("b", 0, 0, 1));
  const auto rows = summarize(records);
  REQUIRE(rows.size() == 2);
  const auto& a = rows[0];
  CHECK(a.arm == "a");
  CHECK(a.seeds == 3);
  CHECK(a.mean == doctest::Approx(30.0).epsilon(1e-14));
  CHECK(a.std == doctest::Approx(std::sqrt(450.0 / 3.0)).epsilon(1e-14));
  CHECK(rows[1].seeds == 1);
  CHECK(rows[1].std == 0.0);

  const std::string csv = summary_csv(rows);
  CHECK(csv.rfind("env,shift_type,level,arm,mean,std,seeds\n", 0) == 0);
  CHECK(csv.find("pointmass,gravity,2,a,30.000000,12.247449,3") != std::string::npos);

  CHECK_THROWS_AS(summarize({json{{"arm", "a"}}}), FormatError);

  json friction = eval_record("b", 0, 0, 1.0);
  friction["shift_type"] = "friction";
  friction["level"] = 0.1;
  CHECK(summary_csv(summarize({friction})).find("pointmass,friction,0.1,b,") != std::string::npos);
}

TEST_CASE("svg plot is well formed") {
  const std::string svg = svg_line_plot("t", "step", {{"loss", {0, 1, 2}, {3, 2, 1}}});
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("</svg>") != std::string::npos);
  CHECK(svg.find("polyline") != std::string::npos);
}

TEST_CASE("report errors and determinism") {
  const auto empty = scratch("report-empty");
  CHECK_THROWS_AS(write_report(empty.string()), FormatError);
  CHECK_THROWS_AS(write_report((empty / "nope").string()), FormatError);

  const auto run = scratch("report");
  atomic_write((run / "notes.txt").string(), "x");
  try {
    write_report(run.string());
    FAIL("report without metrics");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("evaluation.jsonl") != std::string::npos);
  }

  const fs::path metrics = run / "seed-0" / "shifts" / "gravity-2" / "metrics" / "evaluation.jsonl";
  for (std::uint64_t s = 0; s < 3; ++s) {
    MetricsLog log(metrics.string(), "r", s);
    log.write(eval_record("cedge-planner", s, 0, 10.0 * static_cast<double>(s)));
  }
  const auto first = write_report(run.string());
  REQUIRE(first.rows.size() == 1);
  CHECK(first.rows[0].seeds == 3);
  CHECK(first.rows[0].mean == doctest::Approx(10.0));
  CHECK(!first.plots.empty());
  for (const auto& p : first.plots) CHECK(fs::exists(p));
  const std::string csv1 = slurp(first.summary_path);
  write_report(run.string());
  CHECK(slurp(first.summary_path) == csv1);
}

TEST_CASE("run_subcommand exit codes and dependencies") {
  const auto dir = scratch("commands");
  const std::string cfg_path = (dir / "tiny.json").string();
  atomic_write(cfg_path, dump_json(json{
                             {"output_dir", (dir / "run").string()},
                             {"data", {{"source_size", 400}, {"target_size", 100}}},
                             {"diffusion", {{"hidden", 16}, {"embed_dim", 4}, {"train_steps", 5}, {"batch", 8}}},
                             {"energy", {{"hidden", 8}, {"train_steps", 5}, {"batch", 8}, {"return_channels", 4}}},
                         }));
  std::ostringstream out, err;
  CommandOptions opts;
  opts.config_path = cfg_path;

  CHECK(run_subcommand("bogus", opts, out, err) == 2);
  CHECK(err.str().find("collect-data") != std::string::npos);

  err.str("");
  CHECK(run_subcommand("train-energy", opts, out, err) == 1);
  CHECK(err.str().find("collect-data") != std::string::npos);

  CHECK(run_subcommand("collect-data", opts, out, err) == 0);
  const RunPaths paths(resolve_config(opts));
  CHECK(fs::exists(paths.source_data()));
  CHECK(fs::exists(sidecar_path(paths.source_data())));
  const json meta = parse_json(slurp(sidecar_path(paths.source_data())), "meta");
  CHECK(meta.at("config_hash") == resolve_config(opts).hash());

  // Energies need only the datasets.
  CHECK(run_subcommand("train-energy", opts, out, err) == 0);
  CHECK(fs::exists(paths.energy()));
  CHECK(!fs::exists(paths.diffusion()));

  err.str("");
  CHECK(run_subcommand("plan", opts, out, err) == 1);
  CHECK(err.str().find("missing") != std::string::npos);
  CHECK_THROWS_AS(execute_subcommand("plan", resolve_config(opts), out), MissingArtifact);

  err.str("");
  opts.overrides = {"diffusion.kernel=4"};
  CHECK(run_subcommand("collect-data", opts, out, err) == 1);
  CHECK(err.str().find("diffusion.kernel") != std::string::npos);
}

TEST_CASE("collect-data is byte reproducible") {
  const auto dir = scratch("repro");
  CommandOptions opts;
  atomic_write((dir / "c.json").string(),
               dump_json(json{{"output_dir", (dir / "run").string()},
                              {"data", {{"source_size", 300}, {"target_size", 50}}}}));
  opts.config_path = (dir / "c.json").string();
  std::ostringstream out, err;
  REQUIRE(run_subcommand("collect-data", opts, out, err) == 0);
  const RunPaths paths(resolve_config(opts));
  const std::string a = slurp(paths.source_data()), b = slurp(paths.target_data());
  REQUIRE(run_subcommand("collect-data", opts, out, err) == 0);
  CHECK(slurp(paths.source_data()) == a);
  CHECK(slurp(paths.target_data()) == b);
  opts.seed = 1;
  REQUIRE(run_subcommand("collect-data", opts, out, err) == 0);
  CHECK(slurp(RunPaths(resolve_config(opts)).source_data()) != a);
}
