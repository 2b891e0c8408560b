#include <doctest.h>

#include <set>
#include <sstream>

#include "helpers.hpp"
#include "hierprobe/cli.hpp"
#include "hierprobe/config.hpp"

using namespace hierprobe;
using hierprobe::test::code_of;
using hierprobe::test::TempDir;

namespace {

const Json kPlanted = Json::parse(R"({"version": 1, "kind": "planted_options", "seed": 4, "num_layers": 8,
                                      "per_layer_dim": 4, "frozen_count": 1, "constant_count": 1})");

Json base_config() {
  return Json::parse(R"({"version": 1, "seed": 3, "generator": {"planted": "planted.json"},
                         "probe": {"num_samples": 2000, "extreme_count": 200},
                         "rescore": {"num_samples": 200}, "output_dir": "out"})");
}

struct Run {
  int rc;
  std::string out, err;
};

// A scratch directory holding planted.json and run.json.
class Workspace {
public:
  explicit Workspace(const std::string& name, const Json& config = base_config()) : dir_(name) {
    write_json_file(dir_ / "planted.json", kPlanted);
    set_config(config);
  }
  void set_config(const Json& config) { write_json_file(dir_ / "run.json", config); }
  std::filesystem::path path(const std::string& rel) const { return dir_ / rel; }

  Run run(std::vector<std::string> args) const {
    std::vector<std::string> full{"hierprobe", "--config", (dir_ / "run.json").string()};
    full.insert(full.end(), args.begin(), args.end());
    std::ostringstream out, err;
    const int rc = run_cli(full, out, err);
    return {rc, out.str(), err.str()};
  }

private:
  TempDir dir_;
};

std::map<std::string, std::string> snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), root).string()] = read_text_file(e.path());
  }
  return files;
}

CsvTable csv(const std::filesystem::path& p) { return parse_csv(read_text_file(p)); }

}  // namespace

TEST_CASE("exit codes by error class") {
  CHECK(exit_code_for(ErrorCode::Config) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::Io) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::UnknownConcept) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::ShapeMismatch) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::TooFewSamples) == kExitConfig);
  CHECK(exit_code_for(ErrorCode::WorkerUnavailable) == kExitWorker);
  CHECK(exit_code_for(ErrorCode::WorkerError) == kExitWorker);
  CHECK(exit_code_for(ErrorCode::ProtocolViolation) == kExitWorker);
  CHECK(exit_code_for(ErrorCode::ScoreOutOfRange) == kExitWorker);
  CHECK(exit_code_for(ErrorCode::DegenerateData) == kExitFailure);
  CHECK(exit_code_for(ErrorCode::EmptyBatch) == kExitFailure);
}

TEST_CASE("parse_run_config") {
  const std::filesystem::path base = "/data/runs";

  SUBCASE("defaults and path resolution") {
    const auto cfg = parse_run_config(Json::parse(R"({"version": 1, "generator": {"planted": "p.json"}})"), base);
    CHECK(cfg.generator.planted == std::filesystem::path("/data/runs/p.json"));
    CHECK(cfg.output_dir == std::filesystem::path("/data/runs/out"));
    CHECK(cfg.boundary_dir == std::filesystem::path("/data/runs/out/boundaries"));
    CHECK(cfg.probe.num_samples == 10000);
    CHECK(cfg.probe.extreme_count == 2000);
    CHECK(cfg.rescore.num_samples == 1000);
    CHECK(cfg.rescore.step == 2.0);
    CHECK(cfg.manipulate.mode == "independent");
    CHECK(cfg.manipulate.steps == std::vector<double>{-2.0, 0.0, 2.0});
  }
  SUBCASE("sub-seeds derive from the top-level seed") {
    const auto a = parse_run_config(Json::parse(R"({"version": 1, "seed": 1, "generator": {"planted": "p"}})"), base);
    const auto b = parse_run_config(Json::parse(R"({"version": 1, "seed": 2, "generator": {"planted": "p"}})"), base);
    CHECK(a.probe.seed != a.rescore.seed);
    CHECK(a.probe.seed != b.probe.seed);
    CHECK(a.rescore.seed != b.rescore.seed);
    const auto explicit_seed = parse_run_config(
        Json::parse(R"({"version": 1, "seed": 1, "generator": {"planted": "p"}, "rescore": {"seed": 99}})"), base);
    CHECK(explicit_seed.rescore.seed == 99);
    CHECK(explicit_seed.probe.seed == a.probe.seed);
    const auto overridden = parse_run_config(
        Json::parse(R"({"version": 1, "seed": 1, "generator": {"planted": "p"}, "rescore": {"seed": 99}})"), base, 5);
    CHECK(overridden.seed == 5);
    CHECK(overridden.rescore.seed != 99);
  }
  SUBCASE("worker generators run in the config directory") {
    const auto cfg = parse_run_config(
        Json::parse(R"({"version": 1, "generator": {"worker": ["./w", "--x"], "timeout_seconds": 2.5, "sessions": 3}})"),
        base);
    CHECK(cfg.generator.worker == std::vector<std::string>{"./w", "--x"});
    CHECK(cfg.generator.worker_dir == base);
    CHECK(cfg.generator.timeout == std::chrono::milliseconds(2500));
    CHECK(cfg.generator.sessions == 3);
  }
  SUBCASE("errors") {
    const auto bad = [&](const char* text) {
      return code_of([&] { parse_run_config(Json::parse(text), base); });
    };
    CHECK(bad(R"({"version": 2, "generator": {"planted": "p"}})") == ErrorCode::Config);
    CHECK(bad(R"({"version": 1})") == ErrorCode::Config);
    CHECK(bad(R"({"version": 1, "generator": {"planted": "p", "worker": ["w"]}})") == ErrorCode::Config);
    CHECK(bad(R"({"version": 1, "generator": {"planted": "p"}, "colour": 1})") == ErrorCode::Config);
    CHECK(bad(R"({"version": 1, "generator": {"planted": "p"}, "probe": {"samples": 1}})") == ErrorCode::Config);
    CHECK(bad(R"({"version": 1, "generator": {"planted": "p"}, "probe": {"num_samples": "many"}})") ==
          ErrorCode::Config);
    CHECK(bad(R"({"version": 1, "generator": {"planted": "p"}, "manipulate": {"mode": "warp"}})") ==
          ErrorCode::Config);
    CHECK(code_of([] { load_run_config("/nonexistent/run.json"); }) == ErrorCode::Config);
  }
}

TEST_CASE("cli usage errors") {
  Workspace ws("cli_usage");
  CHECK(ws.run({}).rc == kExitConfig);
  CHECK(ws.run({"fly"}).rc == kExitConfig);
  CHECK(ws.run({"--workers", "0", "probe"}).rc == kExitConfig);
  std::ostringstream out, err;
  CHECK(run_cli({"hierprobe", "--help"}, out, err) == kExitOk);
  CHECK(out.str().find("probe") != std::string::npos);
  CHECK(run_cli({"hierprobe", "probe"}, out, err) == kExitConfig);
  CHECK(run_cli({"hierprobe", "--config", "/nonexistent/run.json", "probe"}, out, err) == kExitConfig);

  auto cfg = base_config();
  cfg["generator"]["planted"] = "missing.json";
  ws.set_config(cfg);
  const auto missing = ws.run({"probe"});
  CHECK(missing.rc == kExitConfig);
  CHECK(missing.err.find("missing.json") != std::string::npos);

  // Nothing probed yet.
  ws.set_config(base_config());
  CHECK(ws.run({"verify"}).rc == kExitConfig);
  std::filesystem::create_directories(ws.path("out/boundaries"));
  CHECK(ws.run({"verify"}).rc == kExitConfig);
}

TEST_CASE("cli probe, verify and localize") {
  Workspace ws("cli_pipeline");
  const auto probe = ws.run({"probe"});
  REQUIRE(probe.rc == kExitOk);
  std::size_t boundaries = 0;
  for (const auto& e : std::filesystem::directory_iterator(ws.path("out/boundaries"))) {
    CHECK(e.path().extension() == ".json");
    ++boundaries;
  }
  CHECK(boundaries == 10);
  CHECK(csv(ws.path("out/probe_summary.csv")).rows.size() == 10);

  const auto verify = ws.run({"verify"});
  REQUIRE(verify.rc == kExitOk);
  CHECK(verify.out.find("constant_0  0.0\n") != std::string::npos);
  const auto ranking = read_text_file(ws.path("out/ranking.txt"));
  std::vector<std::string> order;
  std::istringstream lines(ranking);
  for (std::string l; std::getline(lines, l);) order.push_back(l);
  REQUIRE(order.size() == 10);
  // The two concepts no shift can move share the bottom.
  CHECK(std::set<std::string>{order[8], order[9]} == std::set<std::string>{"constant_0", "frozen_0"});
  const auto rescore = csv(ws.path("out/rescore.csv"));
  for (const auto& row : rescore.rows) {
    const double ds = parse_double(row[rescore.column("delta_s")]);
    if (row[0] == "frozen_0" || row[0] == "constant_0") {
      CHECK(ds == 0.0);
    } else {
      CHECK(ds > 0.2);
    }
  }

  REQUIRE(ws.run({"localize"}).rc == kExitOk);
  const auto loc = csv(ws.path("out/localize.csv"));
  const auto truth = csv(ws.path("out/ground_truth.csv"));
  std::map<std::string, std::string> stage_of;
  for (const auto& row : truth.rows) stage_of[row[0]] = row[truth.column("stage")];
  for (const auto& row : loc.rows) {
    const auto& expected = stage_of.at(row[0]);
    CHECK(row[loc.column("argmax_stage")] == (expected.empty() ? "none" : expected));
  }
  CHECK(std::filesystem::exists(ws.path("out/localize.svg")));

  SUBCASE("a rerun is byte-identical") {
    const auto first = snapshot(ws.path("out"));
    REQUIRE(ws.run({"probe"}).rc == kExitOk);
    REQUIRE(ws.run({"verify"}).rc == kExitOk);
    REQUIRE(ws.run({"localize"}).rc == kExitOk);
    CHECK(snapshot(ws.path("out")) == first);
  }
  SUBCASE("thread count does not change outputs") {
    const auto first = snapshot(ws.path("out"));
    REQUIRE(ws.run({"--workers", "3", "probe"}).rc == kExitOk);
    REQUIRE(ws.run({"--workers", "2", "verify"}).rc == kExitOk);
    REQUIRE(ws.run({"--workers", "2", "localize"}).rc == kExitOk);
    CHECK(snapshot(ws.path("out")) == first);
  }
  SUBCASE("a single-stage map gives all mass to that stage") {
    auto cfg = base_config();
    cfg["stage_map"] = "single";
    ws.set_config(cfg);
    REQUIRE(ws.run({"localize"}).rc == kExitOk);
    const auto single = csv(ws.path("out/localize.csv"));
    for (const auto& row : single.rows) {
      const bool moved = row[0] != "frozen_0" && row[0] != "constant_0";
      CHECK(parse_double(row[single.column("share:all")]) == (moved ? 1.0 : 0.0));
    }
  }
  SUBCASE("a different seed and --out") {
    REQUIRE(ws.run({"--seed", "11", "--out", ws.path("other").string(), "probe"}).rc == kExitOk);
    CHECK(std::filesystem::exists(ws.path("other/boundaries/layout_0.json")));
    CHECK(read_text_file(ws.path("other/boundaries/layout_0.json")) !=
          read_text_file(ws.path("out/boundaries/layout_0.json")));
  }
  SUBCASE("disentangle and report") {
    REQUIRE(ws.run({"disentangle"}).rc == kExitOk);
    const auto m = read_json_file(ws.path("out/disentangle.json"));
    CHECK(m.contains("matrix"));
    REQUIRE(ws.run({"report"}).rc == kExitOk);
    const auto report = read_text_file(ws.path("out/report.md"));
    CHECK(report.find("layout_0") != std::string::npos);
  }
}

TEST_CASE("cli manipulate") {
  Workspace ws("cli_manipulate");
  REQUIRE(ws.run({"probe"}).rc == kExitOk);
  const auto outputs = [&](const std::string& mode) {
    return read_json_file(ws.path("out/manipulate/" + mode + "/manifest.json")).at("outputs");
  };

  SUBCASE("independent") {
    auto cfg = base_config();
    cfg["manipulate"] = {{"mode", "independent"}, {"concept", "layout_0"}};
    ws.set_config(cfg);
    REQUIRE(ws.run({"manipulate"}).rc == kExitOk);
    std::size_t steps = 0;
    for (const auto& o : outputs("independent")) {
      if (!o.contains("base")) ++steps;
      CHECK(std::filesystem::exists(ws.path("out/manipulate/independent/" + o.at("name").get<std::string>() + ".png")));
    }
    CHECK(steps == 3);
  }
  SUBCASE("joint") {
    auto cfg = base_config();
    cfg["manipulate"] = {{"mode", "joint"}, {"concept", "object_0"}, {"second_concept", "color_0"}};
    ws.set_config(cfg);
    REQUIRE(ws.run({"manipulate"}).rc == kExitOk);
    std::size_t cells = 0;
    for (const auto& o : outputs("joint")) cells += o.contains("row") ? 1 : 0;
    CHECK(cells == 9);
    CHECK(std::filesystem::exists(ws.path("out/manipulate/joint/sample0_grid.png")));
  }
  SUBCASE("jitter") {
    auto cfg = base_config();
    cfg["manipulate"] = {{"mode", "jitter"}, {"concept", "color_1"}, {"count", 5}};
    ws.set_config(cfg);
    REQUIRE(ws.run({"manipulate"}).rc == kExitOk);
    std::set<std::string> codes;
    std::size_t n = 0;
    for (const auto& o : outputs("jitter")) {
      if (o.contains("base")) continue;
      ++n;
      codes.insert(read_text_file(ws.path("out/manipulate/jitter/" + o.at("name").get<std::string>() + ".json")));
    }
    CHECK(n == 5);
    CHECK(codes.size() == 5);
  }
  SUBCASE("errors") {
    auto cfg = base_config();
    cfg["manipulate"] = {{"mode", "independent"}};
    ws.set_config(cfg);
    CHECK(ws.run({"manipulate"}).rc == kExitConfig);
    cfg["manipulate"] = {{"mode", "independent"}, {"concept", "unicorn"}};
    ws.set_config(cfg);
    CHECK(ws.run({"manipulate"}).rc == kExitConfig);
    cfg["manipulate"] = {{"mode", "joint"}, {"concept", "object_0"}};
    ws.set_config(cfg);
    CHECK(ws.run({"manipulate"}).rc == kExitConfig);
  }
}

TEST_CASE("cli transition") {
  Workspace ws("cli_transition");
  REQUIRE(ws.run({"probe"}).rc == kExitOk);
  auto cfg = base_config();
  cfg["transition"] = {{"concept", "layout_0"}, {"count", 2}};
  ws.set_config(cfg);
  REQUIRE(ws.run({"transition"}).rc == kExitOk);
  const auto m = transition_from_json(read_json_file(ws.path("out/transition.json")));
  CHECK(m.total() == 2u * 64u * 48u);
  CHECK(m.off_diagonal() > 0);

  // Explicit masks.
  const std::map<std::uint32_t, std::string> names{{0, "floor"}, {1, "sofa"}, {2, "bed"}};
  write_mask_png(ws.path("before.png"), SegmentationMask(2, 1, {1, 0}, names));
  write_mask_png(ws.path("after.png"), SegmentationMask(2, 1, {2, 0}, names));
  cfg["transition"] = {{"before", "before.png"}, {"after", "after.png"}};
  ws.set_config(cfg);
  REQUIRE(ws.run({"transition"}).rc == kExitOk);
  const auto explicit_m = transition_from_json(read_json_file(ws.path("out/transition.json")));
  CHECK(explicit_m.counts.at({1, 2}) == 1);
  CHECK(explicit_m.counts.at({0, 0}) == 1);
  write_mask_png(ws.path("after.png"), SegmentationMask(1, 2, {2, 0}, names));
  CHECK(ws.run({"transition"}).rc == kExitConfig);
}

TEST_CASE("cli with a worker generator") {
  Workspace ws("cli_worker");
  auto cfg = base_config();
  cfg["generator"] = {{"worker", {HIERPROBE_PLANTED_WORKER, "--planted", "planted.json"}}, {"timeout_seconds", 20}};
  ws.set_config(cfg);
  REQUIRE(ws.run({"--workers", "2", "probe"}).rc == kExitOk);
  REQUIRE(ws.run({"verify"}).rc == kExitOk);

  // Same numbers as the in-process planted generator: the worker scores
  // layer codes only, so compare on a concept without stochastic input.
  Workspace local("cli_worker_local");
  REQUIRE(local.run({"probe"}).rc == kExitOk);
  REQUIRE(local.run({"verify"}).rc == kExitOk);
  CHECK(read_text_file(ws.path("out/boundaries/object_1.json")) ==
        read_text_file(local.path("out/boundaries/object_1.json")));

  cfg["generator"]["worker"] = {HIERPROBE_PLANTED_WORKER, "--planted", "planted.json", "--exit-on", "2"};
  ws.set_config(cfg);
  const auto dead = ws.run({"probe"});
  CHECK(dead.rc == kExitWorker);
  CHECK(dead.err.find("hierprobe: [error]") != std::string::npos);
}
