#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include <json.hpp>

#include "hetqfl/config.hpp"
#include "hetqfl/experiment.hpp"
#include "hetqfl/qnn.hpp"

using namespace hetqfl;
using namespace hetqfl::cli;
using nlohmann::json;

namespace {
namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Small two-client run that finishes in a couple of seconds.
std::string tiny_config(const std::string& out_dir,
                        const std::string& algorithms) {
  return std::string(R"({
    "dataset": {"kind": "blobs", "n": 48, "classes": 2, "dim": 4, "spread": 0.2},
    "clients": {"count": 2, "classes_per_client": 1, "qubits": 2, "layers": 1},
    "training": {"optimizer": "sgd", "eta": 0.05, "rounds": 2,
                 "local_steps": 1, "batch_size": 4},
    "seeds": [1],
    "algorithms": )") +
         algorithms + R"(,
    "output": {"dir": ")" + out_dir + R"(", "quiet": true}
  })";
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(bool(in));
  std::vector<json> rows;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(json::parse(line));
  return rows;
}
}  // namespace

TEST_CASE("an empty config resolves to the documented defaults") {
  auto config = parse_config_text(R"({"dataset": {"kind": "blobs"}})");
  CHECK(config.spec.num_clients == 8);
  CHECK(config.spec.classes_per_client == 2);
  CHECK(config.spec.clients.size() == 8);
  CHECK(config.spec.clients[3].num_qubits == 4);
  CHECK(config.spec.clients[3].num_layers == 1);
  CHECK_FALSE(config.spec.clients[3].noise.enabled);
  CHECK(config.spec.hyper.optimizer == fed::OptimizerKind::adam);
  CHECK(config.spec.hyper.rounds == 50);
  CHECK(config.spec.hyper.lambda == 0.1);
  CHECK(config.spec.hyper.tau.mode == fed::TauPolicy::Mode::adaptive);
  CHECK(config.spec.seeds == std::vector<std::uint64_t>{1, 2, 3});
  CHECK(config.algorithms == std::vector<fed::Algorithm>{fed::Algorithm::spqfl});
  CHECK(config.output_dir == "out");
  CHECK_FALSE(config.spec.hyper.strategy_explicit);
}

TEST_CASE("unknown keys are rejected with their path") {
  try {
    parse_config_text(R"({"dataset": {"kind": "blobs", "bogus": 1}})");
    FAIL("expected a config error");
  } catch (const config_error& e) {
    CHECK(std::string(e.what()).find("bogus") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text(R"({"surprise": 1})"), config_error);
  CHECK_THROWS_AS(parse_config_text("not json at all"), config_error);
  CHECK_THROWS_AS(parse_config_text(R"(["array"])"), config_error);
}

TEST_CASE("per-client fields accept scalars, arrays, and round-robin cycles") {
  auto scalar = parse_config_text(
      R"({"clients": {"count": 3, "classes_per_client": 2, "qubits": 3}})");
  for (const auto& c : scalar.spec.clients) CHECK(c.num_qubits == 3);

  auto array = parse_config_text(
      R"({"clients": {"count": 3, "classes_per_client": 2,
          "qubits": [2, 3, 4]}})");
  CHECK(array.spec.clients[0].num_qubits == 2);
  CHECK(array.spec.clients[2].num_qubits == 4);

  auto cycle = parse_config_text(
      R"({"clients": {"count": 5, "classes_per_client": 2,
          "noise": {"round_robin": [{"enabled": false},
                                    {"enabled": true, "gamma_ad": 0.05}]}}})");
  CHECK_FALSE(cycle.spec.clients[0].noise.enabled);
  CHECK(cycle.spec.clients[1].noise.enabled);
  CHECK(cycle.spec.clients[1].noise.gamma_ad == 0.05);
  CHECK_FALSE(cycle.spec.clients[4].noise.enabled);

  CHECK_THROWS_AS(
      parse_config_text(
          R"({"clients": {"count": 3, "qubits": [2, 3]}})"),
      config_error);
  CHECK_THROWS_AS(
      parse_config_text(R"({"clients": {"count": 2, "qubits": 0}})"),
      config_error);
}

TEST_CASE("noise objects default to enabled and are validated") {
  auto config = parse_config_text(
      R"({"clients": {"count": 2, "classes_per_client": 2,
          "noise": {"gamma_ad": 0.1}}})");
  CHECK(config.spec.clients[0].noise.enabled);

  CHECK_THROWS_AS(
      parse_config_text(
          R"({"clients": {"count": 2, "noise": {"t1_us": 10, "t2_us": 30}}})"),
      config_error);
}

TEST_CASE("algorithm and seed lists reject malformed input") {
  CHECK_THROWS_AS(parse_config_text(R"({"algorithms": ["spqfl", "spqfl"]})"),
                  config_error);
  CHECK_THROWS_AS(parse_config_text(R"({"algorithms": ["warp"]})"),
                  config_error);
  CHECK_THROWS_AS(parse_config_text(R"({"algorithms": []})"), config_error);
  CHECK_THROWS_AS(parse_config_text(R"({"seeds": []})"), config_error);
  CHECK_THROWS_AS(parse_config_text(R"({"seeds": ["one"]})"), config_error);

  auto single = parse_config_text(R"({"algorithms": "pqfl", "seeds": 7})");
  CHECK(single.algorithms ==
        std::vector<fed::Algorithm>{fed::Algorithm::pqfl});
  CHECK(single.spec.seeds == std::vector<std::uint64_t>{7});
}

TEST_CASE("tau accepts the adaptive, disabled, and fixed spellings") {
  auto adaptive = parse_config_text(R"({"aggregation": {"tau": "adaptive"}})");
  CHECK(adaptive.spec.hyper.tau.mode == fed::TauPolicy::Mode::adaptive);
  auto disabled = parse_config_text(R"({"aggregation": {"tau": "disabled"}})");
  CHECK(disabled.spec.hyper.tau.mode == fed::TauPolicy::Mode::disabled);
  auto fixed = parse_config_text(R"({"aggregation": {"tau": 0.35}})");
  CHECK(fixed.spec.hyper.tau.mode == fed::TauPolicy::Mode::fixed);
  CHECK(fixed.spec.hyper.tau.fixed_value == 0.35);
  CHECK_THROWS_AS(parse_config_text(R"({"aggregation": {"tau": "maybe"}})"),
                  config_error);

  auto strategy = parse_config_text(
      R"({"aggregation": {"strategy": "noise_aware"}})");
  CHECK(strategy.spec.hyper.strategy == fed::Strategy::noise_aware);
  CHECK(strategy.spec.hyper.strategy_explicit);
}

TEST_CASE("the effective config echo reparses to the same configuration") {
  auto config = parse_config_text(
      R"({
        "dataset": {"kind": "blobs", "n": 100, "classes": 2, "dim": 8},
        "clients": {"count": 3, "classes_per_client": 1,
                    "qubits": [3, 2, 3],
                    "noise": {"round_robin": [{"enabled": false},
                                              {"gamma_ad": 0.05}]}},
        "training": {"optimizer": "sgd", "eta": 0.2, "rounds": 4},
        "aggregation": {"strategy": "fairness", "tau": 0.4},
        "algorithms": ["spqfl", "pqfl"],
        "seeds": [5, 6],
        "output": {"dir": "echo_out", "save_models": true}
      })");
  const auto echoed = effective_config_text(config);
  auto reparsed = parse_config_text(echoed);
  CHECK(reparsed.spec == config.spec);
  CHECK(reparsed.algorithms == config.algorithms);
  CHECK(reparsed.output_dir == config.output_dir);
  CHECK(reparsed.save_models == config.save_models);
  // The echo is a fixed point: echoing the reparse changes nothing.
  CHECK(effective_config_text(reparsed) == echoed);
}

TEST_CASE("missing config files are a configuration error") {
  CHECK_THROWS_AS(parse_config("/nonexistent/hetqfl.json"), config_error);
}

TEST_CASE("run writes records, summaries, and a comparison") {
  const auto base = fs::temp_directory_path() / "hetqfl_cli_test";
  fs::remove_all(base);
  const auto out = (base / "runs").string();

  auto config =
      parse_config_text(tiny_config(out, R"(["spqfl", "qfl_fedavg"])"));
  config.save_models = true;
  REQUIRE(run(config) == 0);

  CHECK(fs::exists(fs::path(out) / "config_effective.json"));
  CHECK(fs::exists(fs::path(out) / "comparison.csv"));
  CHECK(fs::exists(fs::path(out) / "comparison_final.csv"));

  for (const std::string algo : {"spqfl", "qfl_fedavg"}) {
    const auto dir = fs::path(out) / algo;
    CHECK(fs::exists(dir / "summary.csv"));
    CHECK(fs::exists(dir / "model_seed1.bin"));
    CHECK_NOTHROW(qnn::load_model((dir / "model_seed1.bin").string()));

    auto rows = read_jsonl(dir / "records_seed1.jsonl");
    // Two clients plus one global row, for each of two rounds.
    REQUIRE(rows.size() == 6);
    for (const auto& row : rows) {
      CHECK(row.contains("algo"));
      CHECK(row.contains("round"));
      CHECK(row.contains("seed"));
      CHECK(row["algo"] == algo);
    }
    CHECK(rows[0]["client_id"] == 0);
    CHECK(rows[0]["test_acc"].is_null());
    CHECK(rows[2]["client_id"].is_null());
    CHECK(rows[2]["test_acc"].is_number());
    CHECK(rows[2]["num_participants"].is_number());
    if (algo == "spqfl")
      CHECK(rows[2]["tau"].is_number());
    else
      CHECK(rows[2]["tau"].is_null());

    std::istringstream summary(read_file(dir / "summary.csv"));
    std::string line;
    REQUIRE(std::getline(summary, line));
    CHECK(line.find("test_acc") != std::string::npos);
    int data_rows = 0;
    while (std::getline(summary, line))
      if (!line.empty()) ++data_rows;
    CHECK(data_rows == 2);  // one seed, two rounds
  }

  // The comparison table covers both runs over the common rounds.
  const auto comparison = read_file(fs::path(out) / "comparison.csv");
  CHECK(comparison.find("spqfl_acc_mean") != std::string::npos);
  CHECK(comparison.find("qfl_fedavg_acc_mean") != std::string::npos);

  fs::remove_all(base);
}

TEST_CASE("identical configurations produce byte-identical records") {
  const auto base = fs::temp_directory_path() / "hetqfl_cli_det";
  fs::remove_all(base);
  const auto out_a = (base / "a").string();
  const auto out_b = (base / "b").string();

  REQUIRE(run(parse_config_text(tiny_config(out_a, R"(["spqfl"])"))) == 0);
  REQUIRE(run(parse_config_text(tiny_config(out_b, R"(["spqfl"])"))) == 0);

  CHECK(read_file(fs::path(out_a) / "spqfl" / "records_seed1.jsonl") ==
        read_file(fs::path(out_b) / "spqfl" / "records_seed1.jsonl"));
  CHECK(read_file(fs::path(out_a) / "spqfl" / "summary.csv") ==
        read_file(fs::path(out_b) / "spqfl" / "summary.csv"));
  fs::remove_all(base);
}

TEST_CASE("compare joins finished runs and rejects bad input") {
  const auto base = fs::temp_directory_path() / "hetqfl_cli_cmp";
  fs::remove_all(base);
  const auto out = (base / "runs").string();
  REQUIRE(run(parse_config_text(
              tiny_config(out, R"(["spqfl", "pqfl"])"))) == 0);

  const auto cmp = (base / "cmp.csv").string();
  CHECK(compare({out + "/spqfl", out + "/pqfl"}, cmp) == 0);
  CHECK(fs::exists(cmp));
  CHECK(fs::exists(base / "cmp_final.csv"));
  const auto final_table = read_file(base / "cmp_final.csv");
  CHECK(final_table.find("delta_acc_pp_vs_spqfl") != std::string::npos);

  // Comparing a run against itself is allowed and yields a zero delta.
  CHECK(compare({out + "/spqfl", out + "/spqfl"}, cmp) == 0);

  CHECK(compare({out + "/spqfl"}, cmp) == 1);
  CHECK(compare({out + "/spqfl", out + "/missing"}, cmp) == 1);
  fs::remove_all(base);
}

TEST_CASE("run maps unexpected failures to exit code 2") {
  const auto base = fs::temp_directory_path() / "hetqfl_cli_fail";
  fs::remove_all(base);
  fs::create_directories(base);
  // A regular file where the output directory should go.
  std::ofstream(base / "blocker").put('x');
  auto config = parse_config_text(
      tiny_config((base / "blocker" / "out").string(), R"(["spqfl"])"));
  CHECK(run(config) == 2);
  fs::remove_all(base);
}
