#include "hetqfl/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace hetqfl::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Shortest round-trip decimal form, identical across runs.
std::string fmt(double value) { return json(value).dump(); }

json client_row(const std::string& algo, std::uint64_t seed,
                const fed::RoundRecord& record,
                const fed::ClientRoundStats& c) {
  return json{{"algo", algo},
              {"client_id", c.client_id},
              {"round", record.round},
              {"seed", seed},
              {"train_loss", c.train_loss},
              {"val_acc", c.val_acc},
              {"participated", c.participated},
              {"weight", c.weight},
              {"test_acc", nullptr},
              {"test_loss", nullptr},
              {"tau", nullptr},
              {"num_participants", nullptr}};
}

json global_row(const std::string& algo, std::uint64_t seed,
                const fed::RoundRecord& record) {
  return json{{"algo", algo},
              {"client_id", nullptr},
              {"round", record.round},
              {"seed", seed},
              {"train_loss", nullptr},
              {"val_acc", nullptr},
              {"participated", nullptr},
              {"weight", nullptr},
              {"test_acc", record.test_acc},
              {"test_loss", record.test_loss},
              {"tau", record.tau >= 0.0 ? json(record.tau) : json(nullptr)},
              {"num_participants", record.num_participants}};
}

constexpr const char* kSummaryHeader =
    "algo,seed,round,test_acc,test_loss,mean_train_loss,mean_val_acc,"
    "num_participants,tau\n";

std::string summary_line(const std::string& algo, std::uint64_t seed,
                         const fed::RoundRecord& record) {
  double loss_sum = 0.0, acc_sum = 0.0;
  for (const auto& c : record.clients) {
    loss_sum += c.train_loss;
    acc_sum += c.val_acc;
  }
  const double n = static_cast<double>(record.clients.size());
  std::ostringstream line;
  line << algo << ',' << seed << ',' << record.round << ','
       << fmt(record.test_acc) << ',' << fmt(record.test_loss) << ','
       << fmt(loss_sum / n) << ',' << fmt(acc_sum / n) << ','
       << record.num_participants << ','
       << (record.tau >= 0.0 ? fmt(record.tau) : "") << '\n';
  return line.str();
}

void run_impl(const ExperimentConfig& config) {
  config.spec.validate();
  const fs::path out_dir(config.output_dir);
  fs::create_directories(out_dir);
  {
    std::ofstream cfg(out_dir / "config_effective.json");
    if (!cfg) throw std::runtime_error("cannot write config_effective.json");
    cfg << effective_config_text(config);
  }

  std::vector<std::string> algo_dirs;
  for (const auto algorithm : config.algorithms) {
    const std::string name = fed::algorithm_name(algorithm);
    const fs::path algo_dir = out_dir / name;
    fs::create_directories(algo_dir);
    algo_dirs.push_back(algo_dir.string());

    std::ofstream summary(algo_dir / "summary.csv");
    if (!summary)
      throw std::runtime_error("cannot write summary.csv for " + name);
    summary << kSummaryHeader;

    std::ofstream records;
    const int total_rounds = config.spec.hyper.rounds;
    auto on_round = [&](std::uint64_t seed, const fed::RoundRecord& record) {
      if (record.round == 1) {
        records.close();
        records.clear();
        records.open(algo_dir /
                     ("records_seed" + std::to_string(seed) + ".jsonl"));
        if (!records)
          throw std::runtime_error("cannot write records for " + name);
      }
      for (const auto& c : record.clients)
        records << client_row(name, seed, record, c).dump() << '\n';
      records << global_row(name, seed, record).dump() << '\n';
      summary << summary_line(name, seed, record);
      if (!config.quiet) {
        std::cout << '[' << name << " seed " << seed << "] round "
                  << record.round << '/' << total_rounds
                  << " test_acc=" << fmt(record.test_acc)
                  << " participants=" << record.num_participants << " ("
                  << fmt(record.wall_seconds) << "s)\n";
      }
    };

    const auto result =
        fed::run_experiment(config.spec, algorithm, on_round);

    if (config.save_models) {
      for (const auto& seed_run : result.runs)
        qnn::save_model(seed_run.final_global,
                        (algo_dir / ("model_seed" +
                                     std::to_string(seed_run.seed) + ".bin"))
                            .string());
    }
    if (!config.quiet) {
      std::cout << '[' << name
                << "] final test acc mean=" << fmt(result.mean_final_test_acc)
                << " std=" << fmt(result.std_final_test_acc) << '\n';
    }
  }

  if (algo_dirs.size() >= 2) {
    const int code = compare(algo_dirs, (out_dir / "comparison.csv").string());
    if (code != 0)
      throw std::runtime_error("comparison of fresh runs failed");
  }
}

struct RunData {
  std::string name;
  std::map<int, std::vector<double>> acc;   // round -> per-seed values
  std::map<int, std::vector<double>> loss;
  int max_round = 0;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

RunData load_run(const std::string& dir) {
  fs::path p(dir);
  if (p.filename().empty()) p = p.parent_path();
  RunData run;
  run.name = p.filename().string();
  if (run.name.empty()) run.name = dir;

  const fs::path summary = fs::path(dir) / "summary.csv";
  std::ifstream in(summary);
  if (!in)
    throw config_error("cannot open " + summary.string() +
                       " (is this a run directory?)");
  std::string line;
  if (!std::getline(in, line))
    throw config_error(summary.string() + " is empty");
  const auto header = split_csv(line);
  int round_col = -1, acc_col = -1, loss_col = -1;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == "round") round_col = static_cast<int>(i);
    if (header[i] == "test_acc") acc_col = static_cast<int>(i);
    if (header[i] == "test_loss") loss_col = static_cast<int>(i);
  }
  if (round_col < 0 || acc_col < 0 || loss_col < 0)
    throw config_error(summary.string() +
                       ": missing round/test_acc/test_loss columns");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    const auto need = static_cast<std::size_t>(
        std::max({round_col, acc_col, loss_col}) + 1);
    if (cells.size() < need)
      throw config_error(summary.string() + ": short row '" + line + "'");
    try {
      const int round = std::stoi(cells[static_cast<std::size_t>(round_col)]);
      run.acc[round].push_back(
          std::stod(cells[static_cast<std::size_t>(acc_col)]));
      run.loss[round].push_back(
          std::stod(cells[static_cast<std::size_t>(loss_col)]));
      run.max_round = std::max(run.max_round, round);
    } catch (const std::exception&) {
      throw config_error(summary.string() + ": malformed row '" + line + "'");
    }
  }
  if (run.acc.empty())
    throw config_error(summary.string() + " has no data rows");
  return run;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

void compare_impl(const std::vector<std::string>& run_dirs,
                  const std::string& out_path) {
  if (run_dirs.size() < 2)
    throw config_error("compare needs at least two run directories");
  std::vector<RunData> runs;
  for (const auto& dir : run_dirs) runs.push_back(load_run(dir));

  // Disambiguate repeated directory names (e.g. comparing a run with
  // itself) so the table columns stay distinct.
  for (std::size_t i = 0; i < runs.size(); ++i) {
    int repeat = 1;
    for (std::size_t j = 0; j < i; ++j)
      if (runs[j].name == runs[i].name ||
          runs[j].name == runs[i].name + "#" + std::to_string(repeat))
        ++repeat;
    if (repeat > 1) runs[i].name += "#" + std::to_string(repeat);
  }

  int common = runs[0].max_round;
  for (const auto& run : runs) common = std::min(common, run.max_round);
  if (common < 1) throw config_error("runs share no common rounds");
  for (const auto& run : runs)
    for (int r = 1; r <= common; ++r)
      if (!run.acc.count(r))
        throw config_error("run " + run.name + " is missing round " +
                           std::to_string(r));

  std::ofstream out(out_path);
  if (!out) throw config_error("cannot write " + out_path);
  out << "round";
  for (const auto& run : runs)
    out << ',' << run.name << "_acc_mean," << run.name << "_acc_std,"
        << run.name << "_loss_mean";
  out << '\n';
  for (int r = 1; r <= common; ++r) {
    out << r;
    for (const auto& run : runs)
      out << ',' << fmt(mean_of(run.acc.at(r))) << ','
          << fmt(std_of(run.acc.at(r))) << ',' << fmt(mean_of(run.loss.at(r)));
    out << '\n';
  }

  fs::path final_path(out_path);
  final_path.replace_filename(final_path.stem().string() + "_final" +
                              final_path.extension().string());
  std::ofstream fin(final_path);
  if (!fin) throw config_error("cannot write " + final_path.string());
  fin << "name,final_round,test_acc_mean,test_acc_std,test_loss_mean,"
         "delta_acc_pp_vs_" +
             runs[0].name + "\n";
  const double baseline = mean_of(runs[0].acc.at(common));
  for (const auto& run : runs) {
    const double acc = mean_of(run.acc.at(common));
    fin << run.name << ',' << common << ',' << fmt(acc) << ','
        << fmt(std_of(run.acc.at(common))) << ','
        << fmt(mean_of(run.loss.at(common))) << ','
        << fmt((acc - baseline) * 100.0) << '\n';
    std::cout << run.name << ": round " << common
              << " test acc mean=" << fmt(acc)
              << " delta_pp=" << fmt((acc - baseline) * 100.0) << '\n';
  }
}

}  // namespace

int run(const ExperimentConfig& config) {
  try {
    run_impl(config);
    return 0;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

int compare(const std::vector<std::string>& run_dirs,
            const std::string& out_path) {
  try {
    compare_impl(run_dirs, out_path);
    return 0;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace hetqfl::cli
