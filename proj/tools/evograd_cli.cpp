// evograd: run experiments, scaling sweeps, and summarize metric CSVs.
//
//   evograd run --experiment one_d_grid --k 2 --k 10 --k 100 --reps 100 --out grid.csv
//   evograd run --config rotation.cfg --seeds 0,1,2 --out rot.csv
//   evograd sweep --dimension model_width --grid 1,2,3,4,5 --out width.csv
//   evograd summarize rot.csv
//
// Exit codes: 0 success, 1 configuration error, 2 numeric divergence.

#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "evograd/config.hpp"
#include "evograd/csv.hpp"
#include "evograd/runner.hpp"

namespace {

using namespace evograd;

constexpr int kConfigError = 1;
constexpr int kDivergence = 2;

struct Options {
  std::string config_path;
  std::map<std::string, std::vector<std::string>> values;
  std::map<std::string, bool> flags;
};

const std::vector<std::string> kFlagKeys{"wall_clock", "dump_tape", "parallel"};

void add_config_options(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config_path, "key = value file; flags given on the command line override it");
  for (const auto& key : config_keys()) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (std::find(kFlagKeys.begin(), kFlagKeys.end(), key) != kFlagKeys.end()) {
      cmd->add_flag(flag, o.flags[key]);
    } else {
      cmd->add_option(flag, o.values[key])->take_all();
    }
  }
}

RawOptions collect(CLI::App* cmd, const Options& o) {
  RawOptions raw;
  if (!o.config_path.empty()) raw = read_config_file(o.config_path);
  for (const auto& [key, v] : o.values) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    if (cmd->count(flag) > 0) raw[key] = v;
  }
  for (const auto& [key, on] : o.flags)
    if (on) raw[key] = {"true"};
  return raw;
}

std::string summary_path(const std::string& out) {
  const auto dot = out.rfind('.');
  const auto slash = out.find_last_of('/');
  if (dot != std::string::npos && (slash == std::string::npos || dot > slash)) return out.substr(0, dot) + ".summary.json";
  return out + ".summary.json";
}

void write_outputs(const std::string& out, const std::vector<MetricsRecord>& records, bool with_time) {
  std::vector<MetricRow> rows;
  for (const auto& r : records) {
    auto more = to_rows(r, with_time);
    rows.insert(rows.end(), more.begin(), more.end());
  }
  {
    std::ofstream os(out, std::ios::binary);
    if (!os) throw ConfigError({"out: cannot write '" + out + "'"});
    CsvWriter w(os);
    w.write(rows);
  }
  const auto summary = summarize(rows);
  std::ofstream js(summary_path(out), std::ios::binary);
  js << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
}

int cmd_run(CLI::App* cmd, const Options& o) {
  const ExperimentConfig cfg = build_config(collect(cmd, o), false);
  if (cfg.dump_tape) {
    std::ofstream os(cfg.out + ".tape.txt", std::ios::binary);
    dump_first_tape(cfg, os);
  }
  if (!cfg.export_data.empty()) {
    std::ofstream os(cfg.export_data, std::ios::binary);
    if (!os) throw ConfigError({"export_data: cannot write '" + cfg.export_data + "'"});
    export_dataset(cfg, os);
  }
  const auto out = run_experiment(cfg);
  write_outputs(cfg.out, out.records, cfg.wall_clock);
  return 0;
}

int cmd_sweep(CLI::App* cmd, const Options& o) {
  const ExperimentConfig cfg = build_config(collect(cmd, o), true);
  std::vector<MetricsRecord> records;
  for (auto seed : cfg.seeds) {
    const auto points = scaling_sweep(*cfg.dimension, cfg.grid, cfg, seed);
    auto recs = sweep_records(points, seed);
    records.insert(records.end(), recs.begin(), recs.end());
  }
  write_outputs(cfg.out, records, true);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  evograd::tune_allocator();
  CLI::App app{"EvoGrad hypergradient experiments"};
  app.require_subcommand(1);

  Options run_opts, sweep_opts;
  auto* run = app.add_subcommand("run", "run an experiment over seeds, write CSV + JSON summary");
  add_config_options(run, run_opts);
  auto* sweep = app.add_subcommand("sweep", "cost sweep over model width, hyperparameter count or population size");
  add_config_options(sweep, sweep_opts);
  std::string csv_path;
  auto* summ = app.add_subcommand("summarize", "per-metric mean/std across seeds at the final step");
  summ->add_option("csv", csv_path, "metrics CSV written by run or sweep")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    if (*run) return cmd_run(run, run_opts);
    if (*sweep) return cmd_sweep(sweep, sweep_opts);
    if (*summ) {
      std::cout << summarize_file(csv_path).dump(2) << '\n';
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const NumericError& e) {
    std::cerr << "numeric divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const CsvError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigError;
  }
  return 0;
}
