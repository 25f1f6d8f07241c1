// mpm-parvi command-line entry point: run, diagnose, validate.
//
// Exit codes: 0 ok, 1 invalid input (config, flags, snapshot), 2 runtime failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "mpm_parvi.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mpm_parvi;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitRuntime = 2;

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// MPM_PARVI_THREADS overrides the configured worker count.
void apply_thread_override(SimConfig& c) {
  const char* env = std::getenv("MPM_PARVI_THREADS");
  if (!env) return;
  const auto n = parse_int<unsigned>(env);
  if (!n || *n < 1) throw InputError(std::string("MPM_PARVI_THREADS must be an integer >= 1, got '") + env + "'");
  c.threads = *n;
}

SimConfig load(const std::string& path) {
  if (!fs::is_regular_file(path)) throw InputError("config file not found: " + path);
  return load_config(path);
}

json vec_json(const Vec& v) { return json(std::vector<double>(v.values().begin(), v.values().end())); }

json mat_json(const Mat& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    std::vector<double> r(m.dim());
    for (std::size_t j = 0; j < m.dim(); ++j) r[j] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

std::string snapshot_name(std::int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snapshot_%06lld.csv", static_cast<long long>(iteration));
  return buf;
}

int cmd_validate(const std::string& config_path) {
  SimConfig c = load(config_path);
  apply_thread_override(c);
  std::cout << print_config(c);
  return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& out_dir) {
  SimConfig c = load(config_path);
  apply_thread_override(c);

  const fs::path out(out_dir);
  const fs::path snaps = out / "snapshots";
  fs::create_directories(snaps);
  {
    std::ofstream cfg(out / "config.txt", std::ios::binary);
    cfg << print_config(c);
  }

  RunResult r = run(c, [&](const RunState& s) { write_snapshot(snaps / snapshot_name(s.iteration), s); });
  const RunState& s = r.state;
  write_telemetry(out / "telemetry.csv", s.telemetry);

  json report;
  report["iterations"] = s.iteration;
  report["stopped_early"] = r.stopped_early;
  report["particles"] = s.particles.size();
  report["dimension"] = c.dimension;
  report["f_reset_count"] = s.f_resets;
  report["cfl_warnings"] = s.cfl_warnings;
  report["final_mean_log_density"] = s.telemetry.back().mean_log_density;
  report["final_kinetic_energy"] = s.telemetry.back().kinetic_energy;
  const auto xs = r.positions();
  if (xs.size() >= 2) {
    const Moments m = moments(xs);
    report["mean"] = vec_json(m.mean);
    report["covariance"] = mat_json(m.covariance);
  }
  std::ofstream rep(out / "report.json", std::ios::binary);
  rep << report.dump(2) << '\n';
  if (!rep) throw std::runtime_error("cannot write report.json");
  std::cerr << "run finished: " << s.iteration << " iterations, output in " << out.string() << '\n';
  return kExitOk;
}

int cmd_diagnose(const std::string& snapshot_path, const std::string& target_config, std::size_t bins,
                 std::size_t reference_size, std::uint64_t reference_seed) {
  if (!fs::is_regular_file(snapshot_path)) throw InputError("snapshot file not found: " + snapshot_path);
  Snapshot snap;
  try {
    snap = read_snapshot(snapshot_path);
  } catch (const SnapshotError& e) {
    throw InputError(e.what());
  }
  if (snap.positions.size() < 2) throw InputError("snapshot needs at least 2 particles");

  std::optional<TargetSpec> target;
  if (!target_config.empty()) {
    const SimConfig c = load(target_config);
    if (c.dimension != snap.dimension) {
      throw InputError("target dimension " + std::to_string(c.dimension) + " does not match snapshot dimension " +
                       std::to_string(snap.dimension));
    }
    target = c.target_spec();
  }

  std::vector<Vec> reference;
  if (target && reference_size > 0) {
    try {
      reference = direct_sample(*target, reference_size, reference_seed);
    } catch (const std::invalid_argument&) {
      // target has no direct sampler (donut); MMD is skipped
    }
  }
  const SampleStats st = sample_stats(snap.positions, reference, bins);

  json head;
  head["kind"] = "moments";
  head["iteration"] = snap.iteration;
  head["particles"] = snap.positions.size();
  head["mean"] = vec_json(st.mean);
  head["covariance"] = mat_json(st.covariance);
  std::cout << head.dump() << '\n';
  for (std::size_t a = 0; a < st.histograms.size(); ++a) {
    json h;
    h["kind"] = "histogram";
    h["axis"] = a;
    h["edges"] = st.histograms[a].edges;
    h["counts"] = st.histograms[a].counts;
    std::cout << h.dump() << '\n';
  }
  for (std::size_t a = 0; a < st.kdes.size(); ++a) {
    if (st.kdes[a].grid.empty()) continue;
    json k;
    k["kind"] = "kde";
    k["axis"] = a;
    k["bandwidth"] = st.kdes[a].bandwidth;
    k["grid"] = st.kdes[a].grid;
    k["density"] = st.kdes[a].density;
    std::cout << k.dump() << '\n';
  }
  if (target) {
    const TargetDensity density = builtin_target(*target);
    double lp = 0.0;
    for (const Vec& x : snap.positions) lp += density.log_density(x);
    json t;
    t["kind"] = "target";
    t["name"] = std::string(to_string(target->kind));
    t["mean_log_density"] = lp / static_cast<double>(snap.positions.size());
    if (st.mmd) {
      t["mmd"] = *st.mmd;
      t["reference_size"] = reference.size();
      t["reference_seed"] = reference_seed;
    }
    std::cout << t.dump() << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Material point method particle sampler"};
  app.require_subcommand(1);

  std::string config_path, out_dir, snapshot_path, target_config;
  std::size_t bins = 0, reference_size = 2000;
  std::uint64_t reference_seed = 12345;

  auto* run_cmd = app.add_subcommand("run", "Run the sampler and write snapshots, telemetry and a report");
  run_cmd->add_option("--config", config_path, "Run config file")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();

  auto* diag_cmd = app.add_subcommand("diagnose", "Summary statistics of a snapshot as JSON lines");
  diag_cmd->add_option("--snapshot", snapshot_path, "Snapshot CSV")->required();
  diag_cmd->add_option("--target-config", target_config, "Config whose [target] section is compared against");
  diag_cmd->add_option("--bins", bins, "Histogram bins per axis (0: ceil(sqrt(M)))");
  diag_cmd->add_option("--reference-size", reference_size, "Direct target samples for MMD (0 disables)");
  diag_cmd->add_option("--reference-seed", reference_seed, "Seed for the reference sample");

  auto* validate_cmd = app.add_subcommand("validate", "Parse a config and print it with defaults resolved");
  validate_cmd->add_option("--config", config_path, "Run config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*run_cmd) return cmd_run(config_path, out_dir);
    if (*diag_cmd) return cmd_diagnose(snapshot_path, target_config, bins, reference_size, reference_seed);
    if (*validate_cmd) return cmd_validate(config_path);
  } catch (const ConfigError& e) {
    std::cerr << "invalid config:\n" << e.what() << '\n';
    return kExitInvalid;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitInvalid;
}
