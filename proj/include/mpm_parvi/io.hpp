#pragma once

// Plain-text run configs, snapshot CSV and telemetry CSV.
//
// Config format: `[section]` headers, `key = value` lines, `#` comments.
// Lists are comma separated; an empty value is an empty list.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "mpm_parvi/errors.hpp"
#include "mpm_parvi/sampler.hpp"

namespace mpm_parvi {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
  return v;
}

template <class Int>
std::optional<Int> parse_int(std::string_view s) {
  Int v{};
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || end != s.data() + s.size()) return std::nullopt;
  return v;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

template <class E>
struct EnumName {
  E value;
  std::string_view name;
};

inline constexpr EnumName<KernelKind> kKernelNames[] = {
    {KernelKind::Linear, "linear"}, {KernelKind::Quadratic, "quadratic"}, {KernelKind::Cubic, "cubic"}};
inline constexpr EnumName<TransferKind> kSchemeNames[] = {
    {TransferKind::PIC, "pic"}, {TransferKind::APIC, "apic"}, {TransferKind::FlipBlend, "flip_blend"}};
inline constexpr EnumName<AlphaSchedule::Kind> kScheduleNames[] = {
    {AlphaSchedule::Kind::Constant, "constant"}, {AlphaSchedule::Kind::LinearRamp, "linear_ramp"}};
inline constexpr EnumName<ForceSite> kSiteNames[] = {{ForceSite::AtNodes, "nodes"},
                                                     {ForceSite::AtParticles, "particles"}};
inline constexpr EnumName<BoundaryPolicy> kBoundaryNames[] = {{BoundaryPolicy::Clamp, "clamp"},
                                                              {BoundaryPolicy::None, "none"}};
inline constexpr EnumName<StorageChoice> kStorageNames[] = {
    {StorageChoice::Auto, "auto"}, {StorageChoice::Dense, "dense"}, {StorageChoice::Sparse, "sparse"}};
inline constexpr EnumName<ConstitutiveKind> kModelNames[] = {{ConstitutiveKind::NeoHookean, "neo_hookean"},
                                                             {ConstitutiveKind::LinearElastic, "linear_elastic"}};
inline constexpr EnumName<TargetKind> kTargetNames[] = {{TargetKind::StdGaussian, "std_gaussian"},
                                                        {TargetKind::GaussianMixture, "gaussian_mixture"},
                                                        {TargetKind::Banana, "banana"},
                                                        {TargetKind::Donut, "donut"}};
inline constexpr EnumName<InitKind> kProposalNames[] = {{InitKind::Uniform, "uniform"},
                                                        {InitKind::Gaussian, "gaussian"}};

template <class E, std::size_t N>
std::string_view enum_name(const EnumName<E> (&table)[N], E v) {
  for (const auto& e : table)
    if (e.value == v) return e.name;
  return "?";
}

template <class E, std::size_t N>
std::optional<E> enum_value(const EnumName<E> (&table)[N], std::string_view s) {
  for (const auto& e : table)
    if (e.name == s) return e.value;
  return std::nullopt;
}

template <class E, std::size_t N>
std::string enum_choices(const EnumName<E> (&table)[N]) {
  std::string out;
  for (const auto& e : table) {
    if (!out.empty()) out += ", ";
    out += e.name;
  }
  return out;
}

// One handler per config key. Parse failures come back as a message.
struct KeyBinding {
  std::string_view section;
  std::string_view key;
  std::function<std::optional<std::string>(SimConfig&, std::string_view)> parse;
  std::function<std::string(const SimConfig&)> print;
};

inline std::optional<std::string> read_list(std::string_view v, std::vector<double>& out) {
  out.clear();
  if (v.empty()) return std::nullopt;
  std::size_t pos = 0;
  while (true) {
    const auto comma = v.find(',', pos);
    const auto item = trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
    const auto x = parse_double(item);
    if (!x) return "expected a comma-separated list of numbers, got '" + std::string(v) + "'";
    out.push_back(*x);
    if (comma == std::string_view::npos) return std::nullopt;
    pos = comma + 1;
  }
}

inline std::string write_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    out += format_double(v[i]);
  }
  return out;
}

template <class T>
KeyBinding real_key(std::string_view section, std::string_view key, T SimConfig::*field) {
  return {section, key,
          [field](SimConfig& c, std::string_view v) -> std::optional<std::string> {
            auto x = parse_double(v);
            if (!x) return "expected a number, got '" + std::string(v) + "'";
            c.*field = *x;
            return std::nullopt;
          },
          [field](const SimConfig& c) { return format_double(c.*field); }};
}

template <class T>
KeyBinding int_key(std::string_view section, std::string_view key, T SimConfig::*field) {
  return {section, key,
          [field](SimConfig& c, std::string_view v) -> std::optional<std::string> {
            auto x = parse_int<T>(v);
            if (!x) return "expected an integer, got '" + std::string(v) + "'";
            c.*field = *x;
            return std::nullopt;
          },
          [field](const SimConfig& c) { return std::to_string(c.*field); }};
}

inline KeyBinding list_key(std::string_view section, std::string_view key, std::vector<double> SimConfig::*field) {
  return {section, key, [field](SimConfig& c, std::string_view v) { return read_list(v, c.*field); },
          [field](const SimConfig& c) { return write_list(c.*field); }};
}

template <class E, std::size_t N>
KeyBinding enum_key(std::string_view section, std::string_view key, E SimConfig::*field,
                    const EnumName<E> (&table)[N]) {
  return {section, key,
          [field, &table](SimConfig& c, std::string_view v) -> std::optional<std::string> {
            auto e = enum_value(table, v);
            if (!e) return "unknown value '" + std::string(v) + "' (expected one of: " + enum_choices(table) + ")";
            c.*field = *e;
            return std::nullopt;
          },
          [field, &table](const SimConfig& c) { return std::string(enum_name(table, c.*field)); }};
}

inline KeyBinding bool_key(std::string_view section, std::string_view key, bool SimConfig::*field) {
  return {section, key,
          [field](SimConfig& c, std::string_view v) -> std::optional<std::string> {
            if (v == "true") c.*field = true;
            else if (v == "false") c.*field = false;
            else return "expected true or false, got '" + std::string(v) + "'";
            return std::nullopt;
          },
          [field](const SimConfig& c) { return std::string(c.*field ? "true" : "false"); }};
}

inline const std::vector<KeyBinding>& key_bindings() {
  static const std::vector<KeyBinding> keys = {
      int_key("simulation", "dimension", &SimConfig::dimension),
      int_key("simulation", "particles", &SimConfig::particles),
      real_key("simulation", "dt", &SimConfig::dt),
      int_key("simulation", "iterations", &SimConfig::iterations),
      enum_key("simulation", "kernel", &SimConfig::kernel, kKernelNames),
      enum_key("simulation", "scheme", &SimConfig::scheme, kSchemeNames),
      real_key("simulation", "flip_alpha", &SimConfig::flip_alpha),
      real_key("simulation", "score_alpha", &SimConfig::score_alpha),
      enum_key("simulation", "alpha_schedule", &SimConfig::alpha_schedule, kScheduleNames),
      real_key("simulation", "alpha_start", &SimConfig::alpha_start),
      int_key("simulation", "alpha_ramp_iterations", &SimConfig::alpha_ramp_iterations),
      enum_key("simulation", "force_site", &SimConfig::force_site, kSiteNames),
      list_key("simulation", "gravity", &SimConfig::gravity),
      real_key("simulation", "damping", &SimConfig::damping),
      int_key("simulation", "seed", &SimConfig::seed),
      real_key("simulation", "cfl", &SimConfig::cfl),
      real_key("simulation", "mass_epsilon", &SimConfig::mass_epsilon),
      enum_key("simulation", "boundary", &SimConfig::boundary, kBoundaryNames),
      int_key("simulation", "threads", &SimConfig::threads),
      int_key("simulation", "stop_window", &SimConfig::stop_window),
      real_key("simulation", "stop_tol_rel", &SimConfig::stop_tol_rel),
      real_key("simulation", "stop_kinetic_floor", &SimConfig::stop_kinetic_floor),
      int_key("grid", "nodes_per_dim", &SimConfig::nodes_per_dim),
      real_key("grid", "length", &SimConfig::length),
      list_key("grid", "origin", &SimConfig::origin),
      enum_key("grid", "storage", &SimConfig::storage, kStorageNames),
      int_key("grid", "sparse_threshold", &SimConfig::sparse_threshold),
      enum_key("material", "model", &SimConfig::model, kModelNames),
      real_key("material", "youngs_modulus", &SimConfig::youngs_modulus),
      real_key("material", "poissons_ratio", &SimConfig::poissons_ratio),
      real_key("material", "particle_volume", &SimConfig::particle_volume),
      enum_key("target", "name", &SimConfig::target, kTargetNames),
      list_key("target", "means", &SimConfig::means),
      list_key("target", "covariances", &SimConfig::covariances),
      list_key("target", "weights", &SimConfig::weights),
      list_key("target", "params", &SimConfig::params),
      enum_key("init", "proposal", &SimConfig::proposal, kProposalNames),
      list_key("init", "low", &SimConfig::low),
      list_key("init", "high", &SimConfig::high),
      list_key("init", "mean", &SimConfig::mean),
      list_key("init", "covariance", &SimConfig::covariance),
      int_key("output", "snapshot_every", &SimConfig::snapshot_every),
      bool_key("output", "record_timing", &SimConfig::record_timing),
  };
  return keys;
}

inline const std::vector<std::string_view>& section_names() {
  static const std::vector<std::string_view> names = {"simulation", "grid", "material", "target", "init", "output"};
  return names;
}

}  // namespace detail

/// Parses and validates a config. Every syntax error, unknown key and
/// constraint violation is collected into one ConfigError, each prefixed
/// with "line N: " where a line can be attributed.
inline SimConfig parse_config(std::string_view text) {
  SimConfig c;
  std::vector<std::string> problems;
  std::map<std::string, int, std::less<>> key_line;      // key -> line
  std::map<std::string, int, std::less<>> section_line;  // section -> line
  std::string section;
  int line_no = 0;
  std::size_t pos = 0;
  auto problem = [&](int line, const std::string& msg) { problems.push_back("line " + std::to_string(line) + ": " + msg); };

  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        problem(line_no, "malformed section header '" + std::string(line) + "'");
        continue;
      }
      section = std::string(detail::trim(line.substr(1, line.size() - 2)));
      const auto& names = detail::section_names();
      if (std::find(names.begin(), names.end(), section) == names.end()) {
        problem(line_no, "unknown section [" + section + "]");
      } else if (section_line.count(section)) {
        problem(line_no, "duplicate section [" + section + "]");
      } else {
        section_line[section] = line_no;
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      problem(line_no, "expected 'key = value', got '" + std::string(line) + "'");
      continue;
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (section.empty()) {
      problem(line_no, "key '" + key + "' appears before any section header");
      continue;
    }
    const detail::KeyBinding* binding = nullptr;
    for (const auto& b : detail::key_bindings())
      if (b.section == section && b.key == key) binding = &b;
    if (!binding) {
      problem(line_no, "unknown key '" + key + "' in [" + section + "]");
      continue;
    }
    if (key_line.count(key)) {
      problem(line_no, "duplicate key '" + key + "' (first set on line " + std::to_string(key_line[key]) + ")");
      continue;
    }
    key_line[key] = line_no;
    if (auto err = binding->parse(c, value)) problem(line_no, key + ": " + *err);
  }
  // Validation still runs after syntax errors so one pass reports everything;
  // keys that failed to parse keep their defaults.
  try {
    validate(c);
  } catch (const ConfigError& e) {
    // Attribute each message to the key (or section) it starts with.
    for (const std::string& msg : e.problems()) {
      int line = 0;
      std::size_t best = 0;
      for (const auto& [k, l] : key_line) {
        if (k.size() > best && msg.size() > k.size() && msg.compare(0, k.size(), k) == 0 &&
            (msg[k.size()] == ' ' || msg[k.size()] == ':')) {
          best = k.size();
          line = l;
        }
      }
      if (line == 0)
        for (const auto& [s, l] : section_line)
          if (msg.compare(0, s.size() + 1, s + ":") == 0) line = l;
      problems.push_back(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg);
    }
    throw ConfigError(problems);
  }
  if (!problems.empty()) throw ConfigError(problems);
  return c;
}

/// Every key with its resolved value; parse_config(print_config(c)) == c.
inline std::string print_config(const SimConfig& c) {
  std::string out;
  std::string_view section;
  for (const auto& b : detail::key_bindings()) {
    if (b.section != section) {
      if (!section.empty()) out += '\n';
      section = b.section;
      out += "[" + std::string(section) + "]\n";
    }
    std::string v = b.print(c);
    out += std::string(b.key) + " =" + (v.empty() ? "" : " " + v) + "\n";
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline SimConfig load_config(const std::filesystem::path& path) { return parse_config(read_text_file(path)); }

// Snapshots

inline std::string snapshot_header(std::size_t d) {
  std::string h = "iteration,particle_id";
  for (std::size_t a = 0; a < d; ++a) h += ",x_" + std::to_string(a);
  for (std::size_t a = 0; a < d; ++a) h += ",v_" + std::to_string(a);
  h += ",det_F,log_density";
  return h;
}

inline void write_snapshot(std::ostream& out, const RunState& s) {
  const std::size_t d = s.spec.dimension;
  out << snapshot_header(d) << '\n';
  const std::string iter = std::to_string(s.iteration);
  for (std::size_t p = 0; p < s.particles.size(); ++p) {
    const Particle& q = s.particles[p];
    std::string row = iter + "," + std::to_string(p);
    for (std::size_t a = 0; a < d; ++a) row += "," + format_double(q.position[a]);
    for (std::size_t a = 0; a < d; ++a) row += "," + format_double(q.velocity[a]);
    row += "," + format_double(determinant(q.deformation));
    row += "," + format_double(s.target->log_density(q.position));
    out << row << '\n';
  }
}

inline void write_snapshot(const std::filesystem::path& path, const RunState& s) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_snapshot(out, s);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

struct Snapshot {
  std::int64_t iteration = 0;
  std::size_t dimension = 0;
  std::vector<std::uint64_t> particle_ids;
  std::vector<Vec> positions;
  std::vector<Vec> velocities;
  std::vector<double> det_f;
  std::vector<double> log_density;
};

/// Raised for unreadable or malformed snapshot files.
class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Snapshot read_snapshot(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SnapshotError("snapshot is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  Snapshot snap;
  // Header fixes the dimension: 2 + 2d + 2 columns.
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 6 || columns % 2 != 0) throw SnapshotError("snapshot header has " + std::to_string(columns) + " columns");
  snap.dimension = (columns - 4) / 2;
  if (snap.dimension > kMaxDim || line != snapshot_header(snap.dimension))
    throw SnapshotError("unexpected snapshot header: " + line);
  const std::size_t d = snap.dimension;
  std::size_t row = 1;
  std::vector<std::string_view> cells;
  bool first = true;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    cells.clear();
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      cells.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    auto bad = [&](const std::string& what) { return SnapshotError("row " + std::to_string(row) + ": " + what); };
    if (cells.size() != columns) throw bad("expected " + std::to_string(columns) + " cells");
    const auto it = parse_int<std::int64_t>(cells[0]);
    const auto id = parse_int<std::uint64_t>(cells[1]);
    if (!it || !id) throw bad("bad iteration or particle_id");
    if (first) {
      snap.iteration = *it;
      first = false;
    } else if (*it != snap.iteration) {
      throw bad("mixed iterations in one snapshot");
    }
    Vec x(d), v(d);
    std::vector<double> nums(columns - 2);
    for (std::size_t k = 2; k < columns; ++k) {
      const auto val = parse_double(cells[k]);
      if (!val) throw bad("bad number '" + std::string(cells[k]) + "'");
      nums[k - 2] = *val;
    }
    for (std::size_t a = 0; a < d; ++a) {
      x[a] = nums[a];
      v[a] = nums[d + a];
    }
    snap.particle_ids.push_back(*id);
    snap.positions.push_back(x);
    snap.velocities.push_back(v);
    snap.det_f.push_back(nums[2 * d]);
    snap.log_density.push_back(nums[2 * d + 1]);
  }
  return snap;
}

inline Snapshot read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SnapshotError("cannot open " + path.string());
  return read_snapshot(in);
}

// Telemetry

inline constexpr std::string_view kTelemetryHeader = "iteration,mean_log_density,kinetic_energy,f_reset_count,wall_ms";

inline void write_telemetry(std::ostream& out, std::span<const TelemetryRow> rows) {
  out << kTelemetryHeader << '\n';
  for (const auto& r : rows) {
    out << r.iteration << ',' << format_double(r.mean_log_density) << ',' << format_double(r.kinetic_energy) << ','
        << r.f_reset_count << ',' << format_double(r.wall_ms) << '\n';
  }
}

inline void write_telemetry(const std::filesystem::path& path, std::span<const TelemetryRow> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_telemetry(out, rows);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace mpm_parvi
