#ifndef JACOBI_LDP_CONFIG_HPP
#define JACOBI_LDP_CONFIG_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"
#include "ldp.hpp"
#include "sampler.hpp"

// Flat key-value experiment configuration. One `key = value` per line,
// `#` starts a comment. The full key list is in docs/config.md.

namespace jacobi_ldp {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Chain settings where burn_in, thinning and initial_step may be left to the
/// per-n defaults.
struct ChainSpec {
  std::optional<std::size_t> burn_in;
  std::optional<std::size_t> thinning;
  std::optional<double> initial_step;
  double target_acceptance = 0.4;

  ChainSettings resolve(int particles, std::uint64_t seed, std::uint64_t stream) const {
    ChainSettings s = ChainSettings::defaults_for(particles, seed, stream);
    if (burn_in) s.burn_in = *burn_in;
    if (thinning) s.thinning = *thinning;
    if (initial_step) s.initial_step = *initial_step;
    s.target_acceptance = target_acceptance;
    s.validate();
    return s;
  }

  friend bool operator==(const ChainSpec&, const ChainSpec&) = default;
};

struct ExperimentConfig {
  double rho = 1.0;
  double kappa = 0.0;
  double lambda = 0.0;
  std::string scaling_rule = "exact";         // exact | table
  std::vector<ScalingFamily::Entry> table;    // used when scaling_rule == "table"
  std::vector<int> sizes;                     // run.N
  Region region;
  std::vector<std::size_t> trials;            // one value, or one per N
  std::size_t gamma_samples = 0;
  std::size_t quad_cells = 256;
  std::size_t repetitions = 20;
  int sample_N = 0;
  std::size_t sample_count = 100;
  std::size_t hist_cells = 50;
  ChainSpec chain;
  std::size_t eq_cells = 1024;
  double eq_tol = 1e-3;
  std::size_t eq_max_iters = 20000;
  std::string output_dir = "out";
  std::uint64_t seed = 1;

  LimitParams limits() const { return LimitParams(rho, kappa, lambda); }

  ScalingFamily family() const {
    std::vector<int> all = sizes;
    if (sample_N > 0) all.push_back(sample_N);
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    if (scaling_rule == "exact") {
      if (all.empty()) all.push_back(1);
      return ScalingFamily::exact_ratio(limits(), all);
    }
    const double largest = std::max_element(table.begin(), table.end(), [](const auto& a, const auto& b) {
                             return a.N < b.N;
                           })->N;
    return ScalingFamily(table, limits(), 1.0 / largest + 1e-12);
  }

  std::size_t trials_at(std::size_t index) const { return trials.size() == 1 ? trials.front() : trials.at(index); }

  friend bool operator==(const ExperimentConfig& a, const ExperimentConfig& b) {
    auto same_table = [](const std::vector<ScalingFamily::Entry>& x, const std::vector<ScalingFamily::Entry>& y) {
      return std::equal(x.begin(), x.end(), y.begin(), y.end(), [](const auto& e, const auto& f) {
        return e.N == f.N && e.n == f.n && e.kappa_n == f.kappa_n && e.lambda_n == f.lambda_n;
      });
    };
    return a.rho == b.rho && a.kappa == b.kappa && a.lambda == b.lambda && a.scaling_rule == b.scaling_rule &&
           same_table(a.table, b.table) && a.sizes == b.sizes && a.region == b.region && a.trials == b.trials &&
           a.gamma_samples == b.gamma_samples && a.quad_cells == b.quad_cells && a.repetitions == b.repetitions &&
           a.sample_N == b.sample_N && a.sample_count == b.sample_count && a.hist_cells == b.hist_cells &&
           a.chain == b.chain && a.eq_cells == b.eq_cells && a.eq_tol == b.eq_tol &&
           a.eq_max_iters == b.eq_max_iters && a.output_dir == b.output_dir && a.seed == b.seed;
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_real(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a real number, got '" + v + "'");
  }
  return out;
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
  return out;
}

inline std::string format_region(const Region& r) {
  if (r.empty()) return "none";
  std::string out;
  for (const Interval& iv : r.intervals()) {
    if (!out.empty()) out += ",";
    out += format_real(iv.lo) + ":" + format_real(iv.hi);
  }
  return out;
}

inline Region parse_region(const std::string& v) {
  if (v == "none") return Region();
  std::vector<Interval> ivs;
  for (const std::string& part : split(v, ',')) {
    const auto ends = split(part, ':');
    if (ends.size() != 2) throw ConfigError("region: expected lo:hi pairs, got '" + part + "'");
    ivs.push_back({parse_real("region", ends[0]), parse_real("region", ends[1])});
  }
  try {
    return Region(std::move(ivs));
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("region: ") + e.what());
  }
}

template <class T>
std::string format_list(const std::vector<T>& v) {
  std::string out;
  for (const T& x : v) {
    if (!out.empty()) out += ",";
    out += std::to_string(x);
  }
  return out;
}

template <class Int>
std::vector<Int> parse_list(const std::string& key, const std::string& v) {
  std::vector<Int> out;
  for (const std::string& part : split(v, ',')) out.push_back(parse_int<Int>(key, part));
  return out;
}

template <class T>
std::string format_auto(const std::optional<T>& v) {
  if (!v) return "auto";
  if constexpr (std::is_floating_point_v<T>) {
    return format_real(*v);
  } else {
    return std::to_string(*v);
  }
}

}  // namespace config_detail

/// Parses `key = value` lines into a key-to-value map; rejects duplicates and
/// lines without '='.
inline std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    if (!kv.emplace(key, value).second) throw ConfigError("duplicate key '" + key + "'");
  }
  return kv;
}

/// Builds and validates an ExperimentConfig. Every key is optional except
/// the ones the chosen subcommand needs; see check_for_command.
inline ExperimentConfig parse_config(const std::string& text) {
  using namespace config_detail;
  auto kv = parse_key_values(text);
  ExperimentConfig c;
  auto take = [&](const std::string& key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    std::string v = it->second;
    kv.erase(it);
    if (v.empty()) throw ConfigError(key + ": empty value");
    return v;
  };

  if (auto v = take("limits.rho")) c.rho = parse_real("limits.rho", *v);
  if (auto v = take("limits.kappa")) c.kappa = parse_real("limits.kappa", *v);
  if (auto v = take("limits.lambda")) c.lambda = parse_real("limits.lambda", *v);
  if (auto v = take("scaling.rule")) c.scaling_rule = *v;
  if (auto v = take("scaling.table")) {
    for (const std::string& row : split(*v, ';')) {
      const auto f = split(row, ':');
      if (f.size() != 4) throw ConfigError("scaling.table: expected N:n:kappaN:lambdaN, got '" + row + "'");
      c.table.push_back({parse_int<int>("scaling.table", f[0]), parse_int<int>("scaling.table", f[1]),
                         parse_real("scaling.table", f[2]), parse_real("scaling.table", f[3])});
    }
  }
  if (auto v = take("run.N")) c.sizes = parse_list<int>("run.N", *v);
  if (auto v = take("region")) c.region = parse_region(*v);
  if (auto v = take("ldp.trials")) c.trials = parse_list<std::size_t>("ldp.trials", *v);
  if (auto v = take("ldp.gamma_samples")) c.gamma_samples = parse_int<std::size_t>("ldp.gamma_samples", *v);
  if (auto v = take("ldp.quad_cells")) c.quad_cells = parse_int<std::size_t>("ldp.quad_cells", *v);
  if (auto v = take("sandwich.repetitions")) c.repetitions = parse_int<std::size_t>("sandwich.repetitions", *v);
  if (auto v = take("sample.N")) c.sample_N = parse_int<int>("sample.N", *v);
  if (auto v = take("sample.count")) c.sample_count = parse_int<std::size_t>("sample.count", *v);
  if (auto v = take("sample.hist_cells")) c.hist_cells = parse_int<std::size_t>("sample.hist_cells", *v);
  if (auto v = take("chain.burn_in"); v && *v != "auto") c.chain.burn_in = parse_int<std::size_t>("chain.burn_in", *v);
  if (auto v = take("chain.thinning"); v && *v != "auto") c.chain.thinning = parse_int<std::size_t>("chain.thinning", *v);
  if (auto v = take("chain.initial_step"); v && *v != "auto") {
    c.chain.initial_step = parse_real("chain.initial_step", *v);
  }
  if (auto v = take("chain.target_acceptance")) {
    c.chain.target_acceptance = parse_real("chain.target_acceptance", *v);
  }
  if (auto v = take("equilibrium.cells")) c.eq_cells = parse_int<std::size_t>("equilibrium.cells", *v);
  if (auto v = take("equilibrium.tol")) c.eq_tol = parse_real("equilibrium.tol", *v);
  if (auto v = take("equilibrium.max_iters")) c.eq_max_iters = parse_int<std::size_t>("equilibrium.max_iters", *v);
  if (auto v = take("output.dir")) c.output_dir = *v;
  if (auto v = take("seed")) c.seed = parse_int<std::uint64_t>("seed", *v);

  if (!kv.empty()) throw ConfigError("unknown key '" + kv.begin()->first + "'");

  // Value checks shared by all subcommands.
  try {
    (void)c.limits();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (c.scaling_rule != "exact" && c.scaling_rule != "table") {
    throw ConfigError("scaling.rule: expected 'exact' or 'table', got '" + c.scaling_rule + "'");
  }
  if (c.scaling_rule == "table" && c.table.empty()) throw ConfigError("scaling.table: required when scaling.rule = table");
  if (c.scaling_rule == "exact" && !c.table.empty()) throw ConfigError("scaling.table: only valid with scaling.rule = table");
  for (int n : c.sizes) {
    if (n < 1) throw ConfigError("run.N: sizes must be >= 1");
  }
  if (std::adjacent_find(c.sizes.begin(), c.sizes.end(), [](int a, int b) { return a >= b; }) != c.sizes.end()) {
    throw ConfigError("run.N: sizes must be strictly increasing");
  }
  if (c.sample_N < 0) throw ConfigError("sample.N: must be >= 1");
  if (c.hist_cells < 1) throw ConfigError("sample.hist_cells: must be >= 1");
  if (c.quad_cells < 1) throw ConfigError("ldp.quad_cells: must be >= 1");
  if (c.eq_cells < 64) throw ConfigError("equilibrium.cells: must be >= 64");
  if (!(c.eq_tol > 0.0)) throw ConfigError("equilibrium.tol: must be > 0");
  if (c.eq_max_iters < 1) throw ConfigError("equilibrium.max_iters: must be >= 1");
  if (c.output_dir.empty()) throw ConfigError("output.dir: empty");
  try {
    c.chain.resolve(1, 0, 0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("chain: ") + e.what());
  }
  if ((c.scaling_rule == "table") || !c.sizes.empty() || c.sample_N > 0) {
    try {
      const ScalingFamily fam = c.family();
      for (int n : c.sizes) {
        if (!fam.contains(n)) throw ConfigError("run.N: N = " + std::to_string(n) + " missing from scaling.table");
      }
      if (c.sample_N > 0 && !fam.contains(c.sample_N)) {
        throw ConfigError("sample.N: N = " + std::to_string(c.sample_N) + " missing from scaling.table");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("scaling: ") + e.what());
    }
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

/// Canonical text: every key, sorted, values in canonical form. Without
/// `with_output_dir` the destination is left out, which is what gets hashed:
/// the same run written elsewhere has the same config hash.
inline std::string serialize_config(const ExperimentConfig& c, bool with_output_dir = true) {
  using namespace config_detail;
  std::map<std::string, std::string> kv;
  kv["limits.rho"] = format_real(c.rho);
  kv["limits.kappa"] = format_real(c.kappa);
  kv["limits.lambda"] = format_real(c.lambda);
  kv["scaling.rule"] = c.scaling_rule;
  if (!c.table.empty()) {
    std::string t;
    for (const auto& e : c.table) {
      if (!t.empty()) t += ";";
      t += std::to_string(e.N) + ":" + std::to_string(e.n) + ":" + format_real(e.kappa_n) + ":" +
           format_real(e.lambda_n);
    }
    kv["scaling.table"] = t;
  }
  if (!c.sizes.empty()) kv["run.N"] = format_list(c.sizes);
  kv["region"] = format_region(c.region);
  if (!c.trials.empty()) kv["ldp.trials"] = format_list(c.trials);
  kv["ldp.gamma_samples"] = std::to_string(c.gamma_samples);
  kv["ldp.quad_cells"] = std::to_string(c.quad_cells);
  kv["sandwich.repetitions"] = std::to_string(c.repetitions);
  if (c.sample_N > 0) kv["sample.N"] = std::to_string(c.sample_N);
  kv["sample.count"] = std::to_string(c.sample_count);
  kv["sample.hist_cells"] = std::to_string(c.hist_cells);
  kv["chain.burn_in"] = format_auto(c.chain.burn_in);
  kv["chain.thinning"] = format_auto(c.chain.thinning);
  kv["chain.initial_step"] = format_auto(c.chain.initial_step);
  kv["chain.target_acceptance"] = format_real(c.chain.target_acceptance);
  kv["equilibrium.cells"] = std::to_string(c.eq_cells);
  kv["equilibrium.tol"] = format_real(c.eq_tol);
  kv["equilibrium.max_iters"] = std::to_string(c.eq_max_iters);
  if (with_output_dir) kv["output.dir"] = c.output_dir;
  kv["seed"] = std::to_string(c.seed);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

/// Sorted `key = value` lines of the raw text with comments and spacing removed.
inline std::string canonicalize_text(const std::string& text) {
  std::string out;
  for (const auto& [k, v] : parse_key_values(text)) out += k + " = " + v + "\n";
  return out;
}

enum class Command { Equilibrium, Sample, Ldp, Sandwich };

/// Keys each subcommand cannot run without.
inline void check_for_command(const ExperimentConfig& c, Command cmd) {
  switch (cmd) {
    case Command::Equilibrium:
      return;
    case Command::Sample:
      if (c.sample_N < 1) throw ConfigError("sample: sample.N is required");
      return;
    case Command::Ldp:
    case Command::Sandwich:
      if (c.sizes.empty()) throw ConfigError("run.N is required");
      if (c.trials.empty()) throw ConfigError("ldp.trials is required");
      if (c.trials.size() != 1 && c.trials.size() != c.sizes.size()) {
        throw ConfigError("ldp.trials: give one value or one per entry of run.N");
      }
      for (std::size_t t : c.trials) {
        if (t < 1) throw ConfigError("ldp.trials: must be >= 1");
      }
      if (cmd == Command::Sandwich) {
        if (c.region.empty()) throw ConfigError("sandwich: region must be nonempty");
        if (c.gamma_samples < 1) throw ConfigError("sandwich: ldp.gamma_samples must be >= 1");
        if (c.repetitions < 1) throw ConfigError("sandwich.repetitions: must be >= 1");
      }
      if (c.gamma_samples > 0) {
        const ScalingFamily fam = c.family();
        for (int n : c.sizes) {
          if (fam.params_at(n).n() < 2) {
            throw ConfigError("ldp.gamma_samples: gamma needs n(N) >= 2, N = " + std::to_string(n) + " has n = 1");
          }
        }
      }
      return;
  }
}

}  // namespace jacobi_ldp

#endif  // JACOBI_LDP_CONFIG_HPP
