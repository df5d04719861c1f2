#pragma once

/// Config-driven experiments: validation of a JSON config, dispatch to the
/// numerical modules, and CSV / JSON emission of flat result records.
///
/// Config schema (all keys other than those listed are rejected):
///
///   experiment   quadform_var | fourth_moment | esd | stieltjes_grid |
///                lrv_mse | kernel_check                       (required)
///   seed         unsigned 64-bit integer                       (required)
///   output       output path (the CLI --out flag overrides it)
///   format       "csv" (default) or "json"
///   replicates   Monte Carlo replicates (1e5 for quadform_var and
///                fourth_moment, 500 for lrv_mse)
///   model        {"type": "gaussian_ar1", "rho": r} | {"type": "gaussian_ma",
///                "coeffs": [...]} | {"type": "rademacher_iid"} |
///                {"type": "rademacher_product_mds"}
///   matrices     list of {"generator", "p", "seed" | "seeds"} or {"data": [[...]]}
///   vectors      list of {"generator", "p", "seed" | "seeds"} or {"data": [...]}
///   max_lag      truncation lag of the dependence profile
///   spectral     {"atoms": [{"lambda", "weight"}, ...], "c": c}
///   p            list of dimensions (esd)
///   samples      number of seeded matrices per dimension (esd)
///   emit_eigenvalues  also emit one record per eigenvalue (esd)
///   resolution   discretisation of the dependent-column limit law (esd)
///   grid         {"re_min", "re_max", "points", "im"} (stieltjes_grid)
///   kernel       {"name": ..., "path": csv for tabulated}   (lrv_mse)
///   kernels      list of kernel objects                     (kernel_check)
///   n            list of sample sizes (lrv_mse)
///   bandwidths   {"m": [...]} or {"exponent": e, "scale": s} giving m = s n^e
///   tolerances   {"stieltjes", "max_iter", "jacobi", "epsilon"}
///   assertions   list of {"metric", "min" | "max" | "max_abs" | "equals" [, "tol"]}
///
/// Every assertion is applied to each record carrying its metric.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "quadvar/dependence_models.hpp"
#include "quadvar/longrun.hpp"
#include "quadvar/quadform.hpp"
#include "quadvar/spectral.hpp"

namespace quadvar {

using json = nlohmann::json;

/// Invalid config; `field()` is the dotted path of the offending entry.
class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string field, const std::string& message)
      : std::invalid_argument(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

struct MatrixSpec {
  std::string label;
  std::string generator;  // empty for inline data
  std::size_t p = 0;
  std::uint64_t seed = 0;
  std::optional<Matrix> data;

  Matrix build() const { return data ? *data : make_matrix(generator, p, seed); }
};

struct VectorSpec {
  std::string label;
  std::string generator;
  std::size_t p = 0;
  std::uint64_t seed = 0;
  std::vector<double> data;

  std::vector<double> build() const {
    return generator.empty() ? data : make_vector(generator, p, seed);
  }
};

struct GridSpec {
  double re_min = -2.0;
  double re_max = 6.0;
  std::size_t points = 50;
  double im = 1.0;
};

struct Tolerances {
  double stieltjes = 1e-12;
  long max_iter = 10000;
  double jacobi = 1e-14;
  double epsilon = 1e-3;
};

struct Assertion {
  std::string metric;
  std::optional<double> min, max, max_abs;
  std::optional<std::variant<double, std::string>> equals;
  double tol = 0.0;
};

struct ExperimentConfig {
  std::string experiment;
  std::uint64_t seed = 0;
  std::string output;
  std::string format = "csv";
  std::size_t replicates = 0;
  std::optional<CovarianceModel> model;
  std::vector<MatrixSpec> matrices;
  std::vector<VectorSpec> vectors;
  std::size_t max_lag = 50;
  std::optional<SpectralModel> spectral;
  std::vector<std::size_t> dims;
  std::size_t samples = 1;
  bool emit_eigenvalues = false;
  std::size_t resolution = 512;
  GridSpec grid;
  std::vector<Kernel> kernels;
  std::vector<std::size_t> sample_sizes;
  std::vector<double> bandwidth_list;
  std::optional<std::pair<double, double>> bandwidth_rule;  // (exponent, scale)
  Tolerances tol;
  std::vector<Assertion> assertions;

  /// Defaulted config with sorted keys; the hash is taken over its dump.
  json canonical;
  std::uint64_t hash = 0;

  std::string hash_hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
  }
};

using MetricValue = std::variant<double, std::int64_t, std::string>;

struct ResultRecord {
  std::string experiment;
  std::string config_hash;
  std::vector<std::pair<std::string, MetricValue>> metrics;
  double wall_seconds = 0.0;  // not emitted unless requested

  ResultRecord& set(std::string key, MetricValue value) {
    for (auto& [k, v] : metrics)
      if (k == key) {
        v = std::move(value);
        return *this;
      }
    metrics.emplace_back(std::move(key), std::move(value));
    return *this;
  }
  const MetricValue* find(std::string_view key) const {
    for (const auto& [k, v] : metrics)
      if (k == key) return &v;
    return nullptr;
  }
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"quadform_var", "fourth_moment", "esd",
                                              "stieltjes_grid", "lrv_mse", "kernel_check"};
  return names;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

inline std::string join_path(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline std::string index_path(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

inline void allow_keys(const json& obj, const std::string& path,
                       std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    if (!ok) throw ConfigError(join_path(path, key), "unknown key");
  }
}

inline const json& require(const json& obj, const std::string& path, const std::string& key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ConfigError(join_path(path, key), "required key is missing");
  return *it;
}

inline double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ConfigError(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw ConfigError(path, "expected a finite number");
  return d;
}

inline std::uint64_t get_unsigned(const json& v, const std::string& path) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<std::int64_t>() >= 0)
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  throw ConfigError(path, "expected a non-negative integer");
}

inline std::size_t get_positive(const json& v, const std::string& path) {
  const auto u = get_unsigned(v, path);
  if (u == 0) throw ConfigError(path, "must be >= 1");
  return static_cast<std::size_t>(u);
}

inline double get_positive_number(const json& v, const std::string& path) {
  const double d = get_number(v, path);
  if (!(d > 0.0)) throw ConfigError(path, "must be > 0");
  return d;
}

inline std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) throw ConfigError(path, "expected a string");
  return v.get<std::string>();
}

inline bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) throw ConfigError(path, "expected true or false");
  return v.get<bool>();
}

inline const json& get_array(const json& v, const std::string& path, bool non_empty = true) {
  if (!v.is_array()) throw ConfigError(path, "expected an array");
  if (non_empty && v.empty()) throw ConfigError(path, "must not be empty");
  return v;
}

inline CovarianceModel parse_model(json& m, const std::string& path) {
  const std::string type = get_string(require(m, path, "type"), join_path(path, "type"));
  if (type == "gaussian_ar1") {
    allow_keys(m, path, {"type", "rho"});
    const double rho = get_number(require(m, path, "rho"), join_path(path, "rho"));
    if (!(std::abs(rho) < 1.0)) throw ConfigError(join_path(path, "rho"), "|rho| must be < 1");
    return CovarianceModel::gaussian_ar1(rho);
  }
  if (type == "gaussian_ma") {
    allow_keys(m, path, {"type", "coeffs"});
    const std::string cp = join_path(path, "coeffs");
    const auto& arr = get_array(require(m, path, "coeffs"), cp);
    std::vector<double> coeffs;
    for (std::size_t i = 0; i < arr.size(); ++i) coeffs.push_back(get_number(arr[i], index_path(cp, i)));
    double norm = 0.0;
    for (double c : coeffs) norm += c * c;
    if (!(norm > 0.0)) throw ConfigError(cp, "coefficients must not all be zero");
    return CovarianceModel::gaussian_ma(std::move(coeffs));
  }
  if (type == "rademacher_iid") {
    allow_keys(m, path, {"type"});
    return CovarianceModel::rademacher_iid();
  }
  if (type == "rademacher_product_mds") {
    allow_keys(m, path, {"type"});
    return CovarianceModel::rademacher_product_mds();
  }
  throw ConfigError(join_path(path, "type"), "unknown model type '" + type + "'");
}

inline std::vector<std::uint64_t> parse_seeds(json& obj, const std::string& path) {
  const bool one = obj.contains("seed"), many = obj.contains("seeds");
  if (one && many) throw ConfigError(path, "give either 'seed' or 'seeds', not both");
  if (many) {
    const std::string sp = join_path(path, "seeds");
    const auto& arr = get_array(obj["seeds"], sp);
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(get_unsigned(arr[i], index_path(sp, i)));
    return out;
  }
  if (!one) obj["seed"] = 0;
  return {get_unsigned(obj["seed"], join_path(path, "seed"))};
}

inline std::vector<MatrixSpec> parse_matrices(json& arr, const std::string& path) {
  get_array(arr, path);
  std::vector<MatrixSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ip = index_path(path, i);
    json& m = arr[i];
    if (!m.is_object()) throw ConfigError(ip, "expected an object");
    if (m.contains("data")) {
      allow_keys(m, ip, {"data"});
      const std::string dp = join_path(ip, "data");
      const auto& rows = get_array(m["data"], dp);
      const std::size_t p = rows.size();
      Matrix a(p, p);
      for (std::size_t r = 0; r < p; ++r) {
        const std::string rp = index_path(dp, r);
        const auto& row = get_array(rows[r], rp);
        if (row.size() != p) throw ConfigError(rp, "matrix must be square");
        for (std::size_t c = 0; c < p; ++c) a(r, c) = get_number(row[c], index_path(rp, c));
      }
      out.push_back({"inline" + std::to_string(i), "", p, 0, std::move(a)});
      continue;
    }
    allow_keys(m, ip, {"generator", "p", "seed", "seeds"});
    const std::string gen = get_string(require(m, ip, "generator"), join_path(ip, "generator"));
    const std::size_t p = get_positive(require(m, ip, "p"), join_path(ip, "p"));
    try {
      (void)make_matrix(gen, 1, 0);
    } catch (const std::invalid_argument&) {
      throw ConfigError(join_path(ip, "generator"), "unknown matrix generator '" + gen + "'");
    }
    for (auto s : parse_seeds(m, ip))
      out.push_back({gen + ":p=" + std::to_string(p) + ":seed=" + std::to_string(s), gen, p, s,
                     std::nullopt});
  }
  return out;
}

inline std::vector<VectorSpec> parse_vectors(json& arr, const std::string& path) {
  get_array(arr, path);
  std::vector<VectorSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string ip = index_path(path, i);
    json& v = arr[i];
    if (!v.is_object()) throw ConfigError(ip, "expected an object");
    if (v.contains("data")) {
      allow_keys(v, ip, {"data"});
      const std::string dp = join_path(ip, "data");
      const auto& vals = get_array(v["data"], dp);
      std::vector<double> data;
      for (std::size_t k = 0; k < vals.size(); ++k) data.push_back(get_number(vals[k], index_path(dp, k)));
      out.push_back({"inline" + std::to_string(i), "", data.size(), 0, std::move(data)});
      continue;
    }
    allow_keys(v, ip, {"generator", "p", "seed", "seeds"});
    const std::string gen = get_string(require(v, ip, "generator"), join_path(ip, "generator"));
    const std::size_t p = get_positive(require(v, ip, "p"), join_path(ip, "p"));
    try {
      (void)make_vector(gen, 1, 0);
    } catch (const std::invalid_argument&) {
      throw ConfigError(join_path(ip, "generator"), "unknown vector generator '" + gen + "'");
    }
    for (auto s : parse_seeds(v, ip))
      out.push_back({gen + ":p=" + std::to_string(p) + ":seed=" + std::to_string(s), gen, p, s, {}});
  }
  return out;
}

inline SpectralModel parse_spectral(json& s, const std::string& path) {
  allow_keys(s, path, {"atoms", "c"});
  const std::string ap = join_path(path, "atoms");
  if (!s.contains("atoms")) throw ConfigError(ap, "required key is missing");
  auto& atoms_json = s["atoms"];
  get_array(atoms_json, ap);
  std::vector<SpectralAtom> atoms;
  double total = 0.0;
  for (std::size_t i = 0; i < atoms_json.size(); ++i) {
    const std::string ip = index_path(ap, i);
    auto& a = atoms_json[i];
    allow_keys(a, ip, {"lambda", "weight"});
    const double lambda = get_number(require(a, ip, "lambda"), join_path(ip, "lambda"));
    if (!(lambda >= 0.0)) throw ConfigError(join_path(ip, "lambda"), "must be >= 0");
    const double w = get_positive_number(require(a, ip, "weight"), join_path(ip, "weight"));
    atoms.push_back({lambda, w});
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw ConfigError(ap, "weights sum to " + std::to_string(total) + ", expected 1");
  const double c = get_positive_number(require(s, path, "c"), join_path(path, "c"));
  return SpectralModel(std::move(atoms), c);
}

inline Kernel parse_kernel(json& k, const std::string& path, const std::filesystem::path& base) {
  const std::string name = get_string(require(k, path, "name"), join_path(path, "name"));
  if (name == "tabulated") {
    allow_keys(k, path, {"name", "path"});
    std::filesystem::path file = get_string(require(k, path, "path"), join_path(path, "path"));
    if (file.is_relative()) file = base / file;
    try {
      return Kernel::load_tabulated_csv(file.string());
    } catch (const std::exception& e) {
      throw ConfigError(join_path(path, "path"), e.what());
    }
  }
  allow_keys(k, path, {"name"});
  try {
    return Kernel::by_name(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError(join_path(path, "name"), "unknown kernel '" + name + "'");
  }
}

inline std::vector<std::size_t> parse_size_list(json& v, const std::string& path) {
  if (v.is_number()) v = json::array({v});
  const auto& arr = get_array(v, path);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < arr.size(); ++i) out.push_back(get_positive(arr[i], index_path(path, i)));
  return out;
}

inline Assertion parse_assertion(json& a, const std::string& path) {
  allow_keys(a, path, {"metric", "min", "max", "max_abs", "equals", "tol"});
  Assertion out;
  out.metric = get_string(require(a, path, "metric"), join_path(path, "metric"));
  int checks = 0;
  if (a.contains("min")) out.min = get_number(a["min"], join_path(path, "min")), ++checks;
  if (a.contains("max")) out.max = get_number(a["max"], join_path(path, "max")), ++checks;
  if (a.contains("max_abs"))
    out.max_abs = get_number(a["max_abs"], join_path(path, "max_abs")), ++checks;
  if (a.contains("equals")) {
    const auto& e = a["equals"];
    if (e.is_string())
      out.equals = e.get<std::string>();
    else
      out.equals = get_number(e, join_path(path, "equals"));
    ++checks;
  }
  if (checks == 0) throw ConfigError(path, "assertion needs one of min, max, max_abs, equals");
  if (a.contains("tol")) {
    out.tol = get_number(a["tol"], join_path(path, "tol"));
    if (!(out.tol >= 0.0)) throw ConfigError(join_path(path, "tol"), "must be >= 0");
  }
  return out;
}

struct ParsePosition {
  std::size_t line = 1, column = 1;
};

inline ParsePosition position_of(std::string_view text, std::size_t byte) {
  ParsePosition pos;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++pos.line;
      pos.column = 1;
    } else {
      ++pos.column;
    }
  }
  return pos;
}

}  // namespace detail

/// Parses, checks, defaults and canonicalises a config.  Relative paths in
/// the config (tabulated kernels) resolve against `base_dir`.
inline ExperimentConfig validate(std::string_view text,
                                 const std::filesystem::path& base_dir = {}) {
  using namespace detail;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto pos = position_of(text, e.byte == 0 ? 0 : e.byte - 1);
    throw ConfigError("", "parse error at line " + std::to_string(pos.line) + ", column " +
                              std::to_string(pos.column) + ": " + e.what());
  }
  if (!root.is_object()) throw ConfigError("", "config must be a JSON object");

  ExperimentConfig cfg;
  cfg.experiment = get_string(require(root, "", "experiment"), "experiment");
  const auto& names = experiment_names();
  if (std::find(names.begin(), names.end(), cfg.experiment) == names.end())
    throw ConfigError("experiment", "unknown experiment '" + cfg.experiment + "'");
  const std::string& ex = cfg.experiment;

  std::vector<std::string_view> allowed{"experiment", "seed", "output", "format", "tolerances",
                                        "assertions"};
  if (ex == "quadform_var") allowed.insert(allowed.end(), {"model", "matrices", "replicates", "max_lag"});
  if (ex == "fourth_moment") allowed.insert(allowed.end(), {"model", "vectors", "replicates", "max_lag"});
  if (ex == "esd")
    allowed.insert(allowed.end(),
                   {"model", "spectral", "p", "samples", "emit_eigenvalues", "resolution"});
  if (ex == "stieltjes_grid") allowed.insert(allowed.end(), {"spectral", "grid"});
  if (ex == "lrv_mse")
    allowed.insert(allowed.end(), {"model", "kernel", "n", "bandwidths", "replicates", "max_lag"});
  if (ex == "kernel_check") allowed.insert(allowed.end(), {"kernels"});
  for (const auto& [key, value] : root.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError(key, "unknown key for experiment '" + ex + "'");

  cfg.seed = get_unsigned(require(root, "", "seed"), "seed");
  if (root.contains("output")) cfg.output = get_string(root["output"], "output");
  if (!root.contains("format")) root["format"] = "csv";
  cfg.format = get_string(root["format"], "format");
  if (cfg.format != "csv" && cfg.format != "json")
    throw ConfigError("format", "expected \"csv\" or \"json\"");

  json& tol = root["tolerances"];
  if (tol.is_null()) tol = json::object();
  allow_keys(tol, "tolerances", {"stieltjes", "max_iter", "jacobi", "epsilon"});
  if (!tol.contains("stieltjes")) tol["stieltjes"] = cfg.tol.stieltjes;
  if (!tol.contains("max_iter")) tol["max_iter"] = cfg.tol.max_iter;
  if (!tol.contains("jacobi")) tol["jacobi"] = cfg.tol.jacobi;
  if (!tol.contains("epsilon")) tol["epsilon"] = cfg.tol.epsilon;
  cfg.tol.stieltjes = get_positive_number(tol["stieltjes"], "tolerances.stieltjes");
  cfg.tol.max_iter = static_cast<long>(get_positive(tol["max_iter"], "tolerances.max_iter"));
  cfg.tol.jacobi = get_positive_number(tol["jacobi"], "tolerances.jacobi");
  cfg.tol.epsilon = get_positive_number(tol["epsilon"], "tolerances.epsilon");

  if (root.contains("model")) cfg.model = parse_model(root["model"], "model");
  const bool needs_model = ex == "quadform_var" || ex == "fourth_moment" || ex == "lrv_mse";
  if (needs_model && !cfg.model) throw ConfigError("model", "required key is missing");

  if (ex == "quadform_var" || ex == "fourth_moment" || ex == "lrv_mse") {
    if (!root.contains("replicates")) root["replicates"] = ex == "lrv_mse" ? 500 : 100000;
    cfg.replicates = get_positive(root["replicates"], "replicates");
    const std::size_t min_reps = ex == "lrv_mse" ? 2 : 100;
    if (cfg.replicates < min_reps)
      throw ConfigError("replicates", "must be >= " + std::to_string(min_reps));
  }
  if (ex == "quadform_var") {
    if (!root.contains("matrices")) throw ConfigError("matrices", "required key is missing");
    cfg.matrices = parse_matrices(root["matrices"], "matrices");
    std::size_t largest = 1;
    for (const auto& m : cfg.matrices) largest = std::max(largest, m.p);
    if (!root.contains("max_lag")) root["max_lag"] = largest;
  }
  if (ex == "fourth_moment") {
    if (!root.contains("vectors")) throw ConfigError("vectors", "required key is missing");
    cfg.vectors = parse_vectors(root["vectors"], "vectors");
    std::size_t largest = 1;
    for (const auto& v : cfg.vectors) largest = std::max(largest, v.p);
    if (!root.contains("max_lag")) root["max_lag"] = largest;
  }
  if (ex == "quadform_var" || ex == "fourth_moment" || ex == "lrv_mse") {
    if (!root.contains("max_lag")) root["max_lag"] = 50;
    cfg.max_lag = get_positive(root["max_lag"], "max_lag");
  }

  if (ex == "esd" || ex == "stieltjes_grid") {
    if (!root.contains("spectral")) throw ConfigError("spectral", "required key is missing");
    cfg.spectral = parse_spectral(root["spectral"], "spectral");
  }
  if (ex == "esd") {
    if (!cfg.model) {
      root["model"] = {{"type", "gaussian_ar1"}, {"rho", 0.0}};
      cfg.model = CovarianceModel::gaussian_ar1(0.0);
    }
    if (!root.contains("p")) throw ConfigError("p", "required key is missing");
    cfg.dims = parse_size_list(root["p"], "p");
    for (std::size_t i = 0; i < cfg.dims.size(); ++i)
      if (cfg.dims[i] < cfg.spectral->atoms().size())
        throw ConfigError(index_path("p", i), "must be at least the number of spectral atoms");
    if (!root.contains("samples")) root["samples"] = 1;
    cfg.samples = get_positive(root["samples"], "samples");
    if (!root.contains("emit_eigenvalues")) root["emit_eigenvalues"] = false;
    cfg.emit_eigenvalues = get_bool(root["emit_eigenvalues"], "emit_eigenvalues");
    if (!root.contains("resolution")) root["resolution"] = 512;
    cfg.resolution = get_positive(root["resolution"], "resolution");
  }
  if (ex == "stieltjes_grid") {
    json& g = root["grid"];
    if (g.is_null()) g = json::object();
    allow_keys(g, "grid", {"re_min", "re_max", "points", "im"});
    if (!g.contains("re_min")) g["re_min"] = cfg.grid.re_min;
    if (!g.contains("re_max")) g["re_max"] = cfg.grid.re_max;
    if (!g.contains("points")) g["points"] = cfg.grid.points;
    if (!g.contains("im")) g["im"] = cfg.grid.im;
    cfg.grid.re_min = get_number(g["re_min"], "grid.re_min");
    cfg.grid.re_max = get_number(g["re_max"], "grid.re_max");
    if (!(cfg.grid.re_max >= cfg.grid.re_min)) throw ConfigError("grid.re_max", "must be >= re_min");
    cfg.grid.points = get_positive(g["points"], "grid.points");
    cfg.grid.im = get_positive_number(g["im"], "grid.im");
  }

  const auto base = base_dir.empty() ? std::filesystem::path(".") : base_dir;
  if (ex == "lrv_mse") {
    if (!root.contains("kernel")) throw ConfigError("kernel", "required key is missing");
    cfg.kernels.push_back(parse_kernel(root["kernel"], "kernel", base));
    if (!root.contains("n")) throw ConfigError("n", "required key is missing");
    cfg.sample_sizes = parse_size_list(root["n"], "n");
    if (!root.contains("bandwidths")) throw ConfigError("bandwidths", "required key is missing");
    json& b = root["bandwidths"];
    allow_keys(b, "bandwidths", {"m", "exponent", "scale"});
    if (b.contains("m")) {
      if (b.contains("exponent") || b.contains("scale"))
        throw ConfigError("bandwidths", "give either 'm' or 'exponent'/'scale', not both");
      const auto& arr = get_array(b["m"], "bandwidths.m");
      for (std::size_t i = 0; i < arr.size(); ++i)
        cfg.bandwidth_list.push_back(get_positive_number(arr[i], index_path("bandwidths.m", i)));
    } else {
      if (!b.contains("exponent")) throw ConfigError("bandwidths.exponent", "required key is missing");
      if (!b.contains("scale")) b["scale"] = 1.0;
      cfg.bandwidth_rule = {get_positive_number(b["exponent"], "bandwidths.exponent"),
                            get_positive_number(b["scale"], "bandwidths.scale")};
    }
  }
  if (ex == "kernel_check") {
    if (!root.contains("kernels")) throw ConfigError("kernels", "required key is missing");
    json& arr = root["kernels"];
    get_array(arr, "kernels");
    for (std::size_t i = 0; i < arr.size(); ++i)
      cfg.kernels.push_back(parse_kernel(arr[i], index_path("kernels", i), base));
  }

  if (!root.contains("assertions")) root["assertions"] = json::array();
  json& asserts = root["assertions"];
  get_array(asserts, "assertions", false);
  for (std::size_t i = 0; i < asserts.size(); ++i)
    cfg.assertions.push_back(parse_assertion(asserts[i], index_path("assertions", i)));

  cfg.canonical = root;
  json hashed = root;
  hashed.erase("output");
  hashed.erase("format");
  cfg.hash = fnv1a(hashed.dump());
  return cfg;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return validate(text.str(), path.parent_path());
}

/// Replaces the seed and refreshes the canonical form and hash.
inline void override_seed(ExperimentConfig& cfg, std::uint64_t seed) {
  cfg.seed = seed;
  cfg.canonical["seed"] = seed;
  json hashed = cfg.canonical;
  hashed.erase("output");
  hashed.erase("format");
  cfg.hash = fnv1a(hashed.dump());
}

namespace detail {

inline ResultRecord new_record(const ExperimentConfig& cfg) {
  return ResultRecord{cfg.experiment, cfg.hash_hex(), {}, 0.0};
}

inline std::vector<ResultRecord> run_quadform_var(const ExperimentConfig& cfg) {
  const auto& model = *cfg.model;
  std::vector<ResultRecord> out;
  for (std::size_t idx = 0; idx < cfg.matrices.size(); ++idx) {
    const auto& spec = cfg.matrices[idx];
    const Matrix a = spec.build();
    const auto profile = dependence_profile(model, cfg.max_lag);
    const auto mc = mc_variance(model, a, cfg.replicates, derive_seed(cfg.seed, idx));
    auto rec = new_record(cfg);
    rec.set("model", model.name()).set("matrix", spec.label);
    rec.set("p", static_cast<std::int64_t>(a.rows()));
    rec.set("mc_mean", mc.mean).set("mc_variance", mc.variance);
    rec.set("mc_std_error", mc.std_error_of_variance);
    double exact = 0.0;
    if (exact_variance(model, a, exact)) {
      rec.set("exact_variance", exact);
      rec.set("z_score", mc.std_error_of_variance > 0.0
                             ? (mc.variance - exact) / mc.std_error_of_variance
                             : (mc.variance == exact ? 0.0 : HUGE_VAL));
    }
    bool hollow = true;
    for (std::size_t i = 0; i < a.rows(); ++i) hollow = hollow && a(i, i) == 0.0;
    rec.set("hollow", static_cast<std::int64_t>(hollow));
    const auto general = variance_bound(profile, a);
    rec.set("trace_aat", general.trace_term);
    rec.set("variance_bound_c_free", general.bound_value);
    if (hollow) rec.set("hollow_bound_c_free", hollow_variance_bound(profile, a).bound_value);
    const double var = rec.find("exact_variance") ? exact : mc.variance;
    rec.set("ratio_to_bound",
            general.bound_value == 0.0 ? (var == 0.0 ? 0.0 : HUGE_VAL) : var / general.bound_value);
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<ResultRecord> run_fourth_moment(const ExperimentConfig& cfg) {
  const auto& model = *cfg.model;
  std::vector<ResultRecord> out;
  for (std::size_t idx = 0; idx < cfg.vectors.size(); ++idx) {
    const auto& spec = cfg.vectors[idx];
    const auto a = spec.build();
    const auto profile = dependence_profile(model, cfg.max_lag);
    const auto mc = mc_fourth_moment(model, a, cfg.replicates, derive_seed(cfg.seed, idx));
    auto rec = new_record(cfg);
    rec.set("model", model.name()).set("vector", spec.label);
    rec.set("p", static_cast<std::int64_t>(a.size()));
    rec.set("mc_fourth_moment", mc.value).set("mc_std_error", mc.std_error);
    std::optional<double> exact;
    if (model.is_gaussian())
      exact = gaussian_fourth_moment(covariance_matrix(model, a.size()), a);
    else if (a.size() <= 20)
      exact = brute_force_fourth_moment(model, a);
    if (exact) {
      rec.set("exact_fourth_moment", *exact);
      rec.set("z_score", mc.std_error > 0.0 ? (mc.value - *exact) / mc.std_error
                                            : (mc.value == *exact ? 0.0 : HUGE_VAL));
    }
    const auto bound = fourth_moment_bound(profile, a);
    rec.set("fourth_moment_bound_c_free", bound.bound_value);
    const double value = exact.value_or(mc.value);
    rec.set("ratio_to_bound", bound.bound_value == 0.0 ? (value == 0.0 ? 0.0 : HUGE_VAL)
                                                       : value / bound.bound_value);
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<ResultRecord> run_esd(const ExperimentConfig& cfg) {
  const auto& model = *cfg.model;
  const auto& spec = *cfg.spectral;
  const LimitLawCdf cdf(column_population_law(model, spec, cfg.resolution), cfg.tol.epsilon);
  std::vector<ResultRecord> out;
  for (std::size_t p : cfg.dims) {
    const auto n = static_cast<std::size_t>(
        std::max(1.0, std::round(static_cast<double>(p) / spec.c())));
    for (std::size_t s = 0; s < cfg.samples; ++s) {
      const auto sample_seed = derive_seed(cfg.seed, s);
      const Matrix S = sample_covariance_matrix(model, spec, p, n, sample_seed);
      const ESD esd = jacobi_eigenvalues(S, cfg.tol.jacobi);
      double sum = 0.0;
      for (double l : esd.eigenvalues) sum += l;
      const double trace = S.trace();
      auto rec = new_record(cfg);
      rec.set("record", std::string("summary"));
      rec.set("p", static_cast<std::int64_t>(p)).set("n", static_cast<std::int64_t>(n));
      rec.set("sample", static_cast<std::int64_t>(s));
      rec.set("kolmogorov_distance", kolmogorov_distance(esd, cdf));
      rec.set("min_eigenvalue", esd.eigenvalues.front());
      rec.set("max_eigenvalue", esd.eigenvalues.back());
      rec.set("trace_relative_error", trace == 0.0 ? std::abs(sum) : std::abs(sum - trace) / std::abs(trace));
      rec.set("limit_cdf_mass", cdf.total_mass());
      out.push_back(std::move(rec));
      if (cfg.emit_eigenvalues)
        for (std::size_t i = 0; i < esd.size(); ++i) {
          auto ev = new_record(cfg);
          ev.set("record", std::string("eigenvalue"));
          ev.set("p", static_cast<std::int64_t>(p)).set("n", static_cast<std::int64_t>(n));
          ev.set("sample", static_cast<std::int64_t>(s));
          ev.set("index", static_cast<std::int64_t>(i));
          ev.set("eigenvalue", esd.eigenvalues[i]);
          out.push_back(std::move(ev));
        }
    }
  }
  return out;
}

inline std::vector<ResultRecord> run_stieltjes_grid(const ExperimentConfig& cfg) {
  const auto& spec = *cfg.spectral;
  const std::size_t points = cfg.grid.points;
  std::vector<StieltjesValue> values(points);
  std::vector<complex> zs(points);
  for (std::size_t i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(points - 1);
    zs[i] = complex(cfg.grid.re_min + t * (cfg.grid.re_max - cfg.grid.re_min), cfg.grid.im);
  }
  parallel_for(points, [&](std::size_t i) {
    values[i] = limit_stieltjes(spec, zs[i], cfg.tol.stieltjes, cfg.tol.max_iter);
  });
  const bool single = spec.atoms().size() == 1;
  const double lambda = spec.atoms().front().lambda;
  std::vector<ResultRecord> out;
  for (std::size_t i = 0; i < points; ++i) {
    const auto& v = values[i];
    auto rec = new_record(cfg);
    rec.set("re_z", v.z.real()).set("im_z", v.z.imag());
    rec.set("re_m", v.m.real()).set("im_m", v.m.imag());
    rec.set("residual", stieltjes_residual(spec, v.z, v.m));
    rec.set("iterations", static_cast<std::int64_t>(v.iterations));
    rec.set("density", std::max(0.0, v.m.imag()) / std::numbers::pi);
    if (single) {
      // An atom at lambda rescales the Marchenko-Pastur transform.
      const complex ref =
          lambda == 0.0 ? -1.0 / v.z : mp_closed_form(spec.c(), v.z / lambda) / lambda;
      rec.set("re_closed_form", ref.real()).set("im_closed_form", ref.imag());
      rec.set("abs_diff", std::abs(v.m - ref));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

inline std::vector<ResultRecord> run_lrv_mse(const ExperimentConfig& cfg) {
  const auto& model = *cfg.model;
  const Kernel& k = cfg.kernels.front();
  const auto profile = dependence_profile(model, cfg.max_lag);
  std::vector<ResultRecord> out;
  for (std::size_t idx = 0; idx < cfg.sample_sizes.size(); ++idx) {
    const std::size_t n = cfg.sample_sizes[idx];
    std::vector<double> ms = cfg.bandwidth_list;
    if (cfg.bandwidth_rule)
      ms = {cfg.bandwidth_rule->second * std::pow(static_cast<double>(n), cfg.bandwidth_rule->first)};
    const auto mc = mc_lrv(model, k, n, ms, cfg.replicates, derive_seed(cfg.seed, idx));
    for (const auto& r : mc) {
      const auto report = mse_bound(profile, model, k, r.m, n);
      const auto bias = exact_bias(model, k, r.m, n);
      auto rec = new_record(cfg);
      rec.set("n", static_cast<std::int64_t>(n)).set("m", r.m).set("kernel", k.name());
      rec.set("mc_mse", r.mse).set("mc_mse_std_error", r.mse_std_error).set("mc_mean", r.mean);
      rec.set("exact_bias", report.exact_bias).set("bias_leading", bias.leading);
      rec.set("variance_bound_c_free", report.variance_bound_c_free);
      rec.set("squared_bias_leading", report.squared_bias_leading);
      rec.set("sigma2_true", report.sigma2_true);
      const double denom = report.variance_bound_c_free + report.squared_bias_leading;
      rec.set("mse_to_bound_ratio", r.mse / denom);
      out.push_back(std::move(rec));
    }
  }
  return out;
}

inline std::vector<ResultRecord> run_kernel_check(const ExperimentConfig& cfg) {
  std::vector<ResultRecord> out;
  for (const auto& k : cfg.kernels) {
    const auto r = check_assumptions(k);
    auto rec = new_record(cfg);
    rec.set("kernel", k.name());
    rec.set("assumption_a", std::string(r.a_pass ? "pass" : "fail"));
    rec.set("assumption_b", std::string(r.b_pass ? "pass" : "fail"));
    rec.set("assumption_c", std::string(to_string(r.c)));
    rec.set("continuous_at_zero", static_cast<std::int64_t>(r.continuous_at_zero));
    rec.set("sup_abs", r.sup_abs);
    rec.set("envelope_sq_integral", r.envelope_sq_integral);
    rec.set("q", r.exponent.q).set("k_q", r.exponent.k_q);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace detail

/// Runs the configured experiment.  Module errors are rethrown as
/// ConfigError naming the experiment.
inline std::vector<ResultRecord> run(const ExperimentConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<ResultRecord> records;
  try {
    const auto& ex = cfg.experiment;
    if (ex == "quadform_var") records = detail::run_quadform_var(cfg);
    else if (ex == "fourth_moment") records = detail::run_fourth_moment(cfg);
    else if (ex == "esd") records = detail::run_esd(cfg);
    else if (ex == "stieltjes_grid") records = detail::run_stieltjes_grid(cfg);
    else if (ex == "lrv_mse") records = detail::run_lrv_mse(cfg);
    else if (ex == "kernel_check") records = detail::run_kernel_check(cfg);
    else throw ConfigError("experiment", "unknown experiment '" + ex + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw std::runtime_error(cfg.experiment + ": " + e.what());
  }
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  for (auto& r : records) r.wall_seconds = wall;
  return records;
}

struct AssertionFailure {
  std::size_t assertion = 0;
  std::size_t record = 0;
  std::string message;
};

/// Checks every assertion against the records carrying its metric.  An
/// assertion whose metric appears in no record fails.
inline std::vector<AssertionFailure> check_assertions(const ExperimentConfig& cfg,
                                                      const std::vector<ResultRecord>& records) {
  std::vector<AssertionFailure> failures;
  for (std::size_t ai = 0; ai < cfg.assertions.size(); ++ai) {
    const auto& a = cfg.assertions[ai];
    bool seen = false;
    for (std::size_t ri = 0; ri < records.size(); ++ri) {
      const MetricValue* v = records[ri].find(a.metric);
      if (!v) continue;
      seen = true;
      auto fail = [&](const std::string& why) {
        failures.push_back({ai, ri, "record " + std::to_string(ri) + ": " + a.metric + " " + why});
      };
      if (const auto* s = std::get_if<std::string>(v)) {
        const auto* want = a.equals ? std::get_if<std::string>(&*a.equals) : nullptr;
        if (!want || a.min || a.max || a.max_abs) {
          fail("is a string; only string 'equals' applies");
        } else if (*s != *want) {
          fail("= '" + *s + "', expected '" + *want + "'");
        }
        continue;
      }
      const double x = std::holds_alternative<double>(*v)
                           ? std::get<double>(*v)
                           : static_cast<double>(std::get<std::int64_t>(*v));
      const std::string shown = std::to_string(x);
      if (a.min && !(x >= *a.min)) fail("= " + shown + " < min " + std::to_string(*a.min));
      if (a.max && !(x <= *a.max)) fail("= " + shown + " > max " + std::to_string(*a.max));
      if (a.max_abs && !(std::abs(x) <= *a.max_abs))
        fail("= " + shown + " exceeds max_abs " + std::to_string(*a.max_abs));
      if (a.equals) {
        if (const auto* want = std::get_if<double>(&*a.equals)) {
          if (!(std::abs(x - *want) <= a.tol))
            fail("= " + shown + ", expected " + std::to_string(*want) + " +- " + std::to_string(a.tol));
        } else {
          fail("is numeric but 'equals' is a string");
        }
      }
    }
    if (!seen)
      failures.push_back({ai, records.size(), "no record carries metric '" + a.metric + "'"});
  }
  return failures;
}

enum class OutputFormat { Csv, Json };

inline OutputFormat parse_format(std::string_view s) {
  if (s == "csv") return OutputFormat::Csv;
  if (s == "json") return OutputFormat::Json;
  throw std::invalid_argument("unknown output format '" + std::string(s) + "'");
}

namespace detail {

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

inline std::string csv_value(const MetricValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) return format_double(x);
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else return csv_field(x);
      },
      v);
}

inline std::string json_value(const MetricValue& v) {
  return std::visit(
      [](const auto& x) -> std::string {
        using T = std::decay_t<decltype(x)>;
        if constexpr (std::is_same_v<T, double>) return std::isfinite(x) ? format_double(x) : "null";
        else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(x);
        else return json(x).dump();
      },
      v);
}

inline std::vector<std::string> columns(const std::vector<ResultRecord>& records,
                                        bool include_timing) {
  std::vector<std::string> cols{"experiment", "config_hash"};
  std::set<std::string> seen(cols.begin(), cols.end());
  for (const auto& r : records)
    for (const auto& [k, v] : r.metrics)
      if (seen.insert(k).second) cols.push_back(k);
  if (include_timing) cols.push_back("wall_seconds");
  return cols;
}

}  // namespace detail

/// Serialises records.  CSV has a header row holding the union of metric
/// names in first-seen order (missing cells are empty); JSON is an array of
/// flat objects.  Doubles use 17 significant digits.
inline std::string format_records(const std::vector<ResultRecord>& records, OutputFormat format,
                                  bool include_timing = false) {
  if (records.empty()) throw std::invalid_argument("emit: no records");
  const auto cols = detail::columns(records, include_timing);
  std::string out;
  if (format == OutputFormat::Csv) {
    for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + detail::csv_field(cols[c]);
    out += "\r\n";
    for (const auto& r : records) {
      for (std::size_t c = 0; c < cols.size(); ++c) {
        if (c) out += ',';
        if (cols[c] == "experiment") out += detail::csv_field(r.experiment);
        else if (cols[c] == "config_hash") out += r.config_hash;
        else if (include_timing && c + 1 == cols.size()) out += detail::format_double(r.wall_seconds);
        else if (const auto* v = r.find(cols[c])) out += detail::csv_value(*v);
      }
      out += "\r\n";
    }
    return out;
  }
  out += "[\n";
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    out += "  {\"experiment\": " + json(r.experiment).dump() +
           ", \"config_hash\": " + json(r.config_hash).dump();
    for (const auto& [k, v] : r.metrics) out += ", " + json(k).dump() + ": " + detail::json_value(v);
    if (include_timing) out += ", \"wall_seconds\": " + detail::format_double(r.wall_seconds);
    out += i + 1 < records.size() ? "},\n" : "}\n";
  }
  out += "]\n";
  return out;
}

/// Writes records to `path` (single writer, binary mode).
inline void emit(const std::vector<ResultRecord>& records, OutputFormat format,
                 const std::filesystem::path& path, bool include_timing = false) {
  const std::string text = format_records(records, format, include_timing);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

}  // namespace quadvar
