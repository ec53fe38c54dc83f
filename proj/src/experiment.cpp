#include "ppfactor/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "ppfactor/direction.hpp"
#include "ppfactor/parallel.hpp"

namespace ppfactor {

namespace fs = std::filesystem;

namespace {

[[noreturn]] void field_error(const std::string& field, const std::string& what) {
  throw ConfigError("config field '" + field + "': " + what);
}

void reject_unknown(const Json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) field_error(where.empty() ? "<root>" : where, "expected an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      field_error(where.empty() ? it.key() : where + "." + it.key(), "unknown key");
    }
  }
}

double get_number(const Json& obj, const std::string& key, const std::string& path, double fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number()) field_error(path, "expected a number");
  return v.get<double>();
}

long long get_integer(const Json& obj, const std::string& key, const std::string& path, long long fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_number_integer()) field_error(path, "expected an integer");
  return v.get<long long>();
}

bool get_bool(const Json& obj, const std::string& key, const std::string& path, bool fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_boolean()) field_error(path, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const Json& obj, const std::string& key, const std::string& path,
                       const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const Json& v = obj.at(key);
  if (!v.is_string()) field_error(path, "expected a string");
  return v.get<std::string>();
}

Vec get_vector(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) field_error(path, "expected a non-empty array of numbers");
  Vec out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) field_error(path, "expected a non-empty array of numbers");
    out[static_cast<Eigen::Index>(i)] = v[i].get<double>();
  }
  return out;
}

Mat get_matrix(const Json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) field_error(path, "expected an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(v.size());
  Vec first = get_vector(v[0], path + "[0]");
  Mat out(rows, first.size());
  for (Eigen::Index r = 0; r < rows; ++r) {
    Vec row = get_vector(v[static_cast<std::size_t>(r)], path + "[" + std::to_string(r) + "]");
    if (row.size() != first.size()) field_error(path, "rows have different lengths");
    out.row(r) = row.transpose();
  }
  return out;
}

int preset_index(const std::string& name) {
  if (name == "sim1") return 1;
  if (name == "sim2") return 2;
  if (name == "sim3") return 3;
  field_error("density_spec.preset", "unknown preset '" + name + "' (expected sim1, sim2 or sim3)");
}

std::shared_ptr<const EllipticalDensity> build_elliptical(const Json& spec, const std::string& path) {
  reject_unknown(spec, path, {"type", "mu", "sigma", "generator", "param"});
  if (!spec.contains("mu")) field_error(path + ".mu", "required");
  if (!spec.contains("sigma")) field_error(path + ".sigma", "required");
  Vec mu = get_vector(spec.at("mu"), path + ".mu");
  Mat sigma = get_matrix(spec.at("sigma"), path + ".sigma");
  if (sigma.rows() != mu.size() || sigma.cols() != mu.size()) field_error(path + ".sigma", "must be a square matrix matching mu");
  Generator gen = Generator::from_label(get_string(spec, "generator", path + ".generator", "gaussian"),
                                        get_number(spec, "param", path + ".param", 1.0));
  return std::make_shared<EllipticalDensity>(mu, sigma, gen);
}

Density1DPtr build_factor(const Json& spec, const std::string& path) {
  std::string type = get_string(spec, "type", path + ".type", "");
  if (type == "gumbel") {
    reject_unknown(spec, path, {"type", "loc", "scale"});
    double scale = get_number(spec, "scale", path + ".scale", 1.0);
    if (!(scale > 0.0)) field_error(path + ".scale", "must be positive");
    return std::make_shared<GumbelDensity1D>(get_number(spec, "loc", path + ".loc", 0.0), scale);
  }
  if (type == "elliptical") {
    reject_unknown(spec, path, {"type", "mu", "scale", "generator", "param"});
    double scale = get_number(spec, "scale", path + ".scale", 1.0);
    if (!(scale > 0.0)) field_error(path + ".scale", "must be positive");
    Generator gen = Generator::from_label(get_string(spec, "generator", path + ".generator", "gaussian"),
                                          get_number(spec, "param", path + ".param", 1.0));
    return std::make_shared<EllipticalDensity1D>(get_number(spec, "mu", path + ".mu", 0.0), scale, gen);
  }
  field_error(path + ".type", "expected \"gumbel\" or \"elliptical\"");
}

int density_dim(const Json& spec) {
  if (!spec.is_object()) field_error("density_spec", "expected an object");
  if (spec.contains("preset")) {
    const Json& p = spec.at("preset");
    if (!p.is_string()) field_error("density_spec.preset", "expected a string");
    return simulation_density(preset_index(p.get<std::string>()))->dim();
  }
  std::string type = get_string(spec, "type", "density_spec.type", "");
  if (type == "elliptical" && spec.contains("mu")) return static_cast<int>(get_vector(spec.at("mu"), "density_spec.mu").size());
  if (type == "product" && spec.contains("basis")) return static_cast<int>(get_matrix(spec.at("basis"), "density_spec.basis").rows());
  return 0;
}

Json num(double x) {
  if (!std::isfinite(x)) return nullptr;
  return round6(x);
}

Json vec_json(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(num(v[i]));
  return a;
}

Json criterion_json(const CriterionValue& c) {
  Json j;
  j["value"] = num(c.value);
  j["variance_hat"] = num(c.variance_hat);
  j["se"] = num(c.n_used > 0 ? std::sqrt(std::max(0.0, c.variance_hat) / c.n_used) : 0.0);
  j["n_used"] = c.n_used;
  j["clamp_events"] = c.clamp_events;
  j["degenerate"] = c.degenerate;
  return j;
}

Json test_json(const StopTestResult& t) {
  Json j;
  j["statistic"] = num(t.statistic);
  j["z"] = num(t.z);
  j["p_value"] = num(t.p_value);
  j["alpha"] = num(t.alpha);
  j["mode"] = threshold_mode_name(t.mode);
  j["quantile"] = num(t.quantile);
  j["threshold"] = num(t.threshold);
  j["in_ellipsoid"] = t.in_ellipsoid;
  j["in_ellipsoid_paper"] = t.in_ellipsoid_paper;
  j["in_ellipsoid_corrected"] = t.in_ellipsoid_corrected;
  j["degenerate"] = t.degenerate;
  j["decision"] = t.stop ? "stop" : "continue";
  return j;
}

Json opt_json(const OptResult& r) {
  Json j;
  j["best_value"] = num(r.best_value);
  j["n_evals"] = r.n_evals;
  j["n_nonfinite"] = r.n_nonfinite;
  j["converged"] = r.converged;
  return j;
}

std::string csv_number(double x) { return num(x).dump(); }

std::string verdict(bool b) { return b ? "True" : "False"; }

std::string point_field(const Vec& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ';';
    s += csv_number(v[i]);
  }
  return s;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("failed writing " + path.string());
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng rng = make_rng(seed, stream);
  return rng();
}

const char* method_choice_name(MethodChoice m) {
  switch (m) {
    case MethodChoice::Ours:
      return "ours";
    case MethodChoice::Huber:
      return "huber";
    case MethodChoice::Both:
      return "both";
  }
  return "ours";
}

}  // namespace

double round6(double x) {
  if (!std::isfinite(x) || x == 0.0) return x == 0.0 ? 0.0 : x;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return std::strtod(buf, nullptr);
}

void ExperimentConfig::validate() const {
  const bool has_density = !density_spec.is_null();
  const bool has_data = !data_path.empty();
  if (has_density == has_data) {
    throw ConfigError("config field 'density_spec'/'data_path': exactly one of the two must be given");
  }
  if (mode == ExperimentMode::Simulate && !has_density) field_error("mode", "simulate needs density_spec");
  if (mode == ExperimentMode::Ingest && !has_data) field_error("mode", "ingest needs data_path");
  if (d < 1) field_error("d", "must be a positive integer");
  if (mode == ExperimentMode::Simulate && m <= d) field_error("m", "must exceed d");
  if (!(pursuit.alpha > 0.0 && pursuit.alpha < 1.0)) field_error("alpha", "must satisfy 0 < alpha < 1");
  if (pursuit.nu > 0.0 || pursuit.nu == 0.0) {
    if (!(pursuit.nu > 0.0 && pursuit.nu < nu_upper(d))) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "must satisfy 0 < nu < 1/(4+d) = %.6g for d = %d", nu_upper(d), d);
      field_error("nu", buf);
    }
  }
  if (outliers.count < 0) field_error("outliers.count", "must be non-negative");
  if (outliers.count > 0 && outliers.point.size() != d) field_error("outliers.point", "must have d coordinates");
  if (outliers.count >= m && mode == ExperimentMode::Simulate) field_error("outliers.count", "must be below m");
  if (kl_mc < 0) field_error("kl_mc", "must be non-negative");
  if (output_dir.empty()) field_error("output_dir", "must not be empty");
  try {
    pursuit.validate(d);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig parse_config(const Json& doc, const fs::path& base_dir) {
  reject_unknown(doc, "",
                 {"mode", "density_spec", "data_path", "d", "m", "method", "alpha", "nu", "anneal", "seed",
                  "output_dir", "threshold_mode", "floor_mode", "k_max", "stop_on_initial_test", "orthogonalize",
                  "y_factor", "marginal_draws", "criterion", "instrumental", "outliers", "kl_mc"});
  ExperimentConfig cfg;
  PursuitConfig& p = cfg.pursuit;

  if (doc.contains("density_spec")) {
    cfg.density_spec = doc.at("density_spec");
    if (!cfg.density_spec.is_object()) field_error("density_spec", "expected an object");
  }
  if (doc.contains("data_path")) {
    std::string path = get_string(doc, "data_path", "data_path", "");
    if (path.empty()) field_error("data_path", "must not be empty");
    fs::path resolved(path);
    if (resolved.is_relative() && !base_dir.empty()) resolved = base_dir / resolved;
    cfg.data_path = resolved.string();
  }
  const bool has_density = doc.contains("density_spec");
  const bool has_data = doc.contains("data_path");
  if (has_density && has_data) {
    throw ConfigError("config field 'density_spec'/'data_path': exactly one of the two must be given");
  }
  if (!has_density && !has_data) {
    throw ConfigError("config field 'density_spec'/'data_path': one of the two is required");
  }

  std::string mode = get_string(doc, "mode", "mode", has_density ? "simulate" : "ingest");
  if (mode == "simulate") {
    cfg.mode = ExperimentMode::Simulate;
  } else if (mode == "ingest") {
    cfg.mode = ExperimentMode::Ingest;
  } else {
    field_error("mode", "expected \"simulate\" or \"ingest\"");
  }

  int spec_d = has_density ? density_dim(cfg.density_spec) : 0;
  cfg.d = static_cast<int>(get_integer(doc, "d", "d", spec_d));
  if (spec_d > 0 && cfg.d != spec_d) field_error("d", "does not match the dimension of density_spec");
  if (cfg.d < 1) field_error("d", "required (positive integer)");

  int default_m = 0;
  if (has_density && cfg.density_spec.contains("preset")) {
    default_m = simulation_default_m(preset_index(cfg.density_spec.at("preset").get<std::string>()));
  }
  cfg.m = static_cast<int>(get_integer(doc, "m", "m", default_m));
  if (cfg.mode == ExperimentMode::Simulate && cfg.m < 1) field_error("m", "required (positive integer)");

  std::string method = get_string(doc, "method", "method", "ours");
  if (method == "ours") {
    cfg.method = MethodChoice::Ours;
  } else if (method == "huber") {
    cfg.method = MethodChoice::Huber;
  } else if (method == "both") {
    cfg.method = MethodChoice::Both;
  } else {
    field_error("method", "expected \"ours\", \"huber\" or \"both\"");
  }

  p.alpha = get_number(doc, "alpha", "alpha", p.alpha);
  if (doc.contains("nu")) {
    p.nu = get_number(doc, "nu", "nu", 0.0);
    if (!(p.nu > 0.0)) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "must satisfy 0 < nu < 1/(4+d) = %.6g for d = %d", nu_upper(cfg.d), cfg.d);
      field_error("nu", buf);
    }
  }
  long long seed = get_integer(doc, "seed", "seed", 1);
  if (seed < 0) field_error("seed", "must be non-negative");
  p.seed = static_cast<std::uint64_t>(seed);

  std::string tm = get_string(doc, "threshold_mode", "threshold_mode", "corrected");
  if (tm == "paper") {
    p.threshold_mode = ThresholdMode::Paper;
  } else if (tm == "corrected") {
    p.threshold_mode = ThresholdMode::Corrected;
  } else {
    field_error("threshold_mode", "expected \"paper\" or \"corrected\"");
  }
  std::string fm = get_string(doc, "floor_mode", "floor_mode", "likelihood_ratio");
  if (fm == "likelihood_ratio") {
    p.floor_mode = FloorMode::LikelihoodRatio;
  } else if (fm == "absolute") {
    p.floor_mode = FloorMode::Absolute;
  } else {
    field_error("floor_mode", "expected \"likelihood_ratio\" or \"absolute\"");
  }
  p.k_max = static_cast<int>(get_integer(doc, "k_max", "k_max", -1));
  p.stop_on_initial_test = get_bool(doc, "stop_on_initial_test", "stop_on_initial_test", p.stop_on_initial_test);
  p.orthogonalize = get_bool(doc, "orthogonalize", "orthogonalize", p.orthogonalize);
  p.y_factor = get_number(doc, "y_factor", "y_factor", p.y_factor);
  p.marginal_draws = static_cast<int>(get_integer(doc, "marginal_draws", "marginal_draws", p.marginal_draws));

  if (doc.contains("anneal")) {
    const Json& a = doc.at("anneal");
    reject_unknown(a, "anneal",
                   {"n_steps", "initial_temp", "cooling", "proposal_sigma", "min_sigma_fraction", "n_restarts",
                    "n_probes", "rng_seed", "polish_steps", "trace_stride"});
    AnnealConfig& c = p.anneal;
    c.n_steps = static_cast<int>(get_integer(a, "n_steps", "anneal.n_steps", c.n_steps));
    c.initial_temp = get_number(a, "initial_temp", "anneal.initial_temp", c.initial_temp);
    c.cooling = get_number(a, "cooling", "anneal.cooling", c.cooling);
    c.proposal_sigma = get_number(a, "proposal_sigma", "anneal.proposal_sigma", c.proposal_sigma);
    c.min_sigma_fraction = get_number(a, "min_sigma_fraction", "anneal.min_sigma_fraction", c.min_sigma_fraction);
    c.n_restarts = static_cast<int>(get_integer(a, "n_restarts", "anneal.n_restarts", c.n_restarts));
    c.n_probes = static_cast<int>(get_integer(a, "n_probes", "anneal.n_probes", c.n_probes));
    long long rs = get_integer(a, "rng_seed", "anneal.rng_seed", static_cast<long long>(c.rng_seed));
    if (rs < 0) field_error("anneal.rng_seed", "must be non-negative");
    c.rng_seed = static_cast<std::uint64_t>(rs);
    c.polish_steps = static_cast<int>(get_integer(a, "polish_steps", "anneal.polish_steps", c.polish_steps));
    c.trace_stride = static_cast<int>(get_integer(a, "trace_stride", "anneal.trace_stride", c.trace_stride));
  }
  if (doc.contains("criterion")) {
    const Json& c = doc.at("criterion");
    reject_unknown(c, "criterion", {"huber_weight", "clamp_ratios", "smoothed_reference", "variance_correction"});
    std::string hw = get_string(c, "huber_weight", "criterion.huber_weight", "unit");
    if (hw == "unit") {
      p.criterion.huber_weight = HuberWeight::Unit;
    } else if (hw == "density_ratio") {
      p.criterion.huber_weight = HuberWeight::DensityRatio;
    } else {
      field_error("criterion.huber_weight", "expected \"unit\" or \"density_ratio\"");
    }
    p.criterion.clamp_ratios = get_bool(c, "clamp_ratios", "criterion.clamp_ratios", p.criterion.clamp_ratios);
    p.criterion.smoothed_reference =
        get_bool(c, "smoothed_reference", "criterion.smoothed_reference", p.criterion.smoothed_reference);
    p.criterion.variance_correction =
        get_bool(c, "variance_correction", "criterion.variance_correction", p.criterion.variance_correction);
  }
  if (doc.contains("instrumental")) {
    const Json& g = doc.at("instrumental");
    reject_unknown(g, "instrumental", {"generator", "param"});
    cfg.instrumental_generator = get_string(g, "generator", "instrumental.generator", cfg.instrumental_generator);
    cfg.generator_param = get_number(g, "param", "instrumental.param", cfg.generator_param);
    Generator::from_label(cfg.instrumental_generator, cfg.generator_param);
  }
  if (doc.contains("outliers")) {
    const Json& o = doc.at("outliers");
    reject_unknown(o, "outliers", {"count", "point"});
    cfg.outliers.count = static_cast<int>(get_integer(o, "count", "outliers.count", 0));
    if (!o.contains("point")) field_error("outliers.point", "required");
    cfg.outliers.point = get_vector(o.at("point"), "outliers.point");
    if (cfg.mode != ExperimentMode::Simulate) field_error("outliers", "only valid in simulate mode");
  }
  cfg.kl_mc = static_cast<int>(get_integer(doc, "kl_mc", "kl_mc", cfg.kl_mc));
  cfg.output_dir = get_string(doc, "output_dir", "output_dir", cfg.output_dir);

  if (has_density) build_density(cfg.density_spec, cfg.d);
  cfg.validate();

  Json echo;
  echo["mode"] = mode;
  if (has_density) {
    echo["density_spec"] = cfg.density_spec;
  } else {
    echo["data_path"] = cfg.data_path;
  }
  echo["d"] = cfg.d;
  echo["m"] = cfg.m;
  echo["method"] = method_choice_name(cfg.method);
  echo["alpha"] = p.alpha;
  echo["nu"] = num(p.resolved_nu(cfg.d));
  echo["threshold_mode"] = threshold_mode_name(p.threshold_mode);
  echo["floor_mode"] = p.floor_mode == FloorMode::Absolute ? "absolute" : "likelihood_ratio";
  echo["k_max"] = p.k_max < 0 ? cfg.d : p.k_max;
  echo["stop_on_initial_test"] = p.stop_on_initial_test;
  echo["orthogonalize"] = p.orthogonalize;
  echo["y_factor"] = p.y_factor;
  echo["marginal_draws"] = p.marginal_draws;
  echo["anneal"] = {{"n_steps", p.anneal.n_steps},
                    {"initial_temp", p.anneal.initial_temp},
                    {"cooling", p.anneal.cooling},
                    {"proposal_sigma", p.anneal.proposal_sigma},
                    {"min_sigma_fraction", p.anneal.min_sigma_fraction},
                    {"n_restarts", p.anneal.n_restarts},
                    {"n_probes", p.anneal.n_probes},
                    {"rng_seed", p.anneal.rng_seed},
                    {"polish_steps", p.anneal.polish_steps},
                    {"trace_stride", p.anneal.trace_stride}};
  echo["criterion"] = {
      {"huber_weight", p.criterion.huber_weight == HuberWeight::Unit ? "unit" : "density_ratio"},
      {"clamp_ratios", p.criterion.clamp_ratios},
      {"smoothed_reference", p.criterion.smoothed_reference},
      {"variance_correction", p.criterion.variance_correction}};
  echo["instrumental"] = {{"generator", cfg.instrumental_generator}, {"param", cfg.generator_param}};
  if (cfg.outliers.count > 0) {
    echo["outliers"] = {{"count", cfg.outliers.count}, {"point", vec_json(cfg.outliers.point)}};
  }
  echo["kl_mc"] = cfg.kl_mc;
  echo["seed"] = p.seed;
  echo["output_dir"] = cfg.output_dir;
  cfg.echo = std::move(echo);
  return cfg;
}

ExperimentConfig parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(doc, path.parent_path());
}

Json preset_config(const std::string& name) {
  const int which = preset_index(name);
  Json doc;
  doc["mode"] = "simulate";
  doc["density_spec"] = {{"preset", name}};
  doc["m"] = simulation_default_m(which);
  doc["method"] = "both";
  doc["threshold_mode"] = "paper";
  doc["stop_on_initial_test"] = false;
  doc["seed"] = 1;
  if (which == 3) {
    const int m = simulation_default_m(which);
    Json point = Json::array();
    for (int i = 0; i < simulation_density(which)->dim(); ++i) point.push_back(i == 0 ? 2.0 : 0.0);
    doc["outliers"] = {{"count", static_cast<int>(std::lround(0.04 * m))}, {"point", point}};
  }
  doc["output_dir"] = "out/" + name;
  return doc;
}

AnalyticPtr build_density(const Json& spec, int d) {
  if (!spec.is_object()) field_error("density_spec", "expected an object");
  AnalyticPtr out;
  if (spec.contains("preset")) {
    reject_unknown(spec, "density_spec", {"preset"});
    out = simulation_density(preset_index(get_string(spec, "preset", "density_spec.preset", "")));
  } else {
    std::string type = get_string(spec, "type", "density_spec.type", "");
    if (type == "elliptical") {
      out = build_elliptical(spec, "density_spec");
    } else if (type == "product") {
      reject_unknown(spec, "density_spec", {"type", "basis", "factors", "elliptical"});
      if (!spec.contains("basis")) field_error("density_spec.basis", "required");
      Mat basis = get_matrix(spec.at("basis"), "density_spec.basis");
      std::vector<Density1DPtr> factors;
      if (spec.contains("factors")) {
        const Json& fs_ = spec.at("factors");
        if (!fs_.is_array()) field_error("density_spec.factors", "expected an array");
        for (std::size_t i = 0; i < fs_.size(); ++i) {
          factors.push_back(build_factor(fs_[i], "density_spec.factors[" + std::to_string(i) + "]"));
        }
      }
      std::shared_ptr<const EllipticalDensity> ell;
      if (spec.contains("elliptical")) ell = build_elliptical(spec.at("elliptical"), "density_spec.elliptical");
      out = std::make_shared<ProductDensity>(basis, factors, ell);
    } else {
      field_error("density_spec.type", "expected \"elliptical\" or \"product\" (or give \"preset\")");
    }
  }
  if (d > 0 && out->dim() != d) field_error("d", "does not match the dimension of density_spec");
  return out;
}

Mat simulate_sample(const ExperimentConfig& cfg) {
  if (cfg.mode != ExperimentMode::Simulate) throw ConfigError("simulate_sample needs a simulate-mode config");
  AnalyticPtr f = build_density(cfg.density_spec, cfg.d);
  Mat x = sample(*f, cfg.m, cfg.pursuit.seed);
  for (int r = cfg.m - cfg.outliers.count; r < cfg.m; ++r) x.row(r) = cfg.outliers.point.transpose();
  return x;
}

IngestResult ingest_sample(const fs::path& path, int d) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read data file " + path.string());
  IngestResult res;
  std::vector<double> values;
  std::string line;
  int line_no = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line.back() == ',') fields.emplace_back();

    std::vector<double> row;
    bool numeric = true;
    for (const std::string& raw : fields) {
      const auto b = raw.find_first_not_of(" \t");
      const auto e = raw.find_last_not_of(" \t");
      std::string f = b == std::string::npos ? std::string() : raw.substr(b, e - b + 1);
      char* end = nullptr;
      double v = f.empty() ? 0.0 : std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size()) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (first_content) {
      first_content = false;
      if (!numeric) {
        if (static_cast<int>(fields.size()) != d) {
          throw ConfigError("data file " + path.string() + " line " + std::to_string(line_no) + ": expected " +
                            std::to_string(d) + " columns, found " + std::to_string(fields.size()));
        }
        res.had_header = true;
        continue;
      }
    }
    if (static_cast<int>(fields.size()) != d) {
      throw ConfigError("data file " + path.string() + " line " + std::to_string(line_no) + ": expected " +
                        std::to_string(d) + " columns, found " + std::to_string(fields.size()));
    }
    if (!numeric) {
      throw ConfigError("data file " + path.string() + " line " + std::to_string(line_no) +
                        ": non-numeric value");
    }
    bool finite = true;
    for (double v : row) finite = finite && std::isfinite(v);
    if (!finite) {
      ++res.dropped_nonfinite;
      continue;
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  const Eigen::Index rows = static_cast<Eigen::Index>(values.size()) / d;
  if (rows == 0) throw ConfigError("data file " + path.string() + " has no usable rows");
  res.data = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), rows, d);
  return res;
}

Json report_to_json(const PursuitReport& r) {
  Json j;
  j["method"] = method_name(r.method);
  j["seed"] = r.seed;
  j["d"] = r.d;
  j["m"] = r.m;
  j["nu"] = num(r.nu);
  j["conclusion"] = r.conclusion();
  j["stop_k"] = r.stop_k;
  j["stopped_by_test"] = r.stopped_by_test;
  j["failed"] = r.failed;
  j["failure"] = r.failure;
  j["initial"] = {{"criterion", criterion_json(r.initial_criterion)},
                  {"test", test_json(r.initial_test)},
                  {"n_kept", r.initial_n_kept}};
  Json its = Json::array();
  for (const IterationRecord& it : r.iterations) {
    Json e;
    e["k"] = it.k;
    e["direction"] = vec_json(it.direction);
    e["paper_style_direction"] = vec_json(it.paper_style_direction);
    e["criterion"] = criterion_json(it.criterion);
    e["ours"] = criterion_json(it.ours);
    e["test"] = test_json(it.test);
    e["applied"] = it.applied;
    e["n_kept"] = it.n_kept;
    e["theta"] = num(it.theta);
    e["sampling"] = {{"proposals", it.sampling.proposals},
                     {"accepted", it.sampling.accepted},
                     {"acceptance_rate", num(it.sampling.acceptance_rate())},
                     {"envelope_violations", it.sampling.envelope_violations}};
    e["anneal"] = opt_json(it.anneal);
    e["polish"] = opt_json(it.polish);
    its.push_back(std::move(e));
  }
  j["iterations"] = std::move(its);
  Json trace = Json::array();
  for (double v : r.kl_trace) trace.push_back(num(v));
  j["kl_trace"] = std::move(trace);
  Json trace_se = Json::array();
  for (double v : r.kl_trace_se) trace_se.push_back(num(v));
  j["kl_trace_se"] = std::move(trace_se);
  j["max_abs_cos"] = num(r.max_abs_cos);
  Json factors = Json::array();
  for (const Factor& f : r.final_density.factors()) {
    factors.push_back({{"direction", vec_json(f.direction)},
                       {"numerator", f.numerator->describe()},
                       {"denominator", f.denominator->describe()},
                       {"log_cap", num(f.log_cap)}});
  }
  j["final_density"] = {{"k", r.final_density.k()}, {"factors", std::move(factors)}};
  Json warnings = Json::array();
  for (const std::string& w : r.warnings) warnings.push_back(w);
  j["warnings"] = std::move(warnings);
  return j;
}

RunArtifacts run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const fs::path dir(cfg.output_dir);
  fs::create_directories(dir);
  RunArtifacts art;
  art.report_json = dir / "report.json";
  art.table_csv = dir / "table.csv";
  art.trace_csv = dir / "trace.csv";
  art.log = dir / "run.log";

  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  log << "ppfactor run, seed " << cfg.pursuit.seed << ", threads " << thread_count() << "\n";
  log << "config " << cfg.echo.dump() << "\n";

  Json report;
  report["seed"] = cfg.pursuit.seed;
  report["config"] = cfg.echo;
  report["failed"] = false;

  try {
    Mat x;
    AnalyticPtr truth;
    Json sample_info;
    if (cfg.mode == ExperimentMode::Simulate) {
      truth = build_density(cfg.density_spec, cfg.d);
      x = simulate_sample(cfg);
      sample_info["source"] = "simulated";
      sample_info["outliers"] = cfg.outliers.count;
    } else {
      IngestResult in = ingest_sample(cfg.data_path, cfg.d);
      x = std::move(in.data);
      sample_info["source"] = "ingested";
      sample_info["header"] = in.had_header;
      sample_info["dropped_nonfinite"] = in.dropped_nonfinite;
      log << "ingested " << x.rows() << " rows, dropped " << in.dropped_nonfinite << " non-finite rows\n";
      if (x.rows() <= cfg.d) throw ConfigError("data file has " + std::to_string(x.rows()) + " usable rows; need more than d");
    }
    sample_info["m"] = static_cast<int>(x.rows());
    sample_info["d"] = cfg.d;
    report["sample"] = sample_info;

    Generator gen = Generator::from_label(cfg.instrumental_generator, cfg.generator_param);
    auto g = std::make_shared<EllipticalDensity>(moment_match_instrumental(x, gen));
    report["instrumental"] = {{"generator", gen.label()}, {"mu", vec_json(g->mu())}};

    std::vector<Method> methods;
    if (cfg.method != MethodChoice::Huber) methods.push_back(Method::Ours);
    if (cfg.method != MethodChoice::Ours) methods.push_back(Method::Huber);

    std::string table = "method,row,k,value,point,p_value,in_ellipsoid,kl_to_truth\n";
    std::string trace = "method,k,stage,restart,step,temperature,value\n";
    Json runs = Json::array();
    for (Method method : methods) {
      PursuitConfig pc = cfg.pursuit;
      pc.method = method;
      const double t_run = elapsed();
      PursuitReport rep = run_pursuit(x, g, pc);
      Json rj = report_to_json(rep);
      const std::string name = method_name(method);
      log << name << ": " << rep.conclusion() << " after " << rep.iterations.size() << " iteration(s), "
          << (elapsed() - t_run) << " s\n";
      for (const std::string& w : rep.warnings) log << name << " warning: " << w << "\n";

      table += name + ",initial_test,0," + csv_number(rep.initial_criterion.value) + ",," +
               csv_number(rep.initial_test.p_value) + "," + verdict(rep.initial_test.in_ellipsoid) + ",\n";
      for (const IterationRecord& it : rep.iterations) {
        const std::string k = std::to_string(it.k);
        table += name + ",extremum," + k + "," + csv_number(it.criterion.value) + "," +
                 point_field(it.paper_style_direction) + ",,,\n";
        table += name + ",test," + k + ",,," + csv_number(it.test.p_value) + "," + verdict(it.test.in_ellipsoid) +
                 ",\n";
        for (const auto& [stage, opt] : {std::pair<const char*, const OptResult*>{"anneal", &it.anneal},
                                         std::pair<const char*, const OptResult*>{"polish", &it.polish}}) {
          for (const TracePoint& tp : opt->trace) {
            trace += name + "," + k + "," + stage + "," + std::to_string(tp.restart) + "," + std::to_string(tp.step) +
                     "," + csv_number(tp.temperature) + "," + csv_number(tp.value) + "\n";
          }
        }
      }
      if (truth && cfg.kl_mc > 0 && !rep.failed) {
        try {
          KlEstimate kl = kl_to_truth(rep.final_density, *truth, cfg.kl_mc, derived_seed(cfg.pursuit.seed, 77));
          rj["kl_to_truth"] = {{"value", num(kl.value)}, {"se", num(kl.se)}, {"k", rep.stop_k}};
          table += name + ",kl_to_truth," + std::to_string(rep.stop_k) + ",,,,," + csv_number(kl.value) + "\n";
        } catch (const NumericalError& e) {
          rj["kl_to_truth"] = {{"value", nullptr}, {"error", e.what()}};
          log << name << " kl_to_truth failed: " << e.what() << "\n";
        }
      }
      if (rep.failed) {
        report["failed"] = true;
        art.pursuit_failed = true;
        art.failure = name + ": " + rep.failure;
      }
      runs.push_back(std::move(rj));
    }
    report["runs"] = std::move(runs);
    write_text(art.table_csv, table);
    write_text(art.trace_csv, trace);
    write_text(art.report_json, report.dump(2) + "\n");
    log << "done in " << elapsed() << " s\n";
    write_text(art.log, log.str());
  } catch (const std::exception& e) {
    report["failed"] = true;
    report["failure"] = e.what();
    write_text(art.report_json, report.dump(2) + "\n");
    log << "error: " << e.what() << "\n";
    write_text(art.log, log.str());
    throw;
  }
  return art;
}

}  // namespace ppfactor
