#include "toppkit/dataset.hpp"

#include "toppkit/errors.hpp"
#include "toppkit/io.hpp"

#include <json.hpp>

#include <cstdio>
#include <random>
#include <sstream>

namespace toppkit::data {

using ojson = nlohmann::ordered_json;

namespace {

ojson vec_json(const Vec3& v) { return ojson::array({v.x(), v.y(), v.z()}); }

Vec3 vec_of(const ojson& a) {
  if (!a.is_array() || a.size() != 3) throw InputError("expected 3-vector");
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

ojson list_json(const Vec3List& l) {
  ojson a = ojson::array();
  for (const Vec3& v : l) a.push_back(vec_json(v));
  return a;
}

Vec3List list_of(const ojson& a) {
  Vec3List l;
  for (const ojson& v : a) l.push_back(vec_of(v));
  return l;
}

ojson config_json(const DatasetConfig& c) {
  ojson j;
  j["n_trajectories"] = c.n_trajectories;
  j["waypoints_min"] = c.waypoints_min;
  j["waypoints_max"] = c.waypoints_max;
  j["box_min"] = vec_json(c.box_min);
  j["box_max"] = vec_json(c.box_max);
  j["v_max"] = c.v_max;
  j["omega_max"] = c.omega_max;
  j["a_max"] = c.a_max;
  j["lambda"] = c.lambda;
  j["N"] = c.N;
  j["v_nom"] = c.v_nom;
  j["seed"] = c.seed;
  j["epsilon_augment"] = c.epsilon_augment;
  j["augment_copies"] = c.augment_copies;
  return j;
}

DatasetConfig config_of(const ojson& j) {
  DatasetConfig c;
  if (j.contains("n_trajectories")) c.n_trajectories = j["n_trajectories"].get<int>();
  if (j.contains("waypoints_min")) c.waypoints_min = j["waypoints_min"].get<int>();
  if (j.contains("waypoints_max")) c.waypoints_max = j["waypoints_max"].get<int>();
  if (j.contains("box_min")) c.box_min = vec_of(j["box_min"]);
  if (j.contains("box_max")) c.box_max = vec_of(j["box_max"]);
  if (j.contains("v_max")) c.v_max = j["v_max"].get<double>();
  if (j.contains("omega_max")) c.omega_max = j["omega_max"].get<double>();
  if (j.contains("a_max")) c.a_max = j["a_max"].get<double>();
  if (j.contains("lambda")) c.lambda = j["lambda"].get<double>();
  if (j.contains("N")) c.N = j["N"].get<int>();
  if (j.contains("v_nom")) c.v_nom = j["v_nom"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("epsilon_augment")) {
    c.epsilon_augment = j["epsilon_augment"].get<double>();
  }
  if (j.contains("augment_copies")) {
    c.augment_copies = j["augment_copies"].get<int>();
  }
  c.validate();
  return c;
}

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

path::WaypointList sample_waypoints(const DatasetConfig& c,
                                    std::mt19937_64& rng) {
  std::uniform_int_distribution<int> count(c.waypoints_min, c.waypoints_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const int n = count(rng);
  path::WaypointList w;
  for (int i = 0; i < n; ++i) {
    Vec3 p;
    for (int k = 0; k < 3; ++k) {
      p(k) = c.box_min(k) + (c.box_max(k) - c.box_min(k)) * unit(rng);
    }
    w.points.push_back(p);
  }
  return w;
}

}  // namespace

void DatasetConfig::validate() const {
  if (n_trajectories < 1) throw InputError("config: n_trajectories < 1");
  if (waypoints_min < 2 || waypoints_max < waypoints_min) {
    throw InputError("config: need 2 <= waypoints_min <= waypoints_max");
  }
  if (!((box_max - box_min).minCoeff() > 0.0)) {
    throw InputError("config: sampling box has no volume");
  }
  if (!(v_max > 0.0) || !(omega_max > 0.0) || !(a_max > 0.0)) {
    throw InputError("config: kinematic limits must be > 0");
  }
  if (!(lambda >= 0.0)) throw InputError("config: lambda < 0");
  if (N < 10) throw InputError("config: N < 10");
  if (!(v_nom > 0.0)) throw InputError("config: v_nom must be > 0");
  if (!(epsilon_augment >= 0.0)) throw InputError("config: epsilon_augment < 0");
  if (augment_copies < 1) throw InputError("config: augment_copies < 1");
}

QuadModel DatasetConfig::apply(QuadModel model) const {
  model.v_max = v_max;
  model.omega_max = omega_max;
  model.a_max = a_max;
  return model;
}

DatasetConfig sim_profile() { return DatasetConfig{}; }

DatasetConfig hardware_profile() {
  DatasetConfig c;
  c.v_max = 2.0;
  c.omega_max = 8.0;
  c.a_max = 5.0;
  return c;
}

DatasetConfig config_from_json_text(const std::string& text) {
  try {
    return config_of(ojson::parse(text));
  } catch (const ojson::exception& e) {
    throw InputError(std::string("dataset config: ") + e.what());
  }
}

std::string config_to_json_text(const DatasetConfig& c) {
  return config_json(c).dump(2) + "\n";
}

DatasetConfig load_config(const std::string& file) {
  return config_from_json_text(io::read_file(file));
}

std::string config_hash(const DatasetConfig& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void DatasetRecord::validate() const {
  input.validate();
  output.validate();
  if (output.size() != input.size()) {
    throw InputError("record: input and output lengths differ");
  }
  if (!meta.converged) throw InputError("record: solve did not converge");
  if (meta.waypoints.size() < 2) throw InputError("record: missing waypoints");
  if (meta.perturbation_id < 0) throw InputError("record: negative perturbation id");
}

std::string record_to_json_line(const DatasetRecord& r) {
  ojson j;
  j["id"] = r.id;
  ojson in;
  in["N"] = r.input.size();
  in["ds"] = r.input.ds;
  in["s"] = r.input.s;
  in["gamma"] = list_json(r.input.gamma);
  in["dgamma"] = list_json(r.input.dgamma);
  in["ddgamma"] = list_json(r.input.ddgamma);
  j["input"] = std::move(in);
  ojson out;
  out["h"] = r.output.h;
  out["cos_yaw"] = r.output.cos_yaw;
  out["yaw"] = r.output.yaw;
  j["output"] = std::move(out);
  ojson m;
  m["T"] = r.meta.T;
  m["objective"] = r.meta.objective;
  m["converged"] = r.meta.converged;
  m["iterations"] = r.meta.iterations;
  m["max_violation"] = r.meta.max_violation;
  m["waypoints"] = list_json(r.meta.waypoints.points);
  m["v_nom"] = r.meta.v_nom;
  m["perturbation_id"] = r.meta.perturbation_id;
  j["meta"] = std::move(m);
  return j.dump();
}

DatasetRecord record_from_json_line(const std::string& line) {
  DatasetRecord r;
  try {
    const ojson j = ojson::parse(line);
    r.id = j.at("id").get<std::uint64_t>();
    const ojson& in = j.at("input");
    r.input.ds = in.at("ds").get<double>();
    r.input.s = in.at("s").get<std::vector<double>>();
    r.input.gamma = list_of(in.at("gamma"));
    r.input.dgamma = list_of(in.at("dgamma"));
    r.input.ddgamma = list_of(in.at("ddgamma"));
    if (in.at("N").get<std::size_t>() != r.input.size()) {
      throw InputError("record: N does not match the station count");
    }
    const ojson& out = j.at("output");
    std::vector<double> h = out.at("h").get<std::vector<double>>();
    std::vector<double> c = out.at("cos_yaw").get<std::vector<double>>();
    if (out.contains("yaw")) {
      r.output.h = std::move(h);
      r.output.cos_yaw = std::move(c);
      r.output.yaw = out["yaw"].get<std::vector<double>>();
    } else {
      r.output = flat::SpeedYawProfile::from_cos(std::move(h), std::move(c));
    }
    const ojson& m = j.at("meta");
    r.meta.T = m.at("T").get<double>();
    r.meta.objective = m.at("objective").get<double>();
    r.meta.converged = m.at("converged").get<bool>();
    r.meta.iterations = m.at("iterations").get<int>();
    r.meta.max_violation = m.at("max_violation").get<double>();
    r.meta.waypoints.points = list_of(m.at("waypoints"));
    r.meta.v_nom = m.at("v_nom").get<double>();
    r.meta.perturbation_id = m.at("perturbation_id").get<int>();
  } catch (const ojson::exception& e) {
    throw InputError(std::string("record: ") + e.what());
  }
  r.validate();
  return r;
}

std::string dataset_to_jsonl(const std::vector<DatasetRecord>& records) {
  std::string out;
  for (const DatasetRecord& r : records) out += record_to_json_line(r) + "\n";
  return out;
}

std::vector<DatasetRecord> dataset_from_jsonl(const std::string& text) {
  std::vector<DatasetRecord> records;
  std::size_t n = 0;
  for (const std::string& line : io::split_lines(text)) {
    ++n;
    try {
      records.push_back(record_from_json_line(line));
    } catch (const InputError& e) {
      throw InputError("dataset line " + std::to_string(n) + ": " + e.what());
    }
  }
  return records;
}

std::string manifest_to_json_text(const Manifest& m) {
  ojson j;
  j["version"] = m.version;
  j["config_hash"] = m.config_hash;
  j["requested"] = m.requested;
  j["records"] = m.records;
  j["attempts"] = m.attempts;
  j["skipped"] = m.skipped;
  j["failure_rate"] = m.failure_rate;
  j["augmented"] = m.augmented;
  j["config"] = config_json(m.config);
  return j.dump(2) + "\n";
}

Manifest manifest_from_json_text(const std::string& text) {
  Manifest m;
  try {
    const ojson j = ojson::parse(text);
    m.version = j.at("version").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.requested = j.at("requested").get<int>();
    m.records = j.at("records").get<int>();
    m.attempts = j.at("attempts").get<int>();
    m.skipped = j.at("skipped").get<int>();
    m.failure_rate = j.at("failure_rate").get<double>();
    m.augmented = j.at("augmented").get<int>();
    m.config = config_of(j.at("config"));
  } catch (const ojson::exception& e) {
    throw InputError(std::string("manifest: ") + e.what());
  }
  return m;
}

GeneratedDataset generate_dataset(const DatasetConfig& config,
                                  const QuadModel& base_model,
                                  const topp::SolverOptions& options) {
  config.validate();
  const QuadModel model = config.apply(base_model);
  model.validate();
  GeneratedDataset out;
  Manifest& man = out.manifest;
  man.config = config;
  man.config_hash = config_hash(config);
  man.requested = config.n_trajectories;
  const int budget = 2 * config.n_trajectories;
  int attempt = 0;
  for (; attempt < budget &&
         static_cast<int>(out.records.size()) < config.n_trajectories;
       ++attempt) {
    std::mt19937_64 rng = stream(config.seed, static_cast<std::uint64_t>(attempt));
    const path::WaypointList w = sample_waypoints(config, rng);
    try {
      topp::ToppProblem prob;
      prob.path = path::plan_path(w, config.v_nom, config.N);
      prob.model = model;
      prob.lambda = config.lambda;
      const topp::ToppSolution sol = topp::solve_topp(prob, options);
      if (!sol.diagnostics.converged) {
        std::fprintf(stderr, "dataset: attempt %d did not converge (violation %g)\n",
                     attempt, sol.diagnostics.max_violation);
        ++man.skipped;
        continue;
      }
      DatasetRecord r;
      r.id = out.records.size();
      r.input = std::move(prob.path);
      r.output = sol.profile;
      r.meta.T = sol.T;
      r.meta.objective = sol.objective;
      r.meta.converged = true;
      r.meta.iterations = sol.diagnostics.iterations;
      r.meta.max_violation = sol.diagnostics.max_violation;
      r.meta.waypoints = w;
      r.meta.v_nom = config.v_nom;
      out.records.push_back(std::move(r));
    } catch (const Error& e) {
      std::fprintf(stderr, "dataset: attempt %d failed: %s\n", attempt, e.what());
      ++man.skipped;
    }
  }
  man.attempts = attempt;
  man.records = static_cast<int>(out.records.size());
  man.failure_rate =
      attempt > 0 ? static_cast<double>(man.skipped) / attempt : 0.0;
  if (config.epsilon_augment > 0.0) {
    out.records = augment_with_noise(out.records, config.epsilon_augment,
                                     config.augment_copies, config.seed);
    man.augmented = static_cast<int>(out.records.size()) - man.records;
  }
  return out;
}

std::vector<DatasetRecord> augment_with_noise(
    const std::vector<DatasetRecord>& records, double epsilon, int k,
    std::uint64_t seed) {
  if (!(epsilon > 0.0)) throw InputError("augment: epsilon must be > 0");
  if (k < 1) throw InputError("augment: k must be >= 1");
  std::vector<DatasetRecord> out;
  out.reserve(records.size() * static_cast<std::size_t>(k + 1));
  for (const DatasetRecord& r : records) {
    out.push_back(r);
    if (r.meta.perturbation_id != 0) continue;
    path::PerturbationSpec spec;
    spec.epsilon = epsilon;
    spec.n_samples = k;
    spec.seed = stream(seed, r.id)();
    const auto durations = path::allocate_times(r.meta.waypoints, r.meta.v_nom);
    const auto perturbed =
        path::perturb_path(r.meta.waypoints, durations, spec,
                           static_cast<int>(r.input.size()));
    for (int c = 0; c < k; ++c) {
      DatasetRecord copy = r;
      copy.input = perturbed[static_cast<std::size_t>(c)].path;
      copy.meta.perturbation_id = c + 1;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

std::vector<topp::PathPair> consistency_pairs(const DatasetConfig& config,
                                              int n_pairs) {
  config.validate();
  if (n_pairs < 1) throw InputError("consistency: n_pairs < 1");
  std::vector<topp::PathPair> pairs;
  for (int k = 0; k < n_pairs; ++k) {
    std::mt19937_64 rng = stream(config.seed, static_cast<std::uint64_t>(k));
    const path::WaypointList w = sample_waypoints(config, rng);
    const auto durations = path::allocate_times(w, config.v_nom);
    topp::PathPair p;
    p.nominal = path::discretize_arclength(path::fit_min_snap(w, durations),
                                           config.N);
    p.perturbed =
        path::shift_waypoint(w, durations, 0, Vec3(0.1, 0.0, 0.0), config.N)
            .path;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

std::string consistency_csv(const topp::ConsistencyResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "pair,lambda,dh_max,dT,dT_rel,dyaw_max\n";
  for (const topp::ConsistencyStats* s :
       {&result.without_penalty, &result.with_penalty}) {
    for (std::size_t i = 0; i < s->pairs.size(); ++i) {
      const topp::PairDelta& d = s->pairs[i];
      out << s->pair_index[i] << ',' << s->lambda << ',' << d.dh_max << ','
          << d.dT << ',' << d.dT_rel << ',' << d.dyaw_max << '\n';
    }
  }
  return out.str();
}

}  // namespace toppkit::data
