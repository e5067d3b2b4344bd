#pragma once

#include "toppkit/path_gen.hpp"
#include "toppkit/quad_model.hpp"
#include "toppkit/topp_solver.hpp"

#include <cstdint>
#include <string>
#include <vector>

// Dataset generation for the imitation component: random waypoint paths,
// their reference TOPP solutions, label-preserving noise augmentation and the
// JSONL / manifest formats.
namespace toppkit::data {

inline constexpr const char* kToolkitVersion = "0.1.0";

struct DatasetConfig {
  int n_trajectories = 200;
  int waypoints_min = 3;
  int waypoints_max = 5;
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3(10.0, 10.0, 10.0);
  double v_max = 5.0;       // m/s
  double omega_max = 20.0;  // rad/s
  double a_max = 20.0;      // m/s^2
  double lambda = topp::kDefaultLambda;
  int N = path::kDefaultSamples;
  double v_nom = path::kDefaultNominalSpeed;
  std::uint64_t seed = 0;
  double epsilon_augment = 0.0;  // 0 disables
  int augment_copies = 1;

  void validate() const;
  // Vehicle with this config's kinematic limits.
  QuadModel apply(QuadModel model) const;
};

DatasetConfig sim_profile();
DatasetConfig hardware_profile();

DatasetConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const DatasetConfig& config);
DatasetConfig load_config(const std::string& file);

// 16 hex digits of FNV-1a over the canonical config JSON.
std::string config_hash(const DatasetConfig& config);

struct RecordMeta {
  double T = 0.0;
  double objective = 0.0;
  bool converged = false;
  int iterations = 0;
  double max_violation = 0.0;
  path::WaypointList waypoints;
  double v_nom = path::kDefaultNominalSpeed;
  int perturbation_id = 0;  // 0 = clean
};

struct DatasetRecord {
  std::uint64_t id = 0;
  path::DiscretizedPath input;
  flat::SpeedYawProfile output;
  RecordMeta meta;

  // Path and profile invariants, equal lengths, converged solve.
  void validate() const;
};

std::string record_to_json_line(const DatasetRecord& record);
DatasetRecord record_from_json_line(const std::string& line);

std::string dataset_to_jsonl(const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> dataset_from_jsonl(const std::string& text);

struct Manifest {
  std::string version = kToolkitVersion;
  std::string config_hash;
  int requested = 0;
  int records = 0;
  int attempts = 0;
  int skipped = 0;  // non-converged solves
  double failure_rate = 0.0;
  int augmented = 0;
  DatasetConfig config;
};

std::string manifest_to_json_text(const Manifest& manifest);
Manifest manifest_from_json_text(const std::string& text);

struct GeneratedDataset {
  std::vector<DatasetRecord> records;
  Manifest manifest;
};

// Attempt k draws its waypoint count and points from its own stream seeded
// with (seed, k). Sampling continues until n_trajectories converged solves
// or 2 * n_trajectories attempts. With epsilon_augment > 0 the result is
// augmented before returning.
GeneratedDataset generate_dataset(const DatasetConfig& config,
                                  const QuadModel& base_model = QuadModel{},
                                  const topp::SolverOptions& options = {});

// Each clean record is followed by k copies whose input is a perturbed
// refit of its waypoints and whose output is the clean label.
std::vector<DatasetRecord> augment_with_noise(
    const std::vector<DatasetRecord>& records, double epsilon, int k,
    std::uint64_t seed);

// Nominal / (0.1, 0, 0)-shifted first-waypoint pairs.
std::vector<topp::PathPair> consistency_pairs(const DatasetConfig& config,
                                              int n_pairs);

// One row per converged pair and setting:
// pair,lambda,dh_max,dT,dT_rel,dyaw_max
std::string consistency_csv(const topp::ConsistencyResult& result);

}  // namespace toppkit::data
