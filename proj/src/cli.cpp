#include "toppkit/cli.hpp"

#include "toppkit/dataset.hpp"
#include "toppkit/errors.hpp"
#include "toppkit/eval_metrics.hpp"
#include "toppkit/io.hpp"
#include "toppkit/robustness.hpp"
#include "toppkit/sim_control.hpp"
#include "toppkit/topp_solver.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace toppkit::cli {

namespace {

QuadModel model_or_default(const std::string& file) {
  return file.empty() ? crazyflie_model() : load_quad_model(file);
}

sim::ControllerGains gains_or_default(const std::string& file) {
  return file.empty() ? sim::ControllerGains{} : sim::load_gains(file);
}

void emit(const std::string& file, const std::string& text) {
  if (file.empty() || file == "-") {
    std::cout << text;
  } else {
    io::write_file(file, text);
  }
}

}  // namespace

int cli_dispatch(int argc, char** argv) {
  CLI::App app{"Time-optimal quadrotor trajectory toolkit"};
  app.name("toppkit");
  app.require_subcommand(1);

  // plan
  std::string wp_file, out_file;
  int n_stations = path::kDefaultSamples;
  std::optional<double> v_nom;
  auto* plan = app.add_subcommand("plan", "min-snap path through waypoints");
  plan->add_option("--waypoints", wp_file, "waypoint JSON")->required();
  plan->add_option("--N", n_stations, "arc-length stations");
  plan->add_option("--v-nom", v_nom, "nominal speed for time allocation");
  plan->add_option("--out", out_file, "path JSONL (default stdout)");

  // topp
  std::string path_file, model_file, diag_file;
  double lambda = topp::kDefaultLambda;
  auto* topp_cmd = app.add_subcommand("topp", "time-optimal parameterization");
  topp_cmd->add_option("--path", path_file, "path JSONL")->required();
  topp_cmd->add_option("--model", model_file, "quad model JSON");
  topp_cmd->add_option("--lambda", lambda, "angular-acceleration weight");
  topp_cmd->add_option("--out", out_file, "profile JSONL (default stdout)");
  topp_cmd->add_option("--diag", diag_file, "diagnostics JSON");

  // recover
  std::string profile_file;
  auto* recover = app.add_subcommand("recover", "full trajectory from a profile");
  recover->add_option("--path", path_file, "path JSONL")->required();
  recover->add_option("--profile", profile_file, "profile JSONL")->required();
  recover->add_option("--model", model_file, "quad model JSON");
  recover->add_option("--out", out_file, "trajectory JSONL (default stdout)");

  // simulate
  std::string ref_file, gains_file;
  double dt = sim::kDefaultDt;
  auto* simulate = app.add_subcommand("simulate", "closed-loop tracking");
  simulate->add_option("--ref", ref_file, "reference trajectory JSONL")
      ->required();
  simulate->add_option("--model", model_file, "quad model JSON");
  simulate->add_option("--gains", gains_file, "controller gains JSON");
  simulate->add_option("--dt", dt, "integration step (s)");
  simulate->add_option("--out", out_file, "trajectory JSONL (default stdout)");

  // robustness
  std::string planner_spec = "topp", tol_file;
  double epsilon = 0.0;
  int samples = 10;
  std::uint64_t seed = 0;
  auto* robust_cmd =
      app.add_subcommand("robustness", "perturbation and in-BRT analysis");
  robust_cmd->add_option("--waypoints", wp_file, "waypoint JSON")->required();
  robust_cmd->add_option("--planner", planner_spec, "topp | file:pred.jsonl");
  robust_cmd->add_option("--epsilon", epsilon, "perturbation scale (m)");
  robust_cmd->add_option("--samples", samples, "perturbed paths");
  robust_cmd->add_option("--seed", seed, "perturbation seed");
  robust_cmd->add_option("--model", model_file, "quad model JSON");
  robust_cmd->add_option("--gains", gains_file, "controller gains JSON");
  robust_cmd->add_option("--tol", tol_file, "reach tolerance JSON");
  robust_cmd->add_option("--lambda", lambda, "weight for the topp planner");
  robust_cmd->add_option("--out", out_file, "report JSON (default stdout)");

  // eval
  std::string actual_file, planned_file;
  std::optional<double> pred_time, opt_time;
  auto* eval_cmd = app.add_subcommand("eval", "tracking metrics");
  eval_cmd->add_option("--ref", ref_file, "reference path JSONL")->required();
  eval_cmd->add_option("--actual", actual_file, "flown trajectory JSONL")
      ->required();
  eval_cmd->add_option("--planned", planned_file,
                       "planned trajectory JSONL (thrusts, travel time)");
  eval_cmd->add_option("--pred-time", pred_time, "predicted travel time (s)");
  eval_cmd->add_option("--opt-time", opt_time, "optimal travel time (s)");
  eval_cmd->add_option("--model", model_file, "quad model JSON");
  eval_cmd->add_option("--out", out_file, "report JSON (default stdout)");

  // dataset
  std::string config_file, manifest_file, in_file;
  int copies = 1;
  auto* dataset = app.add_subcommand("dataset", "dataset generation");
  dataset->require_subcommand(1);
  auto* gen = dataset->add_subcommand("gen", "generate records");
  gen->add_option("--config", config_file, "dataset config JSON")->required();
  gen->add_option("--model", model_file, "quad model JSON");
  gen->add_option("--out", out_file, "dataset JSONL")->required();
  gen->add_option("--manifest", manifest_file,
                  "manifest JSON (default <out>.manifest.json)");
  auto* augment = dataset->add_subcommand("augment", "noise augmentation");
  augment->add_option("--in", in_file, "dataset JSONL")->required();
  augment->add_option("--epsilon", epsilon, "perturbation scale (m)")
      ->required();
  augment->add_option("--k", copies, "copies per clean record");
  augment->add_option("--seed", seed, "perturbation seed");
  augment->add_option("--out", out_file, "dataset JSONL")->required();

  // consistency
  int n_pairs = 20;
  auto* consistency =
      app.add_subcommand("consistency", "paired yaw-consistency statistics");
  consistency->add_option("--config", config_file, "dataset config JSON");
  consistency->add_option("--model", model_file, "quad model JSON");
  consistency->add_option("--pairs", n_pairs, "path pairs");
  consistency->add_option("--lambda", lambda, "penalized setting");
  consistency->add_option("--out", out_file, "CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e);
      return 0;
    }
    std::cerr << "toppkit: " << e.what() << "\n";
    std::cerr << "run 'toppkit --help' for usage\n";
    return 2;
  }

  try {
    if (*plan) {
      io::WaypointFile wf = io::waypoints_from_json_text(io::read_file(wp_file));
      if (v_nom) wf.v_nom = *v_nom;
      emit(out_file, io::path_to_jsonl(
                         path::plan_path(wf.waypoints, wf.v_nom, n_stations)));
    } else if (*topp_cmd) {
      topp::ToppProblem prob;
      prob.path = io::path_from_jsonl(io::read_file(path_file));
      prob.model = model_or_default(model_file);
      prob.lambda = lambda;
      const topp::ToppSolution sol = topp::solve_topp(prob);
      emit(out_file, io::profile_to_jsonl(sol.profile, prob.path.s));
      if (!diag_file.empty()) {
        io::write_file(diag_file, io::diagnostics_to_json_text(sol));
      }
      if (!sol.diagnostics.converged) {
        std::cerr << "toppkit: solver did not converge (max violation "
                  << sol.diagnostics.max_violation << ")\n";
        return 1;
      }
    } else if (*recover) {
      const auto p = io::path_from_jsonl(io::read_file(path_file));
      const auto prof = io::profile_from_jsonl(io::read_file(profile_file));
      emit(out_file, io::trajectory_to_jsonl(flat::recover_trajectory(
                         p, prof, model_or_default(model_file))));
    } else if (*simulate) {
      const auto ref = io::trajectory_from_jsonl(io::read_file(ref_file));
      const sim::SimResult res = sim::simulate_tracking(
          ref, gains_or_default(gains_file), model_or_default(model_file), dt);
      emit(out_file, io::trajectory_to_jsonl(res.actual));
      if (res.crashed) std::cerr << "toppkit: crashed: " << res.reason << "\n";
    } else if (*robust_cmd) {
      const io::WaypointFile wf =
          io::waypoints_from_json_text(io::read_file(wp_file));
      const QuadModel model = model_or_default(model_file);
      robust::Planner planner;
      if (planner_spec == "topp") {
        planner = [&](const path::DiscretizedPath& p) {
          topp::ToppProblem prob;
          prob.path = p;
          prob.model = model;
          prob.lambda = lambda;
          const topp::ToppSolution sol = topp::solve_topp(prob);
          if (!sol.diagnostics.converged) {
            throw NumericalError("topp planner did not converge");
          }
          return sol.profile;
        };
      } else if (planner_spec.rfind("file:", 0) == 0) {
        const auto fixed =
            io::profile_from_jsonl(io::read_file(planner_spec.substr(5)));
        planner = [fixed](const path::DiscretizedPath&) { return fixed; };
      } else {
        std::cerr << "toppkit: --planner must be 'topp' or 'file:<path>'\n";
        return 2;
      }
      path::PerturbationSpec spec;
      spec.epsilon = epsilon;
      spec.n_samples = samples;
      spec.seed = seed;
      robust::RobustnessOptions opts;
      opts.gains = gains_or_default(gains_file);
      const robust::ReachTolerance tol =
          tol_file.empty() ? robust::ReachTolerance{}
                           : robust::load_tolerance(tol_file);
      const auto rep =
          robust::epsilon_robustness(wf.waypoints, planner, spec, tol, model, opts);
      emit(out_file, robust::report_to_json_text(rep) + "\n");
    } else if (*eval_cmd) {
      const auto ref = io::path_from_jsonl(io::read_file(ref_file));
      const auto actual = io::trajectory_from_jsonl(io::read_file(actual_file));
      const auto planned = planned_file.empty()
                               ? actual
                               : io::trajectory_from_jsonl(io::read_file(planned_file));
      const bool crashed = actual.size() < planned.size();
      eval::EvalReport rep =
          eval::evaluate(ref, planned, actual, crashed, model_or_default(model_file));
      if (pred_time) rep.travel_time = *pred_time;
      if (rep.travel_time > 0.0) rep.average_speed = rep.path_length / rep.travel_time;
      if (opt_time) rep.td_ratio = eval::td_ratio(rep.travel_time, *opt_time);
      emit(out_file, eval::report_to_json_text(rep) + "\n");
    } else if (*gen) {
      const data::DatasetConfig cfg = data::load_config(config_file);
      const auto ds = data::generate_dataset(cfg, model_or_default(model_file));
      io::write_file(out_file, data::dataset_to_jsonl(ds.records));
      io::write_file(manifest_file.empty() ? out_file + ".manifest.json"
                                           : manifest_file,
                     data::manifest_to_json_text(ds.manifest));
      std::cout << "records " << ds.manifest.records << " attempts "
                << ds.manifest.attempts << " skipped " << ds.manifest.skipped
                << "\n";
    } else if (*augment) {
      const auto records = data::dataset_from_jsonl(io::read_file(in_file));
      io::write_file(out_file, data::dataset_to_jsonl(data::augment_with_noise(
                                   records, epsilon, copies, seed)));
    } else if (*consistency) {
      const data::DatasetConfig cfg = config_file.empty()
                                          ? data::sim_profile()
                                          : data::load_config(config_file);
      const auto pairs = data::consistency_pairs(cfg, n_pairs);
      const auto res = topp::yaw_consistency_penalty_effect(
          pairs, cfg.apply(model_or_default(model_file)), lambda);
      emit(out_file, data::consistency_csv(res));
    }
  } catch (const Error& e) {
    std::cerr << "toppkit: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace toppkit::cli
