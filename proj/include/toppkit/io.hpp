#pragma once

#include "toppkit/flat_recovery.hpp"
#include "toppkit/path_gen.hpp"
#include "toppkit/topp_solver.hpp"

#include <string>
#include <vector>

// Text formats. Every writer emits keys in a fixed order and doubles in their
// shortest round-trip form, so parse -> serialize reproduces the input bytes.
// Parsers throw InputError on malformed text and re-validate what they load.
namespace toppkit::io {

struct WaypointFile {
  path::WaypointList waypoints;
  double v_nom = path::kDefaultNominalSpeed;
};

// {"waypoints": [[x,y,z],...], "v_nom": f}
WaypointFile waypoints_from_json_text(const std::string& text);
std::string waypoints_to_json_text(const WaypointFile& file);

// Header {"N":int,"ds":f}, then one {"s","gamma","dgamma","ddgamma"} line per
// station.
path::DiscretizedPath path_from_jsonl(const std::string& text);
std::string path_to_jsonl(const path::DiscretizedPath& path);

// One {"s","h","cos_yaw","yaw"} line per station. "yaw" is optional on input;
// without it the yaw is unwrapped from cos_yaw. s supplies the "s"
// column of the output (station index when empty).
flat::SpeedYawProfile profile_from_jsonl(const std::string& text);
std::string profile_to_jsonl(const flat::SpeedYawProfile& profile,
                             const std::vector<double>& s = {});

// One {"t","p","v","a","q","omega","u"} line per row, q as [w,x,y,z]. alpha
// is not stored; the parser rebuilds it from omega and t.
flat::FullTrajectory trajectory_from_jsonl(const std::string& text);
std::string trajectory_to_jsonl(const flat::FullTrajectory& traj);

// {"T","objective","converged","max_violation","iters"}
std::string diagnostics_to_json_text(const topp::ToppSolution& solution);

// Whole-file helpers.
std::string read_file(const std::string& file);
void write_file(const std::string& file, const std::string& text);

// Splits on '\n', dropping empty lines.
std::vector<std::string> split_lines(const std::string& text);

}  // namespace toppkit::io
