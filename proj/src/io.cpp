#include "toppkit/io.hpp"

#include "toppkit/errors.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace toppkit::io {

using ojson = nlohmann::ordered_json;

namespace {

ojson vec_json(const Vec3& v) { return ojson::array({v.x(), v.y(), v.z()}); }

ojson vec_json(const Vec4& v) {
  return ojson::array({v(0), v(1), v(2), v(3)});
}

Vec3 vec3_of(const ojson& j, const char* key) {
  const ojson& a = j.at(key);
  if (!a.is_array() || a.size() != 3) {
    throw InputError(std::string("expected 3-vector for '") + key + "'");
  }
  return Vec3(a[0].get<double>(), a[1].get<double>(), a[2].get<double>());
}

Vec4 vec4_of(const ojson& j, const char* key) {
  const ojson& a = j.at(key);
  if (!a.is_array() || a.size() != 4) {
    throw InputError(std::string("expected 4-vector for '") + key + "'");
  }
  return Vec4(a[0].get<double>(), a[1].get<double>(), a[2].get<double>(),
              a[3].get<double>());
}

// Parses each line; json errors become InputError tagged with the line.
template <typename F>
void for_each_line(const std::string& text, const char* what, F&& f) {
  std::size_t index = 0;
  for (const std::string& line : split_lines(text)) {
    try {
      f(ojson::parse(line), index);
    } catch (const ojson::exception& e) {
      throw InputError(std::string(what) + " line " + std::to_string(index + 1) +
                       ": " + e.what());
    }
    ++index;
  }
}

}  // namespace

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

std::string read_file(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw InputError("cannot open " + file);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw InputError("cannot write " + file);
  out << text;
  if (!out) throw InputError("write failed: " + file);
}

WaypointFile waypoints_from_json_text(const std::string& text) {
  WaypointFile wf;
  try {
    const ojson j = ojson::parse(text);
    for (const ojson& p : j.at("waypoints")) {
      if (!p.is_array() || p.size() != 3) {
        throw InputError("waypoints: each entry must be [x, y, z]");
      }
      wf.waypoints.points.emplace_back(p[0].get<double>(), p[1].get<double>(),
                                       p[2].get<double>());
    }
    if (j.contains("v_nom")) wf.v_nom = j["v_nom"].get<double>();
  } catch (const ojson::exception& e) {
    throw InputError(std::string("waypoints: ") + e.what());
  }
  if (wf.waypoints.size() < 2) throw InputError("waypoints: need at least 2");
  if (!(wf.v_nom > 0.0)) throw InputError("waypoints: v_nom must be > 0");
  return wf;
}

std::string waypoints_to_json_text(const WaypointFile& wf) {
  ojson j;
  j["waypoints"] = ojson::array();
  for (const Vec3& p : wf.waypoints.points) j["waypoints"].push_back(vec_json(p));
  j["v_nom"] = wf.v_nom;
  return j.dump() + "\n";
}

path::DiscretizedPath path_from_jsonl(const std::string& text) {
  path::DiscretizedPath p;
  long expected = -1;
  for_each_line(text, "path", [&](const ojson& j, std::size_t i) {
    if (i == 0) {
      expected = j.at("N").get<long>();
      p.ds = j.at("ds").get<double>();
      return;
    }
    p.s.push_back(j.at("s").get<double>());
    p.gamma.push_back(vec3_of(j, "gamma"));
    p.dgamma.push_back(vec3_of(j, "dgamma"));
    p.ddgamma.push_back(vec3_of(j, "ddgamma"));
  });
  if (expected < 0) throw InputError("path: missing header");
  if (static_cast<long>(p.size()) != expected) {
    throw InputError("path: header N does not match the row count");
  }
  p.validate();
  return p;
}

std::string path_to_jsonl(const path::DiscretizedPath& p) {
  std::string out;
  ojson head;
  head["N"] = p.size();
  head["ds"] = p.ds;
  out += head.dump() + "\n";
  for (std::size_t i = 0; i < p.size(); ++i) {
    ojson row;
    row["s"] = p.s[i];
    row["gamma"] = vec_json(p.gamma[i]);
    row["dgamma"] = vec_json(p.dgamma[i]);
    row["ddgamma"] = vec_json(p.ddgamma[i]);
    out += row.dump() + "\n";
  }
  return out;
}

flat::SpeedYawProfile profile_from_jsonl(const std::string& text) {
  std::vector<double> h, c, yaw;
  bool has_yaw = true;
  for_each_line(text, "profile", [&](const ojson& j, std::size_t) {
    h.push_back(j.at("h").get<double>());
    c.push_back(j.at("cos_yaw").get<double>());
    if (j.contains("yaw")) {
      yaw.push_back(j["yaw"].get<double>());
    } else {
      has_yaw = false;
    }
  });
  if (h.empty()) throw InputError("profile: no rows");
  flat::SpeedYawProfile p;
  if (has_yaw) {
    p.h = std::move(h);
    p.cos_yaw = std::move(c);
    p.yaw = std::move(yaw);
  } else {
    p = flat::SpeedYawProfile::from_cos(std::move(h), std::move(c));
  }
  p.validate();
  return p;
}

std::string profile_to_jsonl(const flat::SpeedYawProfile& p,
                             const std::vector<double>& s) {
  if (!s.empty() && s.size() != p.size()) {
    throw InputError("profile: s column length mismatch");
  }
  std::string out;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ojson row;
    if (s.empty()) {
      row["s"] = static_cast<double>(i);
    } else {
      row["s"] = s[i];
    }
    row["h"] = p.h[i];
    row["cos_yaw"] = p.cos_yaw[i];
    if (i < p.yaw.size()) row["yaw"] = p.yaw[i];
    out += row.dump() + "\n";
  }
  return out;
}

flat::FullTrajectory trajectory_from_jsonl(const std::string& text) {
  flat::FullTrajectory tr;
  for_each_line(text, "trajectory", [&](const ojson& j, std::size_t) {
    tr.t.push_back(j.at("t").get<double>());
    tr.p.push_back(vec3_of(j, "p"));
    tr.v.push_back(vec3_of(j, "v"));
    tr.a.push_back(vec3_of(j, "a"));
    const Vec4 q = vec4_of(j, "q");
    tr.q.emplace_back(q(0), q(1), q(2), q(3));
    tr.omega.push_back(vec3_of(j, "omega"));
    tr.u.push_back(vec4_of(j, "u"));
  });
  if (tr.size() == 0) throw InputError("trajectory: no rows");
  tr.alpha = tr.size() > 1 ? flat::angular_acceleration(tr.omega, tr.t)
                           : Vec3List(1, Vec3::Zero());
  tr.validate();
  return tr;
}

std::string trajectory_to_jsonl(const flat::FullTrajectory& tr) {
  std::string out;
  for (std::size_t i = 0; i < tr.size(); ++i) {
    ojson row;
    row["t"] = tr.t[i];
    row["p"] = vec_json(tr.p[i]);
    row["v"] = vec_json(tr.v[i]);
    row["a"] = vec_json(tr.a[i]);
    const Quat& q = tr.q[i];
    row["q"] = ojson::array({q.w(), q.x(), q.y(), q.z()});
    row["omega"] = vec_json(tr.omega[i]);
    row["u"] = vec_json(tr.u[i]);
    out += row.dump() + "\n";
  }
  return out;
}

std::string diagnostics_to_json_text(const topp::ToppSolution& s) {
  ojson j;
  j["T"] = s.T;
  j["objective"] = s.objective;
  j["converged"] = s.diagnostics.converged;
  j["max_violation"] = s.diagnostics.max_violation;
  j["iters"] = s.diagnostics.iterations;
  return j.dump(2) + "\n";
}

}  // namespace toppkit::io
