// SPDX-License-Identifier: Apache-2.0

#include "ega/session_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ega {

namespace {

using nlohmann::json;

// 17 significant digits: enough for an exact double round trip
std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string vec_json(const double* v, int n) {
  std::string out = "[";
  for (int i = 0; i < n; ++i) {
    if (i) out += ",";
    out += num(v[i]);
  }
  return out + "]";
}

std::string mat3_json(const Eigen::Matrix3d& m) {
  // row-major
  std::string out = "[";
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      if (r || c) out += ",";
      out += num(m(r, c));
    }
  }
  return out + "]";
}

std::string vec3_json(const Eigen::Vector3d& v) { return vec_json(v.data(), 3); }

Eigen::Matrix3d mat3_from(const json& a) {
  if (!a.is_array() || a.size() != 9) throw InputConsistencyError("expected 9-element matrix");
  Eigen::Matrix3d m;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) m(r, c) = a[3 * r + c].get<double>();
  }
  return m;
}

Eigen::Vector3d vec3_from(const json& a) {
  if (!a.is_array() || a.size() != 3) throw InputConsistencyError("expected 3-vector");
  return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputConsistencyError("cannot open for writing: " + path);
  return out;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputConsistencyError("cannot open for reading: " + path);
  return in;
}

std::string estimate_json_body(const AlignmentEstimate& e) {
  std::string out;
  out += "\"s\":" + num(e.s);
  out += ",\"theta_deg\":" + num(e.theta() * 180.0 / M_PI);
  out += ",\"rotation\":" + mat3_json(e.rotation);
  out += ",\"translation\":" + vec3_json(e.translation);
  out += ",\"has_lever_l\":" + std::string(e.has_lever_l ? "true" : "false");
  out += ",\"lever_l\":" + vec3_json(e.lever_l);
  out += ",\"has_lever_k\":" + std::string(e.has_lever_k ? "true" : "false");
  out += ",\"lever_k\":" + vec3_json(e.lever_k);
  out += ",\"residual\":" + num(e.residual);
  return out;
}

AlignmentEstimate estimate_from_json(const json& j) {
  AlignmentEstimate e;
  e.s = j.at("s").get<double>();
  e.rotation = mat3_from(j.at("rotation"));
  e.translation = vec3_from(j.at("translation"));
  e.has_lever_l = j.value("has_lever_l", true);
  e.has_lever_k = j.value("has_lever_k", true);
  e.lever_l = vec3_from(j.at("lever_l"));
  e.lever_k = vec3_from(j.at("lever_k"));
  e.residual = j.value("residual", 0.0);
  return e;
}

}  // namespace

void write_session(const std::string& path, const SessionData& session) {
  std::ofstream out = open_out(path);
  for (const auto& [id, stream] : session.streams) {
    if (stream.has_intrinsics) {
      out << "{\"type\":\"intrinsics\",\"stream\":\"" << id
          << "\",\"k\":" << mat3_json(stream.intrinsics.K)
          << ",\"width\":" << stream.intrinsics.width
          << ",\"height\":" << stream.intrinsics.height << "}\n";
    }
    if (stream.has_rig) {
      out << "{\"type\":\"rig\",\"stream\":\"" << id
          << "\",\"cam_from_imu_rotation\":" << mat3_json(stream.rig.cam_from_imu_rotation)
          << ",\"cam_from_imu_translation\":" << vec3_json(stream.rig.cam_from_imu_translation)
          << ",\"left_cam_in_imu\":" << vec3_json(stream.rig.left_cam_in_imu)
          << ",\"right_cam_in_imu\":" << vec3_json(stream.rig.right_cam_in_imu) << "}\n";
    }
    for (const auto& pose : stream.poses) {
      out << "{\"type\":\"pose\",\"stream\":\"" << id << "\",\"time\":" << num(pose.time)
          << ",\"rotation\":" << mat3_json(pose.rotation)
          << ",\"translation\":" << vec3_json(pose.translation) << "}\n";
    }
  }
  for (const auto& d : session.detections) {
    out << "{\"type\":\"detection\",\"observer\":\"" << d.observer
        << "\",\"time\":" << num(d.time) << ",\"pixel\":[" << num(d.pixel.x()) << ","
        << num(d.pixel.y()) << "]}\n";
  }
}

SessionData read_session(const std::string& path) {
  std::ifstream in = open_in(path);
  SessionData session;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw InputConsistencyError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string type = j.at("type").get<std::string>();
    if (type == "pose") {
      auto& stream = session.streams[j.at("stream").get<std::string>()];
      Pose6D pose;
      pose.time = j.at("time").get<double>();
      pose.rotation = mat3_from(j.at("rotation"));
      pose.translation = vec3_from(j.at("translation"));
      stream.poses.push_back(pose);
    } else if (type == "detection") {
      DetectionRecord d;
      d.observer = j.at("observer").get<std::string>();
      d.time = j.at("time").get<double>();
      const auto& px = j.at("pixel");
      d.pixel = {px.at(0).get<double>(), px.at(1).get<double>()};
      session.detections.push_back(std::move(d));
    } else if (type == "intrinsics") {
      auto& stream = session.streams[j.at("stream").get<std::string>()];
      stream.intrinsics.K = mat3_from(j.at("k"));
      stream.intrinsics.width = j.at("width").get<int>();
      stream.intrinsics.height = j.at("height").get<int>();
      stream.has_intrinsics = true;
    } else if (type == "rig") {
      auto& stream = session.streams[j.at("stream").get<std::string>()];
      stream.rig.cam_from_imu_rotation = mat3_from(j.at("cam_from_imu_rotation"));
      stream.rig.cam_from_imu_translation = vec3_from(j.at("cam_from_imu_translation"));
      stream.rig.left_cam_in_imu = vec3_from(j.at("left_cam_in_imu"));
      stream.rig.right_cam_in_imu = vec3_from(j.at("right_cam_in_imu"));
      stream.has_rig = true;
    } else {
      throw InputConsistencyError(path + ": unknown record type '" + type + "'");
    }
  }
  for (auto& [id, stream] : session.streams) {
    std::stable_sort(stream.poses.begin(), stream.poses.end(),
                     [](const Pose6D& a, const Pose6D& b) { return a.time < b.time; });
  }
  return session;
}

void write_sidecar(const std::string& path, const TruthSidecar& sidecar) {
  std::ofstream out = open_out(path);
  out << "{\"type\":\"truth\"," << estimate_json_body(sidecar.truth) << "}\n";
  out << "{\"type\":\"cube\",\"vertices\":[";
  for (int i = 0; i < 8; ++i) {
    for (int c = 0; c < 3; ++c) {
      if (i || c) out << ",";
      out << num(sidecar.cube[i][c]);
    }
  }
  out << "]}\n";
  out << "{\"type\":\"prior\",\"lever_l\":" << vec3_json(sidecar.prior_l)
      << ",\"lever_k\":" << vec3_json(sidecar.prior_k) << "}\n";
  auto labels = [&out](const char* name, const std::vector<bool>& v) {
    out << "{\"type\":\"outlier_labels\",\"observer\":\"" << name << "\",\"labels\":[";
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << (v[i] ? 1 : 0);
    out << "]}\n";
  };
  labels("A", sidecar.outliers_a);
  labels("B", sidecar.outliers_b);
}

TruthSidecar read_sidecar(const std::string& path) {
  std::ifstream in = open_in(path);
  TruthSidecar sc;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    const std::string type = j.at("type").get<std::string>();
    if (type == "truth") {
      sc.truth = estimate_from_json(j);
    } else if (type == "cube") {
      const auto& v = j.at("vertices");
      if (v.size() != 24) throw InputConsistencyError("sidecar: cube needs 24 floats");
      for (int i = 0; i < 8; ++i) {
        sc.cube[i] = {v[3 * i].get<double>(), v[3 * i + 1].get<double>(),
                      v[3 * i + 2].get<double>()};
      }
    } else if (type == "prior") {
      sc.prior_l = vec3_from(j.at("lever_l"));
      sc.prior_k = vec3_from(j.at("lever_k"));
    } else if (type == "outlier_labels") {
      auto& dst = j.at("observer").get<std::string>() == "A" ? sc.outliers_a : sc.outliers_b;
      for (const auto& x : j.at("labels")) dst.push_back(x.get<int>() != 0);
    }
  }
  return sc;
}

std::string estimate_to_json(const EstimateRecord& record) {
  std::string out = "{\"type\":\"estimate\",";
  out += estimate_json_body(record.estimate);
  out += ",\"inliers\":" + std::to_string(record.inliers);
  out += ",\"critical\":" + std::string(record.critical ? "true" : "false");
  return out + "}";
}

void write_estimate(const std::string& path, const EstimateRecord& record) {
  std::ofstream out = open_out(path);
  out << estimate_to_json(record) << "\n";
}

EstimateRecord read_estimate(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    if (j.at("type").get<std::string>() != "estimate") continue;
    EstimateRecord rec;
    rec.estimate = estimate_from_json(j);
    rec.inliers = j.value("inliers", -1);
    rec.critical = j.value("critical", false);
    return rec;
  }
  throw InputConsistencyError(path + ": no estimate record found");
}

void write_sweep_csv(const std::string& path, std::span<const SweepRow> rows) {
  std::ofstream out = open_out(path);
  out << "variant,sigma,trial,error_px,converged,iterations\n";
  for (const auto& r : rows) {
    out << r.variant << "," << num(r.sigma) << "," << r.trial << ",";
    if (r.converged && std::isfinite(r.error_px)) {
      out << num(r.error_px);
    } else {
      out << "failed";
    }
    out << "," << (r.converged ? 1 : 0) << "," << r.iterations << "\n";
  }
}

void write_sweep_summary_csv(const std::string& path, std::span<const SweepCell> cells) {
  std::ofstream out = open_out(path);
  out << "variant,sigma,trials,failures,mean_px,median_px\n";
  for (const auto& c : cells) {
    out << c.variant << "," << num(c.sigma) << "," << c.trials << "," << c.failures << ","
        << num(c.mean_px) << "," << num(c.median_px) << "\n";
  }
}

SessionData session_from_scenario(const Scenario& scenario) {
  SessionData session;
  for (int s = 0; s < 2; ++s) {
    auto& stream = session.streams[s == 0 ? "A" : "B"];
    stream.poses = s == 0 ? scenario.stream_a : scenario.stream_b;
    stream.intrinsics = scenario.config.intrinsics;
    stream.rig = scenario.config.rig;
    stream.has_intrinsics = stream.has_rig = true;
    const auto& detections = s == 0 ? scenario.detections_a : scenario.detections_b;
    const auto& poses = stream.poses;
    for (const auto& d : detections) {
      session.detections.push_back({s == 0 ? "A" : "B", poses[d.frame].time, d.pixel});
    }
  }
  return session;
}

SessionView resolve_session(const SessionData& session, double time_tolerance) {
  const auto it_a = session.streams.find("A");
  const auto it_b = session.streams.find("B");
  if (it_a == session.streams.end() || it_b == session.streams.end()) {
    throw InputConsistencyError("session must contain streams 'A' and 'B'");
  }
  const auto& sa = it_a->second;
  const auto& sb = it_b->second;
  if (!sa.has_intrinsics || !sb.has_intrinsics || !sa.has_rig || !sb.has_rig) {
    throw InputConsistencyError("session is missing intrinsics or rig records");
  }

  auto nearest = [&](const std::vector<Pose6D>& poses, double time) -> int {
    int best = -1;
    double best_dt = time_tolerance;
    for (int i = 0; i < static_cast<int>(poses.size()); ++i) {
      const double dt = std::abs(poses[i].time - time);
      if (dt <= best_dt) {
        best_dt = dt;
        best = i;
      }
    }
    return best;
  };

  SessionView view;
  view.stream_a = {sa.poses, sa.intrinsics, sa.rig};
  view.stream_b = {sb.poses, sb.intrinsics, sb.rig};
  for (const auto& d : session.detections) {
    const bool from_a = d.observer == "A";
    if (!from_a && d.observer != "B") {
      throw InputConsistencyError("unknown observer stream '" + d.observer + "'");
    }
    const auto& obs = from_a ? sa : sb;
    const auto& tgt = from_a ? sb : sa;
    const int io = nearest(obs.poses, d.time);
    const int it = nearest(tgt.poses, d.time);
    if (io < 0 || it < 0) {
      std::ostringstream msg;
      msg << "detection at t=" << d.time << " has no pose within " << time_tolerance << " s";
      throw InputConsistencyError(msg.str());
    }
    PointCorrespondence c;
    c.direction = from_a ? Direction::AseesB : Direction::BseesA;
    c.ray = backproject(d.pixel, obs.intrinsics);
    c.observer_cam_pose = obs.rig.camera_pose(obs.poses[io]);
    c.target_imu_pose = tgt.poses[it];
    view.correspondences.push_back(std::move(c));
    view.frames.push_back(io);
    if (from_a) {
      view.detections_a.push_back({io, d.pixel});
    } else {
      view.detections_b.push_back({io, d.pixel});
    }
  }
  return view;
}

ScenarioConfig read_scenario_config(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputConsistencyError(path + ": " + e.what());
  }
  ScenarioConfig cfg = default_scenario_config();
  cfg.seed = j.value("seed", cfg.seed);
  cfg.n_keyframes = j.value("n_keyframes", cfg.n_keyframes);
  if (j.contains("trajectory")) {
    const std::string t = j["trajectory"].get<std::string>();
    if (t == "lateral-sweep") {
      cfg.trajectory = Trajectory::LateralSweep;
    } else if (t == "orbit") {
      cfg.trajectory = Trajectory::Orbit;
    } else if (t == "small-head-motion") {
      cfg.trajectory = Trajectory::SmallHeadMotion;
    } else {
      throw InputConsistencyError("unknown trajectory '" + t + "'");
    }
  }
  cfg.true_theta_deg = j.value("true_theta_deg", cfg.true_theta_deg);
  if (j.contains("true_translation")) cfg.true_translation = vec3_from(j["true_translation"]);
  if (j.contains("lever_l")) cfg.lever_l = vec3_from(j["lever_l"]);
  if (j.contains("lever_k")) cfg.lever_k = vec3_from(j["lever_k"]);
  cfg.pixel_sigma = j.value("pixel_sigma", cfg.pixel_sigma);
  cfg.outlier_fraction = j.value("outlier_fraction", cfg.outlier_fraction);
  cfg.lever_prior_shift = j.value("lever_prior_shift", cfg.lever_prior_shift);
  cfg.allow_critical_theta = j.value("allow_critical_theta", cfg.allow_critical_theta);
  if (j.contains("focal")) {
    const double f = j["focal"].get<double>();
    cfg.intrinsics.K(0, 0) = cfg.intrinsics.K(1, 1) = f;
  }
  return cfg;
}

SweepConfig read_sweep_config(const std::string& path) {
  std::ifstream in = open_in(path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputConsistencyError(path + ": " + e.what());
  }
  SweepConfig cfg;
  cfg.base = default_scenario_config();
  cfg.base.seed = j.value("seed", cfg.base.seed);
  cfg.base.lever_prior_shift = j.value("lever_prior_shift", cfg.base.lever_prior_shift);
  if (j.contains("sigmas")) {
    for (const auto& s : j["sigmas"]) cfg.sigmas.push_back(s.get<double>());
  } else {
    for (int i = 0; i <= 10; ++i) cfg.sigmas.push_back(0.1 * i);
  }
  cfg.trials = j.value("trials", cfg.trials);
  if (j.contains("variants")) {
    for (const auto& v : j["variants"]) cfg.variants.push_back(v.get<std::string>());
  } else {
    cfg.variants = {"onedir", "bidir-none", "bidir-soft", "bidir-hard"};
  }
  return cfg;
}

}  // namespace ega
