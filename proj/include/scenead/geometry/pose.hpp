#pragma once

#include <Eigen/Geometry>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace scenead::geometry {

class PoseError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Intrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  bool valid() const { return fx > 0 && fy > 0 && width > 0 && height > 0; }
  bool operator==(const Intrinsics&) const = default;

  // Square pixels, principal point at the image centre.
  static Intrinsics from_fov(int width, int height, double hfov_deg) {
    const double f = 0.5 * width / std::tan(0.5 * hfov_deg * M_PI / 180.0);
    return {f, f, 0.5 * width, 0.5 * height, width, height};
  }
};

// Camera frame: x right, y down, z forward (right-handed).
// `rotation` maps world directions into the camera frame; `translation` is
// the camera centre in world coordinates.
struct CameraPose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  std::string intrinsics_ref = "cam0";

  Eigen::Matrix3d world_to_camera_rotation() const { return rotation.toRotationMatrix(); }
  // t in x_cam = R x_world + t
  Eigen::Vector3d world_to_camera_translation() const { return -(rotation * translation); }
  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation * (p_world - translation);
  }
};

inline Eigen::Quaterniond canonical(Eigen::Quaterniond q) {
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return q;
}

inline void validate(const CameraPose& p) {
  if (std::abs(p.rotation.norm() - 1.0) > 1e-9) throw PoseError("pose quaternion is not unit norm");
  if (p.rotation.w() < 0) throw PoseError("pose quaternion must have w >= 0");
  if (!p.translation.allFinite()) throw PoseError("pose translation is not finite");
}

inline CameraPose make_pose(const Eigen::Quaterniond& q, const Eigen::Vector3d& center,
                            std::string intrinsics_ref = "cam0") {
  return {canonical(q), center, std::move(intrinsics_ref)};
}

// Camera at `eye` looking at `target`; `up` is the approximate world up.
inline CameraPose look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                          const Eigen::Vector3d& up = Eigen::Vector3d::UnitZ()) {
  const Eigen::Vector3d z = (target - eye).normalized();
  Eigen::Vector3d x = z.cross(up);
  if (x.norm() < 1e-12) x = z.unitOrthogonal();
  x.normalize();
  const Eigen::Vector3d y = z.cross(x);
  Eigen::Matrix3d r;  // rows are camera axes in world coordinates
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  return make_pose(Eigen::Quaterniond(r), eye);
}

// Geodesic angle between two rotations, in radians.
inline double rotation_angle(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
  return 2.0 * std::acos(d);
}

// Shortest-arc slerp of the rotation, linear interpolation of the centre.
inline CameraPose interpolate_pose(const CameraPose& a, const CameraPose& b, double t) {
  if (a.intrinsics_ref != b.intrinsics_ref)
    throw PoseError("cannot interpolate poses with different intrinsics (" + a.intrinsics_ref +
                    " vs " + b.intrinsics_ref + ")");
  if (!(t >= 0.0 && t <= 1.0)) throw PoseError("interpolation parameter outside [0, 1]");
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  CameraPose out;
  out.intrinsics_ref = a.intrinsics_ref;
  out.translation = (1.0 - t) * a.translation + t * b.translation;
  out.rotation = canonical(a.rotation.slerp(t, b.rotation));
  return out;
}

using Trajectory = std::vector<std::size_t>;

// Nearest unvisited camera centre at each step; ties go to the lowest index.
inline Trajectory build_greedy_trajectory(const std::vector<CameraPose>& poses,
                                          std::size_t start_index = 0) {
  if (poses.empty()) throw PoseError("empty pose set");
  if (start_index >= poses.size())
    throw PoseError("start index " + std::to_string(start_index) + " out of range for " +
                    std::to_string(poses.size()) + " poses");
  std::vector<bool> visited(poses.size(), false);
  Trajectory order{start_index};
  visited[start_index] = true;
  std::size_t cur = start_index;
  for (std::size_t step = 1; step < poses.size(); ++step) {
    std::size_t best = poses.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < poses.size(); ++j) {
      if (visited[j]) continue;
      const double d = (poses[j].translation - poses[cur].translation).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = j;
      }
    }
    visited[best] = true;
    order.push_back(best);
    cur = best;
  }
  return order;
}

inline void validate_trajectory(const Trajectory& tr, std::size_t n) {
  std::vector<bool> seen(n, false);
  if (tr.size() != n) throw PoseError("trajectory length differs from pose count");
  for (auto i : tr) {
    if (i >= n || seen[i]) throw PoseError("trajectory is not a permutation of the pose set");
    seen[i] = true;
  }
}

// k poses strictly between each consecutive pair, at t = i/(k+1).
inline std::vector<CameraPose> densify_trajectory(const std::vector<CameraPose>& poses,
                                                  const Trajectory& trajectory, int k) {
  if (k < 1) throw PoseError("densify needs k >= 1");
  validate_trajectory(trajectory, poses.size());
  std::vector<CameraPose> out;
  if (trajectory.size() < 2) return out;
  out.reserve(static_cast<std::size_t>(k) * (trajectory.size() - 1));
  for (std::size_t s = 0; s + 1 < trajectory.size(); ++s) {
    const auto& a = poses[trajectory[s]];
    const auto& b = poses[trajectory[s + 1]];
    for (int i = 1; i <= k; ++i)
      out.push_back(interpolate_pose(a, b, static_cast<double>(i) / (k + 1)));
  }
  return out;
}

// poses.json: relative image path -> world-to-camera quaternion (wxyz) and
// translation (x_cam = R x_world + t), plus the intrinsics record.
struct PoseFile {
  std::map<std::string, CameraPose> poses;
  std::map<std::string, Intrinsics> intrinsics;
};

inline nlohmann::json to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

inline Intrinsics intrinsics_from_json(const nlohmann::json& j) {
  Intrinsics k{j.at("fx"), j.at("fy"), j.at("cx"), j.at("cy"), j.at("width"), j.at("height")};
  if (!k.valid()) throw PoseError("degenerate intrinsics");
  return k;
}

inline nlohmann::json pose_to_json(const CameraPose& p) {
  const auto& q = p.rotation;
  const Eigen::Vector3d t = p.world_to_camera_translation();
  return {{"quaternion_wxyz", {q.w(), q.x(), q.y(), q.z()}},
          {"translation_xyz", {t.x(), t.y(), t.z()}},
          {"intrinsics", p.intrinsics_ref}};
}

inline CameraPose pose_from_json(const nlohmann::json& j) {
  const auto q = j.at("quaternion_wxyz").get<std::vector<double>>();
  const auto t = j.at("translation_xyz").get<std::vector<double>>();
  if (q.size() != 4 || t.size() != 3) throw PoseError("pose entry needs 4 quaternion and 3 translation values");
  const Eigen::Quaterniond rq(q[0], q[1], q[2], q[3]);
  if (std::abs(rq.norm() - 1.0) > 1e-6) throw PoseError("pose quaternion is not unit norm");
  CameraPose p;
  p.rotation = canonical(rq);
  p.translation = -(p.rotation.conjugate() * Eigen::Vector3d(t[0], t[1], t[2]));
  p.intrinsics_ref = j.value("intrinsics", std::string("cam0"));
  return p;
}

inline nlohmann::json to_json(const PoseFile& f) {
  nlohmann::json j, poses = nlohmann::json::object(), intr = nlohmann::json::object();
  for (const auto& [k, v] : f.intrinsics) intr[k] = to_json(v);
  for (const auto& [k, v] : f.poses) poses[k] = pose_to_json(v);
  j["intrinsics"] = intr;
  j["poses"] = poses;
  return j;
}

inline PoseFile pose_file_from_json(const nlohmann::json& j) {
  PoseFile f;
  for (const auto& [k, v] : j.at("intrinsics").items()) f.intrinsics[k] = intrinsics_from_json(v);
  for (const auto& [k, v] : j.at("poses").items()) {
    auto p = pose_from_json(v);
    if (!f.intrinsics.count(p.intrinsics_ref))
      throw PoseError("pose '" + k + "' references unknown intrinsics '" + p.intrinsics_ref + "'");
    f.poses[k] = p;
  }
  return f;
}

}  // namespace scenead::geometry
