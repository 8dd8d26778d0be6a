#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cadd {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole intrinsics. Pixel (u, v) denotes the center of column u, row v.
struct CameraIntrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const {
    return fx > 0.0 && fy > 0.0 && cx >= 0.0 && cx < width && cy >= 0.0 && cy < height;
  }
  void validate() const;
  double diagonal() const;
  bool operator==(const CameraIntrinsics&) const = default;
};

/// Rigid world-from-camera transform; camera looks along +z, x right, y down.
class CameraPose {
 public:
  CameraPose() : world_from_camera_(Mat4::Identity()) {}
  explicit CameraPose(const Mat4& world_from_camera);

  static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());
  static CameraPose from_translation(const Vec3& t);

  const Mat4& matrix() const { return world_from_camera_; }
  Mat3 rotation() const { return world_from_camera_.topLeftCorner<3, 3>(); }
  Vec3 translation() const { return world_from_camera_.topRightCorner<3, 1>(); }

  Vec3 to_world(const Vec3& camera_point) const { return rotation() * camera_point + translation(); }
  Vec3 to_camera(const Vec3& world_point) const {
    return rotation().transpose() * (world_point - translation());
  }

  static bool is_rigid(const Mat4& m, double tol = 1e-6);

 private:
  Mat4 world_from_camera_;
};

}  // namespace cadd
