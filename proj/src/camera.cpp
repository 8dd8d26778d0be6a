#include "cadd/camera.hpp"

#include <cmath>
#include <stdexcept>

namespace cadd {

void CameraIntrinsics::validate() const {
  if (!valid())
    throw std::invalid_argument("CameraIntrinsics: require fx>0, fy>0 and principal point inside image");
}

double CameraIntrinsics::diagonal() const {
  return std::sqrt(static_cast<double>(width) * width + static_cast<double>(height) * height);
}

CameraPose::CameraPose(const Mat4& world_from_camera) : world_from_camera_(world_from_camera) {
  if (!is_rigid(world_from_camera))
    throw std::invalid_argument("CameraPose: matrix is not a rigid transform");
}

bool CameraPose::is_rigid(const Mat4& m, double tol) {
  if (!m.allFinite()) return false;
  if (std::abs(m(3, 0)) > tol || std::abs(m(3, 1)) > tol || std::abs(m(3, 2)) > tol ||
      std::abs(m(3, 3) - 1.0) > tol)
    return false;
  const Mat3 r = m.topLeftCorner<3, 3>();
  if (((r.transpose() * r) - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(r.determinant() - 1.0) <= tol;
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 0) = right;
  m.block<3, 1>(0, 1) = down;
  m.block<3, 1>(0, 2) = forward;
  m.block<3, 1>(0, 3) = eye;
  return CameraPose(m);
}

CameraPose CameraPose::from_translation(const Vec3& t) {
  Mat4 m = Mat4::Identity();
  m.block<3, 1>(0, 3) = t;
  return CameraPose(m);
}

}  // namespace cadd
