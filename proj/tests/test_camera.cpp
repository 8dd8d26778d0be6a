#include <cmath>

#include <gtest/gtest.h>

#include "cadd/camera.hpp"
#include "cadd/geometry.hpp"

using namespace cadd;

namespace {
const CameraIntrinsics kK{100.0, 100.0, 31.5, 31.5, 64, 64};
}

TEST(Intrinsics, Validation) {
  EXPECT_NO_THROW(kK.validate());
  EXPECT_THROW((CameraIntrinsics{0.0, 100.0, 31.5, 31.5, 64, 64}).validate(), std::invalid_argument);
  EXPECT_THROW((CameraIntrinsics{100.0, 100.0, 70.0, 31.5, 64, 64}).validate(), std::invalid_argument);
  EXPECT_NEAR(kK.diagonal(), std::sqrt(2.0) * 64.0, 1e-12);
}

TEST(Pose, RejectsNonRigid) {
  Mat4 m = Mat4::Identity();
  m(0, 0) = 2.0;
  EXPECT_THROW(CameraPose{m}, std::invalid_argument);
  Mat4 reflect = Mat4::Identity();
  reflect(2, 2) = -1.0;
  EXPECT_THROW(CameraPose{reflect}, std::invalid_argument);
}

TEST(Pose, LookAtPointsForward) {
  const CameraPose p = CameraPose::look_at(Vec3(0.5, 0.2, 0.3), Vec3(0, 0, 0));
  const Vec3 cam = p.to_camera(Vec3(0, 0, 0));
  EXPECT_NEAR(cam.x(), 0.0, 1e-12);
  EXPECT_NEAR(cam.y(), 0.0, 1e-12);
  EXPECT_NEAR(cam.z(), Vec3(0.5, 0.2, 0.3).norm(), 1e-12);
  // World up projects to negative image y.
  EXPECT_LT(p.to_camera(Vec3(0, 0, 0.1)).y(), 0.0);
}

TEST(Projection, PrincipalPointRay) {
  const Vec3 w = unproject(Pixel{0, 0}, 0.7, CameraIntrinsics{100, 100, 0, 0, 64, 64}, CameraPose{});
  EXPECT_NEAR(w.x(), 0.0, 1e-15);
  EXPECT_NEAR(w.y(), 0.0, 1e-15);
  EXPECT_NEAR(w.z(), 0.7, 1e-15);
  const Projection pr = project(Vec3(0, 0, 2.0), kK, CameraPose{});
  EXPECT_NEAR(pr.pixel.u, kK.cx, 1e-12);
  EXPECT_NEAR(pr.pixel.v, kK.cy, 1e-12);
}

TEST(Projection, RoundTrip) {
  const CameraPose pose = CameraPose::look_at(Vec3(0.3, -0.4, 0.35), Vec3(0, 0, 0.02));
  for (int u = 0; u < 64; u += 7)
    for (int v = 0; v < 64; v += 5) {
      const Projection p = project(unproject(Pixel{u, v}, 0.55, kK, pose), kK, pose);
      EXPECT_NEAR(p.pixel.u, u, 1e-6);
      EXPECT_NEAR(p.pixel.v, v, 1e-6);
      EXPECT_NEAR(p.depth, 0.55, 1e-9);
    }
}

TEST(Projection, TranslationDisparity) {
  // Point at the world origin seen from z = -0.5; moving the camera +0.1 m along x
  // shifts the image point by -fx * 0.1 / z.
  const CameraPose a = CameraPose::from_translation(Vec3(0, 0, -0.5));
  const CameraPose b = CameraPose::from_translation(Vec3(0.1, 0, -0.5));
  const double du = project(Vec3::Zero(), kK, b).pixel.u - project(Vec3::Zero(), kK, a).pixel.u;
  EXPECT_NEAR(du, -kK.fx * 0.1 / 0.5, 1e-9);
}

TEST(Projection, Errors) {
  EXPECT_THROW(unproject(Pixel{1, 1}, 0.0, kK, CameraPose{}), std::domain_error);
  EXPECT_THROW(unproject(Pixel{1, 1}, -1.0, kK, CameraPose{}), std::domain_error);
  EXPECT_THROW(project(Vec3(0, 0, -1), kK, CameraPose{}), std::domain_error);
}
