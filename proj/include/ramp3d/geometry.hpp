#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace ramp3d {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr bool operator==(const Vec3&) const = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline double distance(const Vec3& a, const Vec3& b) { return norm(a - b); }

inline Vec3 normalized(const Vec3& v) { return v / norm(v); }

/// Row-major 3x3 rotation.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  constexpr double operator()(int r, int c) const { return m[static_cast<std::size_t>(r * 3 + c)]; }
  constexpr double& operator()(int r, int c) { return m[static_cast<std::size_t>(r * 3 + c)]; }

  constexpr Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }

  constexpr Mat3 transposed() const {
    Mat3 t;
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) t(r, c) = (*this)(c, r);
    return t;
  }

  static constexpr Mat3 from_columns(const Vec3& a, const Vec3& b, const Vec3& c) {
    Mat3 out;
    out.m = {a.x, b.x, c.x, a.y, b.y, c.y, a.z, b.z, c.z};
    return out;
  }
};

/// Rigid transform p_world = rotation * p_local + translation.
struct Pose {
  Mat3 rotation;
  Vec3 translation;

  constexpr Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  constexpr Vec3 apply_inverse(const Vec3& p) const { return rotation.transposed() * (p - translation); }
};

/// Planar rotation about +z. Quarter turns are exact (no cos/sin rounding).
struct Yaw2 {
  double cos_yaw = 1.0;
  double sin_yaw = 0.0;

  static Yaw2 from_radians(double yaw) { return {std::cos(yaw), std::sin(yaw)}; }

  static constexpr Yaw2 from_quarter_turns(int turns) {
    switch (((turns % 4) + 4) % 4) {
      case 1: return {0.0, 1.0};
      case 2: return {-1.0, 0.0};
      case 3: return {0.0, -1.0};
      default: return {1.0, 0.0};
    }
  }

  constexpr Vec3 rotate(const Vec3& v) const {
    return {cos_yaw * v.x - sin_yaw * v.y, sin_yaw * v.x + cos_yaw * v.y, v.z};
  }
  constexpr Vec3 unrotate(const Vec3& v) const {
    return {cos_yaw * v.x + sin_yaw * v.y, -sin_yaw * v.x + cos_yaw * v.y, v.z};
  }
};

struct Aabb {
  Vec3 lo;
  Vec3 hi;

  constexpr bool intersects(const Aabb& o, double clearance = 0.0) const {
    return lo.x - clearance < o.hi.x && o.lo.x - clearance < hi.x &&
           lo.y - clearance < o.hi.y && o.lo.y - clearance < hi.y &&
           lo.z - clearance < o.hi.z && o.lo.z - clearance < hi.z;
  }
};

}  // namespace ramp3d
