#pragma once

#include <array>
#include <cmath>

namespace df {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return {x / n, y / n, z / n};
  }
};

// 3x3 row-major
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 rot_y(double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {{c, 0, s, 0, 1, 0, -s, 0, c}};
  }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0;
        for (int k = 0; k < 3; ++k) s += m[static_cast<size_t>(3 * i + k)] * o.m[static_cast<size_t>(3 * k + j)];
        r.m[static_cast<size_t>(3 * i + j)] = s;
      }
    return r;
  }
  Mat3 transposed() const {
    return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
  Vec3 row(int i) const { return {m[static_cast<size_t>(3 * i)], m[static_cast<size_t>(3 * i + 1)], m[static_cast<size_t>(3 * i + 2)]}; }
  Vec3 col(int j) const { return {m[static_cast<size_t>(j)], m[static_cast<size_t>(3 + j)], m[static_cast<size_t>(6 + j)]}; }
};

// rigid transform: p' = R p + t
struct Rigid {
  Mat3 R;
  Vec3 t;

  static Rigid identity() { return {}; }
  Vec3 apply(const Vec3& p) const { return R * p + t; }
  Rigid inverse() const {
    Mat3 Rt = R.transposed();
    Vec3 ti = Rt * t;
    return {Rt, {-ti.x, -ti.y, -ti.z}};
  }
  Rigid compose(const Rigid& o) const {  // this ∘ o
    return {R * o.R, R * o.t + t};
  }
};

}  // namespace df
