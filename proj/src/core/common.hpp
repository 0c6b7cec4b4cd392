#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace afw {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid configuration values (bad shape kind, grid too small, ...).
struct ConfigError : Error {
  using Error::Error;
};

// Caller broke an API contract (shape mismatch, empty mask, ...).
struct ContractError : Error {
  using Error::Error;
};

// Dataset / checkpoint / file problems.
struct DataError : Error {
  using Error::Error;
};

// (sin, cos) pair too close to the origin to define an angle.
struct DegenerateAngleError : Error {
  using Error::Error;
};

// A policy or selector could not produce an action.
struct NoActionError : Error {
  using Error::Error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2() = default;
  Vec2(double x_, double y_) : x(x_), y(y_) {}

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2 operator/(double s) const { return {x / s, y / s}; }
  Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }

  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm2() const { return x * x + y * y; }
  double norm() const { return std::sqrt(norm2()); }
};

inline double wrap_angle(double a) {
  // into [-pi, pi)
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

}  // namespace afw
