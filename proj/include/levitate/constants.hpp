#pragma once

namespace levitate {

/// SI values (CODATA 2018, exact where the SI defines them).
template <typename Scalar>
struct PhysicalConstants {
  static constexpr Scalar kB = Scalar(1.380649e-23);      // J/K
  static constexpr Scalar hbar = Scalar(1.054571817e-34); // J s
  static constexpr Scalar c = Scalar(299792458.0);        // m/s
  static constexpr Scalar eps0 = Scalar(8.8541878128e-12); // F/m
};

using Constants = PhysicalConstants<double>;

inline constexpr double kPi = 3.14159265358979323846;

} // namespace levitate
