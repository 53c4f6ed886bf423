#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "levitate/constants.hpp"
#include "levitate/error.hpp"

namespace levitate {

/// Square-wave trap-stiffness control. Each pulse is a low window of
/// `tau_low` followed by a high window of `tau_high`; a sequence is
/// `n_pulses` pulses followed by `inter_sequence_delay` at full stiffness.
template <typename Scalar>
struct BasicPulseProtocol {
  Scalar s_low{};
  Scalar tau_high{};
  Scalar tau_low{};
  int n_pulses = 0;
  int n_sequences = 1;
  Scalar inter_sequence_delay{};

  Scalar pulse_period() const { return tau_low + tau_high; }
  Scalar train_duration() const { return Scalar(n_pulses) * pulse_period(); }
  Scalar sequence_period() const { return train_duration() + inter_sequence_delay; }

  void validate(const std::string &path = "protocol") const {
    if (!(s_low > 0 && s_low < 1)) throw ConfigError("s_low must lie in (0, 1)", path + ".s_low");
    if (!(tau_high > 0)) throw ConfigError("tau_high must be > 0", path + ".tau_high");
    if (!(tau_low > 0)) throw ConfigError("tau_low must be > 0", path + ".tau_low");
    if (n_pulses < 0) throw ConfigError("n_pulses must be >= 0", path + ".n_pulses");
    if (n_sequences < 1) throw ConfigError("n_sequences must be >= 1", path + ".n_sequences");
    if (!(inter_sequence_delay >= 0))
      throw ConfigError("inter_sequence_delay must be >= 0", path + ".inter_sequence_delay");
  }
};

using PulseProtocol = BasicPulseProtocol<double>;

/// S(t): 1 at t' = 0 and on [tau_low, tau_low + tau_high], s_low on
/// (0, tau_low), with t' = t mod (tau_low + tau_high). Outside the trains
/// the trap sits at full power.
template <typename Scalar>
Scalar control_function(const BasicPulseProtocol<Scalar> &protocol, Scalar time) {
  if (protocol.n_pulses == 0 || time < 0) return Scalar(1);
  Scalar local = time;
  const Scalar seq = protocol.sequence_period();
  if (seq > 0) {
    const Scalar index = std::floor(time / seq);
    if (index >= Scalar(protocol.n_sequences)) return Scalar(1);
    local = time - index * seq;
  }
  if (local >= protocol.train_duration()) return Scalar(1);
  const Scalar phase = std::fmod(local, protocol.pulse_period());
  return (phase > 0 && phase < protocol.tau_low) ? protocol.s_low : Scalar(1);
}

/// Integral of S over [0, time].
template <typename Scalar>
Scalar control_integral(const BasicPulseProtocol<Scalar> &protocol, Scalar time) {
  if (protocol.n_pulses == 0 || time <= 0) return std::max(time, Scalar(0));
  auto low_in_train = [&](Scalar u) {
    if (u >= protocol.train_duration()) return Scalar(protocol.n_pulses) * protocol.tau_low;
    const Scalar k = std::floor(u / protocol.pulse_period());
    return k * protocol.tau_low + std::min(u - k * protocol.pulse_period(), protocol.tau_low);
  };
  const Scalar seq = protocol.sequence_period();
  const Scalar index = std::floor(time / seq);
  const Scalar full = std::min(index, Scalar(protocol.n_sequences));
  Scalar low = full * Scalar(protocol.n_pulses) * protocol.tau_low;
  if (index < Scalar(protocol.n_sequences)) low += low_in_train(time - index * seq);
  return time - (Scalar(1) - protocol.s_low) * low;
}

/// Mean of S over [t0, t1]; equals control_function inside a window.
template <typename Scalar>
Scalar control_average(const BasicPulseProtocol<Scalar> &protocol, Scalar t0, Scalar t1) {
  const Scalar a = control_function(protocol, t0), b = control_function(protocol, t1);
  const Scalar mid = control_function(protocol, Scalar(0.5) * (t0 + t1));
  if (a == b && b == mid && (protocol.n_pulses == 0 || t1 - t0 < std::min(protocol.tau_low, protocol.tau_high)))
    return mid;
  return (control_integral(protocol, t1) - control_integral(protocol, t0)) / (t1 - t0);
}

template <typename Scalar>
struct BasicPulseTiming {
  Scalar tau_high;
  Scalar tau_low;
};

/// Quarter oscillation at each level: tau_high = pi/(2 omega),
/// tau_low = pi/(2 omega sqrt(s_low)).
template <typename Scalar>
BasicPulseTiming<Scalar> protocol_timing(Scalar omega_high, Scalar s_low) {
  if (!(omega_high > 0)) throw ConfigError("omega_high must be > 0");
  if (!(s_low > 0 && s_low <= 1)) throw ConfigError("s_low must lie in (0, 1]");
  const Scalar quarter = Scalar(kPi) / (Scalar(2) * omega_high);
  return {quarter, quarter / std::sqrt(s_low)};
}

} // namespace levitate
