#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "levitate/analysis.hpp"
#include "levitate/classical.hpp"
#include "levitate/config.hpp"
#include "levitate/io.hpp"
#include "levitate/model.hpp"
#include "levitate/pipelines.hpp"
#include "levitate/quantum.hpp"
#include "oracles.hpp"

using namespace levitate;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kSource = LEVITATE_SOURCE_DIR;
const fs::path kWork = "acceptance_out";

int failures = 0;

std::string fmt(const char *f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void criterion(int id, const std::string &name, const std::function<std::pair<bool, std::string>()> &body) {
  bool pass = false;
  std::string detail;
  try {
    std::tie(pass, detail) = body();
  } catch (const std::exception &e) {
    detail = std::string("exception: ") + e.what();
  }
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " " << id << " " << name << ": " << detail << std::endl;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// Every non-metadata file in a is present and byte-identical in b.
std::pair<bool, int> same_outputs(const fs::path &a, const fs::path &b) {
  int n = 0;
  for (const auto &e : fs::directory_iterator(a)) {
    if (e.path().filename() == "metadata.json") continue;
    if (!fs::exists(b / e.path().filename()) || slurp(e.path()) != slurp(b / e.path().filename())) return {false, n};
    ++n;
  }
  return {n > 0, n};
}

config::RunConfig bundled(const std::string &name, const fs::path &out, int threads) {
  auto cfg = config::load_config(kSource / "configs" / name);
  cfg.output_dir = out;
  cfg.threads = threads;
  return cfg;
}

} // namespace

int main() {
  unsetenv("LEVITATE_OUTPUT_DIR");
  fs::remove_all(kWork);
  fs::create_directories(kWork);

  // Shared runs: the bundled classical config at 1 and 2 threads.
  json classical_report;
  double classical_seconds = 0;
  bool classical_same = false;
  std::string classical_error;
  int classical_files = 0;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    classical_report = pipeline::run(bundled("paper_classical.cfg", kWork / "classical_t1", 1));
    classical_seconds = seconds_since(t0);
    pipeline::run(bundled("paper_classical.cfg", kWork / "classical_t2", 2));
    std::tie(classical_same, classical_files) = same_outputs(kWork / "classical_t1", kWork / "classical_t2");
  } catch (const std::exception &e) {
    classical_error = e.what();
  }

  criterion(1, "classical bimodality", [&]() -> std::pair<bool, std::string> {
    if (!classical_error.empty()) throw std::runtime_error(classical_error);
    const auto &ad = classical_report["ashman_d_final"];
    if (ad.is_null()) return {false, "final double-Gaussian fit did not converge"};
    const double a = ad.get<double>();
    const int n = classical_report["n_trajectories"];
    const bool ok = std::abs(a - 3.32) <= 0.5 && n >= 689 && classical_seconds <= 300;
    return {ok, fmt("A_D = %.4f (target 3.32 +- 0.5), %d trajectories, %d escaped, end-of-train pipeline %.1f s "
                    "including relaxation (limit 300 s)",
                    a, n, classical_report["n_escaped"].get<int>(), classical_seconds)};
  });

  criterion(2, "Ashman D exactness", []() -> std::pair<bool, std::string> {
    const double base = analysis::ashman_d(0.0, 2.0, 1.0, 1.0);
    double worst = 0;
    for (double shift : {-7.0, 0.5, 1e3})
      worst = std::max(worst, std::abs(analysis::ashman_d(shift, 2.0 + shift, 1.0, 1.0) - 2.0));
    for (double scale : {1e-9, 0.37, 4e5})
      worst = std::max(worst, std::abs(analysis::ashman_d(0.0, 2.0 * scale, scale, scale) - 2.0));
    const bool ok = std::abs(base - 2.0) <= 1e-12 && worst <= 1e-12;
    return {ok, fmt("A_D(0,2,1,1) - 2 = %.2e, worst shift/scale deviation %.2e (tol 1e-12)", base - 2.0, worst)};
  });

  criterion(3, "equipartition and PSD calibration", [&]() -> std::pair<bool, std::string> {
    const auto cfg = bundled("paper_calibrate.cfg", kWork / "calibrate_t1", 1);
    const auto c = pipeline::run_calibrate(cfg, kWork / "calibrate_t1");
    const double var = c.position_variance / c.expected_variance - 1.0;
    const double w = c.fit.omega0 / c.omega_expected - 1.0;
    const double g = c.fit.gamma / c.gamma_expected - 1.0;
    const bool ok = std::abs(var) <= 0.05 && std::abs(w) <= 0.01 && std::abs(g) <= 0.10;
    return {ok, fmt("<x^2> off by %+.2f%% (5%%), omega0 off by %+.3f%% (1%%), Gamma off by %+.2f%% (10%%) "
                    "at 500 Pa, Gamma_expected = %.4g 1/s",
                    100 * var, 100 * w, 100 * g, c.gamma_expected)};
  });

  criterion(4, "relaxation time", [&]() -> std::pair<bool, std::string> {
    if (!classical_error.empty()) throw std::runtime_error(classical_error);
    const auto &r = classical_report["relaxation"];
    const double tau = r["tau"], expected = r["tau_expected"];
    const bool ok = std::abs(tau / expected - 1.0) <= 0.2 && expected >= 15e-3 && expected <= 20e-3;
    return {ok, fmt("tau = %.3f ms vs 1/Gamma_m = %.3f ms (ratio %.3f, tol 20%%); 1/Gamma_m in [15, 20] ms",
                    1e3 * tau, 1e3 * expected, tau / expected)};
  });

  criterion(5, "linear-regime covariance oracle", []() -> std::pair<bool, std::string> {
    const auto cfg = config::load_config(kSource / "configs/paper_classical.cfg");
    const auto &run = std::get<config::ClassicalRun>(cfg.run);
    auto physics = classical::make_physics(run.trap, run.particle, run.gas);
    const double omega = physics.omega();
    physics.force = classical::LinearForce{omega};
    physics.damping = 0.0;
    physics.temperature = 0.0;
    const auto &protocol = run.protocol;
    classical::SimConfig sim = run.sim;
    sim.dt = 2 * kPi / omega / 2000;
    sim.scheme = classical::StepScheme::velocity_verlet;
    sim.n_trajectories = 1000;
    sim.escape_bound = 1.0;
    sim.duration = protocol.train_duration();
    sim.snapshot_times = {0.0, protocol.pulse_period(), 5 * protocol.pulse_period(), protocol.train_duration()};
    const auto ens = classical::run_ensemble(protocol, sim, physics, run.initial_temperature);
    const Eigen::Matrix2d sigma0 = oracle::covariance(ens.snapshots[0].points);
    const Eigen::Matrix2d scale = Eigen::Vector2d(1.0, 1.0 / omega).asDiagonal();
    std::string detail;
    bool ok = true;
    const int pulses[] = {0, 1, 5, 55};
    for (std::size_t j = 1; j < ens.snapshots.size(); ++j) {
      const Eigen::Matrix2d m = scale * oracle::pulse_map(protocol, omega, ens.snapshots[j].time) * scale.inverse();
      const double err = oracle::max_relative_error(oracle::covariance(ens.snapshots[j].points), m * sigma0 * m.transpose());
      ok = ok && err <= 0.01;
      detail += fmt("%s%d pulses %.2e", j > 1 ? ", " : "", pulses[j], err);
    }
    return {ok, "max elementwise relative error " + detail + " (tol 1e-2)"};
  });

  criterion(6, "quantum negativity", []() -> std::pair<bool, std::string> {
    quantum::InitialStateSpec fock1;
    fock1.kind = quantum::StateKind::fock;
    fock1.n = 1;
    const auto grid = quantum::make_grid(512, pipeline::default_half_width(fock1, std::sqrt(400.0)));
    const auto rho = quantum::prepare_initial_state(fock1, grid);
    const double n1 = quantum::wigner_negativity(quantum::wigner_transform(rho));
    const double closed = -oracle::fock1_negativity();

    const auto small = quantum::make_grid(256, 12.0);
    const auto rho_s = quantum::prepare_initial_state(fock1, small);
    quantum::PropagationOptions opts;
    opts.snapshot_times = {2 * kPi, 4 * kPi, 6 * kPi};
    const PulseProtocol steady{0.5, 1.0, 1.0, 0, 1, 0.0};
    const auto out = quantum::propagate(rho_s, quantum::harmonic_terms(small), steady, 6 * kPi, 0.0, 2 * kPi / 1000, opts);
    const double n0 = quantum::wigner_negativity(quantum::wigner_transform(rho_s));
    const double p0 = quantum::purity(rho_s);
    double dn = 0, dp = 0;
    for (const auto &s : out.snapshots) {
      dn = std::max(dn, std::abs(quantum::wigner_negativity(quantum::wigner_transform(s)) - n0));
      dp = std::max(dp, std::abs(quantum::purity(s) - p0));
    }
    const bool ok = std::abs(n1 - (-0.213)) <= 0.01 && dn <= 1e-6 && dp <= 1e-6;
    return {ok, fmt("N(|1>) = %.5f (target -0.213 +- 0.01, closed form %.5f); Lambda=0 over 3 periods: "
                    "|dN| = %.2e, |dPurity| = %.2e (tol 1e-6)",
                    n1, closed, dn, dp)};
  });

  // Shared quantum runs: bundled config at 1 and 2 threads.
  json quantum_report;
  double quantum_seconds = 0;
  std::string quantum_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    quantum_report = pipeline::run(bundled("paper_quantum.cfg", kWork / "quantum_t1", 1));
    quantum_seconds = seconds_since(t0);
  } catch (const std::exception &e) {
    quantum_error = e.what();
  }

  criterion(7, "quantum protocol reproduction", [&]() -> std::pair<bool, std::string> {
    if (!quantum_error.empty()) throw std::runtime_error(quantum_error);
    const json *thermal = nullptr, *blurred = nullptr;
    for (const auto &s : quantum_report["states"]) {
      if (s["kind"] == "thermal") thermal = &s;
      if (s["kind"] == "blurred_fock") blurred = &s;
    }
    if (!thermal || !blurred) return {false, "bundled config lacks a thermal or blurred_fock state"};
    const double thermal_max = (*thermal)["max_abs_delta_n"];
    const double blurred_final = (*blurred)["delta_n_final"];
    const auto &pi = (*blurred)["principal_peaks_initial_m"];
    const auto &pf = (*blurred)["principal_peaks_final_m"];
    const bool two_peaks = !pf.is_null() && pf["left"].get<double>() < 0 && pf["right"].get<double>() > 0;
    const bool wider = two_peaks && !pi.is_null() && pf["separation"].get<double>() > pi["separation"].get<double>();
    const bool ok = thermal_max < 1e-3 && blurred_final > 0 && two_peaks && wider && quantum_seconds <= 900;
    return {ok, fmt("thermal max|dN| = %.2e (< 1e-3); blurred Fock dN(final) = %+.4e (> 0); principal W_x peaks "
                    "at %.2f/%.2f nm, separation %.2f -> %.2f nm, %d local maxima; %.0f s for both states (limit 900 s)",
                    thermal_max, blurred_final, two_peaks ? 1e9 * pf["left"].get<double>() : 0.0,
                    two_peaks ? 1e9 * pf["right"].get<double>() : 0.0,
                    pi.is_null() ? 0.0 : 1e9 * pi["separation"].get<double>(),
                    two_peaks ? 1e9 * pf["separation"].get<double>() : 0.0,
                    (*blurred)["final_marginal_peaks"].get<int>(), quantum_seconds)};
  });

  criterion(8, "decoherence numbers", []() -> std::pair<bool, std::string> {
    TrapSpec t;
    t.wavelength = 1550e-9;
    t.waist = 750e-9;
    t.power_high = 0.5;
    const ParticleSpec p4{4e-9, 2200.0, 1.0};
    const double lambda = recoil_decoherence_constant(t, p4, 0.5, RecoilGeometry{1.0, 0.9, 2.0});
    const double w80 = 2 * kPi * 80e3;
    const double zpf4 = zero_point_fluctuation(particle_mass(p4), w80);
    const double gamma = recoil_rate(lambda, zpf4);
    const double zpf50 = zero_point_fluctuation(particle_mass(ParticleSpec{50e-9, 2200.0, 1.0}), 2 * kPi * 50e3);
    const double dx100 = fock_position_std(100, particle_mass(p4), w80);
    const bool ok = std::abs(lambda / 3.28e19 - 1) <= 0.02 && std::abs(gamma / 5.8 - 1) <= 0.02 &&
                    std::abs(std::round(zpf50 * 1e11) / 100 - 0.01) < 1e-12 && std::abs(dx100 / 6e-9 - 1) <= 0.05;
    return {ok, fmt("Lambda = %.4g Hz/m^2 (3.28e19 +- 2%%), Gamma = %.3f Hz (5.8 +- 2%%), zpf(50 nm, 50 kHz) = "
                    "%.4f nm (rounds to 0.01), dx_100 = %.3f nm (6 +- 5%%)",
                    lambda, gamma, zpf50 * 1e9, dx100 * 1e9)};
  });

  criterion(9, "determinism", [&]() -> std::pair<bool, std::string> {
    if (!classical_error.empty()) throw std::runtime_error(classical_error);
    if (!quantum_error.empty()) throw std::runtime_error(quantum_error);
    pipeline::run(bundled("paper_calibrate.cfg", kWork / "calibrate_a", 1));
    pipeline::run(bundled("paper_calibrate.cfg", kWork / "calibrate_b", 2));
    const auto [cal_same, cal_files] = same_outputs(kWork / "calibrate_a", kWork / "calibrate_b");
    pipeline::run(bundled("paper_quantum.cfg", kWork / "quantum_t2", 2));
    const auto [q_same, q_files] = same_outputs(kWork / "quantum_t1", kWork / "quantum_t2");
    const bool ok = classical_same && cal_same && q_same;
    return {ok, fmt("byte-identical outputs at 1 vs 2 threads: classical %s (%d files), calibrate %s (%d files), "
                    "quantum %s (%d files)",
                    classical_same ? "yes" : "no", classical_files, cal_same ? "yes" : "no", cal_files,
                    q_same ? "yes" : "no", q_files)};
  });

  criterion(10, "convergence", [&]() -> std::pair<bool, std::string> {
    if (!quantum_error.empty()) throw std::runtime_error(quantum_error);
    auto cfg = config::load_config(kSource / "configs/paper_classical.cfg");
    auto &run = std::get<config::ClassicalRun>(cfg.run);
    run.relaxation.reset();
    const double dt = run.sim.dt;
    run.sim.noise_substeps = 2;
    const auto coarse = pipeline::run_classical(cfg, std::nullopt);
    run.sim.dt = dt / 2;
    run.sim.noise_substeps = 1;
    const auto fine = pipeline::run_classical(cfg, std::nullopt);
    if (!coarse.final_ashman_d || !fine.final_ashman_d) return {false, "final fit did not converge"};
    const double rel = std::abs(*coarse.final_ashman_d / *fine.final_ashman_d - 1.0);

    auto qcfg = config::load_config(kSource / "configs/paper_quantum.cfg");
    auto &q = std::get<config::QuantumRun>(qcfg.run);
    double n512 = 0;
    for (const auto &s : quantum_report["states"])
      if (s["kind"] == "blurred_fock") n512 = s["negativity"].back();
    std::erase_if(q.states, [](const auto &s) { return s.spec.kind != quantum::StateKind::blurred_fock; });
    q.n_points = 2 * q.n_points;
    q.n_snapshots = 1;
    q.export_wigner = false;
    qcfg.threads = 1;
    const auto doubled = pipeline::run_quantum(qcfg, std::nullopt);
    const double n1024 = doubled.states.front().negativity.back();
    const bool ok = rel < 0.01 && std::abs(n1024 - n512) < 1e-3;
    return {ok, fmt("classical A_D %.5f at dt vs %.5f at dt/2 (same Brownian path), change %.3f%% (< 1%%); "
                    "blurred Fock N(final) %.6f at %d points vs %.6f at %d points, change %.2e (< 1e-3)",
                    *coarse.final_ashman_d, *fine.final_ashman_d, 100 * rel, n512, q.n_points / 2, n1024,
                    q.n_points, std::abs(n1024 - n512))};
  });

  std::cout << (failures == 0 ? "all criteria passed" : fmt("%d criteria failed", failures)) << std::endl;
  return failures == 0 ? 0 : 1;
}
