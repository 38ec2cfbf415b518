#pragma once

// Closed-form stand-ins for the transistor-level simulator. Each model is a
// smooth function over its parameter box with fixed monotonic directions per
// parameter; the sign matrices are declared next to the constants in the
// shipped topology configs and checked by the test suite.
//
// Parameter units follow the configs: widths in um, resistances in Ohm,
// inductances in nH (pH for the LNA source inductor), bias voltages in mV.
// Metrics are SI (Hz, W) except gains (dB or V/V) and efficiencies (%).

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "core.hpp"

namespace cktdesign {

/// Constant table with fallbacks: values in the topology config override the
/// built-in defaults.
class SurrogateConstants {
 public:
  SurrogateConstants() = default;
  explicit SurrogateConstants(const BackendSpec* backend) : backend_(backend) {}

  double get(std::string_view key, double fallback) const {
    if (backend_)
      if (auto v = backend_->constant(key)) return *v;
    return fallback;
  }

 private:
  const BackendSpec* backend_ = nullptr;
};

struct CsConstants {
  double g0 = 5e-4;      // S/um, transconductance per unit width
  double c0 = 10e-15;    // F, fixed output capacitance
  double c1 = 20e-15;    // F/um, width-proportional capacitance
  double vdd = 1.2;      // V
  double j0 = 1.5e-4;    // A/um, bias current density

  static CsConstants from(const SurrogateConstants& c) {
    CsConstants k;
    k.g0 = c.get("g0", k.g0);
    k.c0 = c.get("c0", k.c0);
    k.c1 = c.get("c1", k.c1);
    k.vdd = c.get("vdd", k.vdd);
    k.j0 = c.get("j0", k.j0);
    return k;
  }
};

struct CsMetrics {
  double gain_db;
  double bandwidth_hz;
  double power_w;
};

/// Common-source amplifier: W in um, R_D in Ohm.
inline CsMetrics cs_surrogate(double width_um, double load_ohm, const CsConstants& k = {}) {
  if (!(width_um > 0.0) || !(load_ohm > 0.0))
    throw contract_violation("cs surrogate requires positive W and R_D");
  CsMetrics m;
  m.gain_db = 20.0 * std::log10(k.g0 * width_um * load_ohm);
  m.bandwidth_hz = 1.0 / (2.0 * std::numbers::pi * load_ohm * (k.c0 + k.c1 * width_um));
  m.power_w = k.vdd * k.j0 * width_um;
  return m;
}

namespace detail {

inline void require_positive(std::span<const double> x, std::string_view model) {
  for (double v : x)
    if (!(v > 0.0) || !std::isfinite(v))
      throw contract_violation(std::string(model) + " surrogate requires positive finite inputs");
}

inline void require_arity(std::span<const double> x, std::size_t n, std::string_view model) {
  if (x.size() != n)
    throw contract_violation(std::string(model) + " surrogate expects " + std::to_string(n) +
                             " parameters, got " + std::to_string(x.size()));
}

// metrics: bandwidth, gain, power
inline std::vector<double> cs(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 2, "cs");
  const auto m = cs_surrogate(x[0], x[1], CsConstants::from(c));
  return {m.bandwidth_hz, m.gain_db, m.power_w};
}

// params: W1, W2, R_D; metrics: bandwidth, gain, power
inline std::vector<double> cascode(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 3, "cascode");
  require_positive(x, "cascode");
  const double w1 = x[0], w2 = x[1], rd = x[2];
  const double gm = c.get("g1", 2.39e-4) * w1;
  const double boost = w2 / (w2 + c.get("w0", 1.0));
  const double cap = c.get("c0", 1e-15) + c.get("c1", 0.2e-15) * w1 + c.get("c2", 0.5e-15) * w2;
  const double bandwidth = 1.0 / (2.0 * std::numbers::pi * rd * cap);
  const double gain = 20.0 * std::log10(gm * rd * boost);
  const double power = c.get("vdd", 1.2) * (c.get("i0", 2e-5) + c.get("j1", 3.81e-5) * w1);
  return {bandwidth, gain, power};
}

// params: W1, W2, W_T; metrics: bandwidth, gain, power
inline std::vector<double> two_stage(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 3, "two-stage");
  require_positive(x, "two-stage");
  const double a = x[0] / 25.0, b = x[1] / 52.0, t = x[2] / 6.0;
  const double bandwidth = c.get("b0", 4.0e8) * std::pow(t, 1.5) / (a * b);
  const double gain = 20.0 * std::log10(c.get("a0", 600.0) * a * b * b / t);
  const double power = c.get("p0", 1.6e-4) + c.get("p1", 2.0e-4) * x[2];
  return {bandwidth, gain, power};
}

// params: W (um), L_g (nH), L_s (pH), L_d (nH); metrics: power_gain (dB), s11 (|S11|), nf (dB)
inline std::vector<double> lna(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 4, "lna");
  require_positive(x, "lna");
  const double w = x[0] / 73.0, lg = x[1] / 9.4, ls = 754.0 / x[2], ld = x[3] / 3.7;
  const double gain = c.get("g0_db", 13.0) +
                      20.0 * std::log10(std::pow(w, 0.8) * ld * std::sqrt(lg) * std::pow(ls, 3.0));
  const double s11 = c.get("s0", 0.112) * std::pow(w, 1.5) * std::pow(1.0 / lg * (10.8 / 9.4), 0.6) *
                     ls * ls;
  const double nf = c.get("nf0", 2.158) * std::sqrt((76.5 / 73.0) / w) * std::pow(lg, 0.55);
  return {gain, s11, nf};
}

// params: W_a, W_b (um), V_b1, V_b2 (mV); metrics: power_gain (dB), drain_efficiency (%), pae (%)
inline std::vector<double> pa(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 4, "pa");
  require_positive(x, "pa");
  const double vth = c.get("vth_mv", 700.0);
  const double ov1 = (x[2] - vth) / 100.0, ov2 = (x[3] - vth) / 100.0;
  if (!(ov1 > 0.0) || !(ov2 > 0.0)) throw contract_violation("pa surrogate: bias below threshold");
  const double a = x[0] / 18.0, b = x[1] / 27.0;
  const double g_lin = c.get("k_gain", 7.9 / (std::pow(0.85, 1.5) * 0.6)) * a * std::sqrt(b) *
                       std::pow(ov1, 1.5) * ov2;
  const double de = c.get("k_de", 12.0 * 1.15 * std::pow(0.9, 0.8) * std::pow(22.0 / 18.0, 0.4)) *
                    std::pow(b, 0.3) / ov1 / std::pow(ov2, 0.8) / std::pow(a, 0.4);
  const double pae = de * (1.0 - 1.0 / g_lin);
  return {10.0 * std::log10(g_lin), de, pae};
}

// params: W1, W_T (um), V_RF (mV), R (Ohm); metrics: conversion_gain (V/V), power (W), swing (mV)
inline std::vector<double> mixer(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 4, "mixer");
  require_positive(x, "mixer");
  const double ov = (x[2] - c.get("vth_mv", 500.0)) / 1000.0;
  if (!(ov > 0.0)) throw contract_violation("mixer surrogate: bias below threshold");
  const double current = c.get("kn", 3.84e-4) * x[1] * ov * ov;  // A
  const double ref_current = c.get("kn", 3.84e-4) * 17.1 * 0.13 * 0.13;
  const double gain = c.get("cg0", 0.7) * std::sqrt(x[0] * current / (8.55 * ref_current)) *
                      (x[3] / 240.0);
  const double power = c.get("vdd", 1.8) * current;
  const double swing = c.get("sw0", 0.8) * std::sqrt((current / x[0]) / (ref_current / 11.7)) *
                       (x[3] / 240.0);
  return {gain, power, swing};
}

// params: W1, W_T, W_V (um), L (nH); metrics: power (W), output_power (W), tuning_range (Hz)
inline std::vector<double> vco(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 4, "vco");
  require_positive(x, "vco");
  const double current = c.get("jt", 3.0e-5) * x[1] * std::pow(x[0] / 10.0, 0.3);
  const double cap = c.get("c0", 0.6e-12) + c.get("cv", 2e-15) * x[2] + c.get("c1", 10e-15) * x[0];
  const double inductance = x[3] * 1e-9;
  const double f0 = 1.0 / (2.0 * std::numbers::pi * std::sqrt(inductance * cap));
  const double power = c.get("vdd", 1.2) * current;
  const double output_power = c.get("kp", 4.95) * current * current * std::sqrt(inductance / cap);
  const double tuning = f0 * 0.5 * (c.get("kv", 0.25) * c.get("cv", 2e-15) * x[2]) / cap;
  return {power, output_power, tuning};
}

// params: p in [0, 2], q in [0, 1]; metrics: output (+), cost (-).
// f(p, q) == f(2 - p, q): the halves p < 1 and p > 1 are exact mirror images.
inline std::vector<double> twin_ridge(std::span<const double> x, const SurrogateConstants& c) {
  require_arity(x, 2, "twin-ridge");
  const double t = std::abs(x[0] - 1.0);
  const double q = x[1];
  const double output = c.get("o0", 1.0) + c.get("o1", 2.0) * t + c.get("o2", 1.0) * q;
  const double cost = c.get("k0", 1.0) + c.get("k1", 1.0) * t * t + c.get("k2", 2.0) * q * q;
  return {output, cost};
}

using SurrogateFn = std::vector<double> (*)(std::span<const double>, const SurrogateConstants&);

struct SurrogateEntry {
  std::string_view id;
  SurrogateFn fn;
  std::size_t n;
  std::size_t k;
};

inline constexpr std::array<SurrogateEntry, 8> surrogate_registry{{
    {"cs", &cs, 2, 3},
    {"cascode", &cascode, 3, 3},
    {"two-stage", &two_stage, 3, 3},
    {"lna", &lna, 4, 3},
    {"pa", &pa, 4, 3},
    {"mixer", &mixer, 4, 3},
    {"vco", &vco, 4, 3},
    {"twin-ridge", &twin_ridge, 2, 2},
}};

inline const SurrogateEntry* find_surrogate(std::string_view id) {
  for (const auto& e : surrogate_registry)
    if (e.id == id) return &e;
  return nullptr;
}

}  // namespace detail

/// Evaluate a built-in surrogate by model id with its default constants (or
/// those supplied).
inline MetricVector surrogate_family(std::string_view model_id, std::span<const double> x,
                                     const SurrogateConstants& constants = {}) {
  const auto* entry = detail::find_surrogate(model_id);
  if (!entry) throw config_error("unknown surrogate model '" + std::string(model_id) + "'");
  return MetricVector(entry->fn(x, constants));
}

}  // namespace cktdesign
