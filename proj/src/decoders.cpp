// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/decoders.hpp"

#include <cmath>
#include <sstream>

namespace degf {
namespace {

void require_same_size(const LogitVector& a, const LogitVector& b, const char* what) {
  if (a.size() != b.size()) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a.size() << " vs " << b.size() << ")";
    throw DimensionError(msg.str());
  }
}

void check_range(const char* name, double value, double lo, double hi) {
  if (!(value >= lo && value <= hi)) {
    std::ostringstream msg;
    msg << name << " must be in [" << lo << ", " << hi << "], got " << value;
    throw ConfigError(msg.str());
  }
}

void check_nonneg(const char* name, double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    std::ostringstream msg;
    msg << name << " must be a finite non-negative number, got " << value;
    throw ConfigError(msg.str());
  }
}

void check_positive(const char* name, long long value) {
  if (value <= 0) {
    std::ostringstream msg;
    msg << name << " must be a positive integer, got " << value;
    throw ConfigError(msg.str());
  }
}

// Elementwise combine(a_i, b_i). `consult_b` is false when b carries a zero
// coefficient; its MASKED entries then do not propagate.
template <typename Combine>
LogitVector fuse(const LogitVector& a, const LogitVector& b, bool consult_b, Combine combine) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.masked(i) || (consult_b && b.masked(i))) {
      out[i] = kMasked;
    } else if (b.masked(i)) {
      out[i] = a[i];
    } else {
      out[i] = combine(a[i], b[i]);
    }
  }
  return LogitVector(std::move(out));
}

// Masks `fused` with the keep-set derived from p = softmax(f_v) and packages
// the decision.
StepDecision finish(const LogitVector& fused, ProbVector original, std::optional<ProbVector> auxiliary,
                    double distance, Branch branch, const DecodeConfig& cfg) {
  const KeepSet keep = plausibility_mask(original, cfg.beta);
  LogitVector masked = apply_mask(fused, keep);
  ProbVector final_distribution = softmax(masked, cfg.temperature);
  return StepDecision{std::move(masked),   distance,
                      branch,              keep.count(),
                      std::move(original), std::move(auxiliary),
                      std::move(final_distribution)};
}

}  // namespace

std::string_view to_string(Decoder d) {
  switch (d) {
    case Decoder::regular: return "regular";
    case Decoder::degf: return "degf";
    case Decoder::vcd: return "vcd";
    case Decoder::m3id: return "m3id";
    case Decoder::ritual: return "ritual";
  }
  return "?";
}

std::string_view to_string(Sampling s) {
  return s == Sampling::greedy ? "greedy" : "multinomial";
}

std::string_view to_string(Branch b) {
  switch (b) {
    case Branch::complementary: return "complementary";
    case Branch::contrastive: return "contrastive";
    case Branch::not_applicable: return "not_applicable";
  }
  return "?";
}

Decoder parse_decoder(std::string_view name) {
  for (Decoder d : {Decoder::regular, Decoder::degf, Decoder::vcd, Decoder::m3id, Decoder::ritual}) {
    if (to_string(d) == name) return d;
  }
  throw ConfigError("unknown decoder '" + std::string(name) +
                    "' (expected regular, degf, vcd, m3id or ritual)");
}

Sampling parse_sampling(std::string_view name) {
  if (name == "multinomial") return Sampling::multinomial;
  if (name == "greedy") return Sampling::greedy;
  throw ConfigError("unknown sampling mode '" + std::string(name) + "' (expected multinomial or greedy)");
}

Branch parse_branch(std::string_view name) {
  for (Branch b : {Branch::complementary, Branch::contrastive, Branch::not_applicable}) {
    if (to_string(b) == name) return b;
  }
  throw ConfigError("unknown branch '" + std::string(name) + "'");
}

void DecodeConfig::validate() const {
  check_nonneg("alpha1", alpha1);
  check_nonneg("alpha2", alpha2);
  check_range("gamma", gamma, 0.0, 1.0);
  check_range("beta", beta, 0.0, 1.0);
  check_nonneg("vcd_alpha", vcd_alpha);
  check_nonneg("m3id_lambda", m3id_lambda);
  check_nonneg("ritual_kappa", ritual_kappa);
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    std::ostringstream msg;
    msg << "temperature must be a positive finite number, got " << temperature;
    throw ConfigError(msg.str());
  }
  check_positive("max_new_tokens", max_new_tokens);
  check_positive("initial_max_tokens", initial_max_tokens);
  check_positive("diffusion_steps", diffusion_steps);
  check_positive("vcd_noise_steps", vcd_noise_steps);
  if (ritual_augment < 0) throw ConfigError("ritual_augment must be non-negative");
}

StepDecision regular_step(const LogitVector& f_v, const DecodeConfig& cfg) {
  ProbVector p = softmax(f_v, cfg.temperature);
  return finish(f_v, std::move(p), std::nullopt, 0.0, Branch::not_applicable, cfg);
}

StepDecision degf_step(const LogitVector& f_v, const LogitVector& f_vprime, const DecodeConfig& cfg) {
  require_same_size(f_v, f_vprime, "degf_step");
  ProbVector p = softmax(f_v, cfg.temperature);
  ProbVector p_ref = softmax(f_vprime, cfg.temperature);
  const double d = js_divergence(p, p_ref);

  if (d < cfg.gamma) {
    const double a1 = cfg.alpha1;
    LogitVector fused = fuse(f_v, f_vprime, a1 != 0.0, [a1](double v, double r) { return v + a1 * r; });
    return finish(fused, std::move(p), std::move(p_ref), d, Branch::complementary, cfg);
  }
  const double a2 = cfg.alpha2;
  LogitVector fused =
      fuse(f_v, f_vprime, a2 != 0.0, [a2](double v, double r) { return (1.0 + a2) * v - a2 * r; });
  return finish(fused, std::move(p), std::move(p_ref), d, Branch::contrastive, cfg);
}

StepDecision vcd_step(const LogitVector& f_v, const LogitVector& f_distorted, const DecodeConfig& cfg) {
  require_same_size(f_v, f_distorted, "vcd_step");
  ProbVector p = softmax(f_v, cfg.temperature);
  ProbVector p_aux = softmax(f_distorted, cfg.temperature);
  const double d = js_divergence(p, p_aux);
  const double a = cfg.vcd_alpha;
  LogitVector fused =
      fuse(f_v, f_distorted, a != 0.0, [a](double v, double x) { return (1.0 + a) * v - a * x; });
  return finish(fused, std::move(p), std::move(p_aux), d, Branch::not_applicable, cfg);
}

double m3id_coefficient(double lambda, std::int64_t t) {
  const double decay = std::exp(-lambda * static_cast<double>(t));
  return (1.0 - decay) / decay;
}

StepDecision m3id_step(const LogitVector& f_v, const LogitVector& f_textonly, std::int64_t t,
                       const DecodeConfig& cfg) {
  require_same_size(f_v, f_textonly, "m3id_step");
  if (t < 0) throw ConfigError("m3id step index must be non-negative");
  ProbVector p = softmax(f_v, cfg.temperature);
  ProbVector p_aux = softmax(f_textonly, cfg.temperature);
  const double d = js_divergence(p, p_aux);
  const double c = m3id_coefficient(cfg.m3id_lambda, t);
  LogitVector fused =
      fuse(f_v, f_textonly, c != 0.0, [c](double v, double x) { return v + c * (v - x); });
  return finish(fused, std::move(p), std::move(p_aux), d, Branch::not_applicable, cfg);
}

StepDecision ritual_step(const LogitVector& f_v, const LogitVector& f_transformed,
                         const DecodeConfig& cfg) {
  require_same_size(f_v, f_transformed, "ritual_step");
  ProbVector p = softmax(f_v, cfg.temperature);
  ProbVector p_aux = softmax(f_transformed, cfg.temperature);
  const double d = js_divergence(p, p_aux);
  const double k = cfg.ritual_kappa;
  LogitVector fused =
      fuse(f_v, f_transformed, k != 0.0, [k](double v, double x) { return v + k * x; });
  return finish(fused, std::move(p), std::move(p_aux), d, Branch::not_applicable, cfg);
}

Draw sample(const ProbVector& p, Sampling mode, Xoshiro256StarStar rng) {
  if (mode == Sampling::greedy) {
    TokenId best = 0;
    for (std::size_t i = 1; i < p.size(); ++i) {
      if (p[i] > p[static_cast<std::size_t>(best)]) best = static_cast<TokenId>(i);
    }
    return {best, rng};
  }

  const double u = rng.uniform();
  double cumulative = 0.0;
  TokenId last_live = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    last_live = static_cast<TokenId>(i);
    cumulative += p[i];
    if (u < cumulative) return {last_live, rng};
  }
  // Rounding left the cumulative sum a hair below u.
  return {last_live, rng};
}

}  // namespace degf
