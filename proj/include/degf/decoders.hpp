// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Per-token logit fusion rules.
 *
 * Every step function receives the logits conditioned on the original image
 * plus (except for regular decoding) one auxiliary evidence stream, and
 * returns the fused logits after adaptive plausibility masking. The keep-set
 * always comes from softmax(f_v), the original-image distribution, and the
 * divergence between the two streams is computed on the full vocabulary
 * before masking.
 *
 * Self-correcting (degf) rule with d = JS(softmax f_v, softmax f_v'):
 *
 *   d <  gamma  ->  f_v + alpha1 * f_v'                (complementary)
 *   d >= gamma  ->  (1 + alpha2) * f_v - alpha2 * f_v'  (contrastive)
 *
 * A MASKED entry in either stream stays MASKED in the fused output unless the
 * stream it comes from has a zero coefficient, in which case that stream is
 * not consulted at all.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "degf/distributions.hpp"
#include "degf/rng.hpp"

namespace degf {

enum class Decoder { regular, degf, vcd, m3id, ritual };
enum class Sampling { multinomial, greedy };
enum class Branch { complementary, contrastive, not_applicable };

std::string_view to_string(Decoder d);
std::string_view to_string(Sampling s);
std::string_view to_string(Branch b);
/// Throw ConfigError on unknown names.
Decoder parse_decoder(std::string_view name);
Sampling parse_sampling(std::string_view name);
Branch parse_branch(std::string_view name);

struct DecodeConfig {
  Decoder decoder = Decoder::degf;
  double alpha1 = 3.0;
  double alpha2 = 1.0;
  double gamma = 0.1;
  /// 0.25 by default; open-ended captioning runs use 0.1.
  double beta = 0.25;
  double vcd_alpha = 1.0;
  double m3id_lambda = 0.02;
  double ritual_kappa = 3.0;
  double temperature = 1.0;
  int max_new_tokens = 64;
  /// Cap on the first-pass (initial response) decode.
  int initial_max_tokens = 128;
  std::uint64_t seed = 0;
  Sampling sampling = Sampling::multinomial;

  /// Denoising steps requested from the visual generator.
  int diffusion_steps = 50;
  /// Generator noise seed; derived from (seed, instance id) when unset.
  std::optional<std::uint64_t> generator_seed;
  /// Forward-noise steps for the VCD distorted image.
  int vcd_noise_steps = 500;
  /// Augmentation selector passed to the backend for RITUAL.
  int ritual_augment = 0;

  /// Throws ConfigError naming the offending field and its valid range.
  void validate() const;

  /// Default beta for open-ended captioning.
  static constexpr double kCaptionBeta = 0.1;

  friend bool operator==(const DecodeConfig&, const DecodeConfig&) = default;
};

struct StepDecision {
  /// Fused logits after plausibility masking.
  LogitVector fused;
  /// JS divergence (bits) between the two conditioned distributions; 0 for
  /// regular decoding, which has a single stream.
  double distance = 0.0;
  Branch branch = Branch::not_applicable;
  std::size_t keep_set_size = 0;
  /// softmax(f_v, T): the original-image distribution.
  ProbVector original;
  /// softmax of the auxiliary stream, absent for regular decoding.
  std::optional<ProbVector> auxiliary;
  /// softmax(fused, T): the distribution the next token is drawn from.
  ProbVector final_distribution;
};

StepDecision regular_step(const LogitVector& f_v, const DecodeConfig& cfg);
StepDecision degf_step(const LogitVector& f_v, const LogitVector& f_vprime, const DecodeConfig& cfg);
StepDecision vcd_step(const LogitVector& f_v, const LogitVector& f_distorted, const DecodeConfig& cfg);
StepDecision m3id_step(const LogitVector& f_v, const LogitVector& f_textonly, std::int64_t t,
                       const DecodeConfig& cfg);
StepDecision ritual_step(const LogitVector& f_v, const LogitVector& f_transformed,
                         const DecodeConfig& cfg);

/// (1 - e^{-lambda t}) / e^{-lambda t}.
double m3id_coefficient(double lambda, std::int64_t t);

struct Draw {
  TokenId token = 0;
  Xoshiro256StarStar rng;
};

/// Multinomial: inverse CDF over ascending ids with one uniform variate.
/// Greedy: argmax with ties to the lowest id; does not advance the generator.
Draw sample(const ProbVector& p, Sampling mode, Xoshiro256StarStar rng);

}  // namespace degf
