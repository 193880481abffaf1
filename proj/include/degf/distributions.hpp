// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Algebra over next-token score vectors.
 *
 * LogitVector holds unnormalized scores f(y_t | ...) with an explicit MASKED
 * sentinel; ProbVector holds a normalized distribution. Divergences are in
 * bits (base-2 logarithms), so the Jensen-Shannon divergence lies in [0, 1].
 *
 * Summation order: every reduction walks token ids in ascending order with
 * Neumaier-compensated accumulation. Results are therefore identical across
 * runs and platforms that share IEEE-754 double semantics.
 */

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "degf/errors.hpp"

namespace degf {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// MASKED sentinel. Never participates in arithmetic: fusion and softmax
/// test for it explicitly.
inline constexpr double kMasked = -std::numeric_limits<double>::infinity();

inline bool is_masked(double v) { return v == kMasked; }

class LogitVector {
 public:
  /// Throws DimensionError for fewer than two entries, InvalidDistribution
  /// for NaN or +inf, DegenerateDistribution when every entry is MASKED.
  explicit LogitVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  bool masked(std::size_t i) const { return is_masked(values_[i]); }
  std::span<const double> values() const { return values_; }
  std::size_t unmasked_count() const;

  friend bool operator==(const LogitVector&, const LogitVector&) = default;

 private:
  std::vector<double> values_;
};

class ProbVector {
 public:
  /// Entries must lie in [0, 1] and sum to 1 within 1e-9 (relative).
  explicit ProbVector(std::vector<double> values);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

  friend bool operator==(const ProbVector&, const ProbVector&) = default;

 private:
  std::vector<double> values_;
};

struct Vocabulary {
  std::size_t size = 0;
  TokenId eos_id = 0;
  /// Optional display strings, empty or exactly `size` entries.
  std::vector<std::string> token_text;

  /// Throws ConfigError when an invariant is broken.
  void validate() const;
  std::string text(TokenId id) const;
  /// Renders a response for humans and for downstream prompts; EOS is dropped
  /// and punctuation-only tokens attach to the preceding word.
  std::string detokenize(std::span<const TokenId> tokens) const;
};

/// Boolean keep-set over the vocabulary.
class KeepSet {
 public:
  explicit KeepSet(std::vector<bool> keep);

  std::size_t dimension() const { return keep_.size(); }
  std::size_t count() const { return count_; }
  bool empty() const { return count_ == 0; }
  bool contains(std::size_t i) const { return keep_[i]; }
  std::vector<std::size_t> indices() const;
  /// True when every member of *this is also in `other`.
  bool subset_of(const KeepSet& other) const;

  static KeepSet all(std::size_t dimension);

 private:
  std::vector<bool> keep_;
  std::size_t count_ = 0;
};

/// Compensated running sum (Neumaier).
class CompensatedSum {
 public:
  void add(double x);
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// Temperature-scaled softmax, max-subtracted. MASKED entries map to exactly 0.
ProbVector softmax(const LogitVector& logits, double temperature = 1.0);

/// KL(p || q) in bits. 0 * log(0 / x) := 0; p_i > 0 with q_i = 0 yields +inf.
double kl_divergence(const ProbVector& p, const ProbVector& q);

/// JS(p || q) = KL(p || m)/2 + KL(q || m)/2 with m = (p + q)/2, in bits.
///
/// Each KL term is accumulated as p_i * log2(2 p_i / (p_i + q_i)), which is
/// p_i * log2(p_i / m_i) without forming m_i (m_i could underflow to zero for
/// subnormal p_i). p_i + q_i is bitwise commutative, so the result is exactly
/// symmetric. Clamped to [0, 1].
double js_divergence(const ProbVector& p, const ProbVector& q);

/// Tokens with reference_i >= beta * max(reference). Never empty.
KeepSet plausibility_mask(const ProbVector& reference, double beta);

/// Dropped entries become MASKED; kept entries are copied bit-for-bit.
LogitVector apply_mask(const LogitVector& logits, const KeepSet& keep);

struct TokenProb {
  TokenId token = 0;
  double prob = 0.0;

  friend bool operator==(const TokenProb&, const TokenProb&) = default;
};

/// The k most probable tokens, ties broken by lower id.
std::vector<TokenProb> top_k(const ProbVector& p, std::size_t k);

}  // namespace degf
