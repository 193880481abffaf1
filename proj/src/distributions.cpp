// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace degf {
namespace {

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    std::ostringstream msg;
    msg << what << ": dimension mismatch (" << a << " vs " << b << ")";
    throw DimensionError(msg.str());
  }
}

bool is_punctuation(const std::string& s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::ispunct(c) != 0;
  });
}

}  // namespace

LogitVector::LogitVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 2) {
    throw DimensionError("logit vector needs at least two entries");
  }
  bool any_live = false;
  for (double v : values_) {
    if (is_masked(v)) continue;
    if (!std::isfinite(v)) throw InvalidDistribution("logit vector has NaN or +inf entry");
    any_live = true;
  }
  if (!any_live) throw DegenerateDistribution("every logit is MASKED");
}

std::size_t LogitVector::unmasked_count() const {
  return static_cast<std::size_t>(
      std::count_if(values_.begin(), values_.end(), [](double v) { return !is_masked(v); }));
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw DimensionError("probability vector is empty");
  CompensatedSum total;
  for (double v : values_) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidDistribution("probability outside [0, 1]");
    total.add(v);
  }
  if (std::abs(total.value() - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg.precision(17);
    msg << "probabilities sum to " << total.value();
    throw InvalidDistribution(msg.str());
  }
}

void Vocabulary::validate() const {
  if (size < 2) throw ConfigError("vocabulary size must be at least 2");
  if (eos_id < 0 || static_cast<std::size_t>(eos_id) >= size) {
    throw ConfigError("eos_id must be < vocabulary size");
  }
  if (!token_text.empty() && token_text.size() != size) {
    throw ConfigError("token_text must be empty or have one entry per token");
  }
}

std::string Vocabulary::text(TokenId id) const {
  if (id >= 0 && static_cast<std::size_t>(id) < token_text.size()) return token_text[id];
  return "<" + std::to_string(id) + ">";
}

std::string Vocabulary::detokenize(std::span<const TokenId> tokens) const {
  std::string out;
  for (TokenId id : tokens) {
    if (id == eos_id) continue;
    std::string piece = text(id);
    if (!out.empty() && !is_punctuation(piece)) out += ' ';
    out += piece;
  }
  return out;
}

KeepSet::KeepSet(std::vector<bool> keep) : keep_(std::move(keep)) {
  count_ = static_cast<std::size_t>(std::count(keep_.begin(), keep_.end(), true));
}

std::vector<std::size_t> KeepSet::indices() const {
  std::vector<std::size_t> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < keep_.size(); ++i) {
    if (keep_[i]) out.push_back(i);
  }
  return out;
}

bool KeepSet::subset_of(const KeepSet& other) const {
  require_same_size(dimension(), other.dimension(), "KeepSet::subset_of");
  for (std::size_t i = 0; i < keep_.size(); ++i) {
    if (keep_[i] && !other.keep_[i]) return false;
  }
  return true;
}

KeepSet KeepSet::all(std::size_t dimension) { return KeepSet(std::vector<bool>(dimension, true)); }

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    comp_ += (sum_ - t) + x;
  } else {
    comp_ += (x - t) + sum_;
  }
  sum_ = t;
}

ProbVector softmax(const LogitVector& logits, double temperature) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw ConfigError("temperature must be a positive finite number");
  }
  double max_logit = kMasked;
  for (double v : logits.values()) {
    if (!is_masked(v)) max_logit = std::max(max_logit, v);
  }

  std::vector<double> out(logits.size(), 0.0);
  CompensatedSum total;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (logits.masked(i)) continue;
    out[i] = std::exp((logits[i] - max_logit) / temperature);
    total.add(out[i]);
  }
  // The max entry contributes exp(0) = 1, so total >= 1.
  const double norm = total.value();
  for (double& v : out) v /= norm;
  return ProbVector(std::move(out));
}

double kl_divergence(const ProbVector& p, const ProbVector& q) {
  require_same_size(p.size(), q.size(), "kl_divergence");
  CompensatedSum total;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    total.add(p[i] * std::log2(p[i] / q[i]));
  }
  return total.value();
}

namespace {

// KL(p || (p + q) / 2) in bits.
double kl_to_mixture(const ProbVector& p, const ProbVector& q) {
  CompensatedSum total;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    total.add(p[i] * std::log2((2.0 * p[i]) / (p[i] + q[i])));
  }
  return total.value();
}

}  // namespace

double js_divergence(const ProbVector& p, const ProbVector& q) {
  require_same_size(p.size(), q.size(), "js_divergence");
  const double a = kl_to_mixture(p, q);
  const double b = kl_to_mixture(q, p);
  return std::clamp(0.5 * (a + b), 0.0, 1.0);
}

KeepSet plausibility_mask(const ProbVector& reference, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ConfigError("beta must be in [0, 1]");
  const double peak = *std::max_element(reference.values().begin(), reference.values().end());
  const double cutoff = beta * peak;
  std::vector<bool> keep(reference.size());
  for (std::size_t i = 0; i < reference.size(); ++i) keep[i] = reference[i] >= cutoff;
  return KeepSet(std::move(keep));
}

LogitVector apply_mask(const LogitVector& logits, const KeepSet& keep) {
  require_same_size(logits.size(), keep.dimension(), "apply_mask");
  if (keep.empty()) throw DegenerateDistribution("keep-set is empty");
  std::vector<double> out(logits.values().begin(), logits.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!keep.contains(i)) out[i] = kMasked;
  }
  return LogitVector(std::move(out));
}

std::vector<TokenProb> top_k(const ProbVector& p, std::size_t k) {
  std::vector<TokenId> ids(p.size());
  std::iota(ids.begin(), ids.end(), 0);
  const std::size_t n = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n), ids.end(),
                    [&](TokenId a, TokenId b) { return p[a] > p[b] || (p[a] == p[b] && a < b); });
  std::vector<TokenProb> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back({ids[i], p[ids[i]]});
  return out;
}

}  // namespace degf
