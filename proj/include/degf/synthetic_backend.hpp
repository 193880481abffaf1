// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Deterministic stand-in for a vision-language model and a text-to-image
 * generator.
 *
 * Logits are a pure hash-mixing function of (image ref, prompt, prefix,
 * scenario). With image_weight = 0 every image (and no image) yields the same
 * vector, so two conditioned streams agree exactly. Scripted entries override
 * the hash-mixed vector for a given step and evidence stream, which is how
 * tests force a branch, an answer or an immediate EOS.
 *
 * Image refs carry their provenance in a prefix: "gen:" for generator output,
 * "distort:" and "aug:" for backend-produced variants; anything else is an
 * original image. The stream kind a script entry matches is derived from it.
 *
 * Scenario documents are versioned JSON ("schema": "degf-scenario/1"):
 *
 *   {
 *     "schema": "degf-scenario/1",
 *     "name": "example",
 *     "vocab": {"size": 32, "eos_id": 0, "tokens": ["</s>", ...]},
 *     "hash_seed": 1234,
 *     "logit_scale": 3.0,
 *     "image_weight": 1.0,
 *     "eos_bias": 0.0,
 *     "eos_ramp": 0.15,
 *     "distort": "noise" | "identity",
 *     "transform": "augment" | "identity",
 *     "script": [
 *       {"t": 0, "stream": "original", "prompt_contains": "dog",
 *        "point_mass": "yes"},
 *       {"t": 1, "stream": "any", "logits": [0, "-inf", ...]}
 *     ]
 *   }
 */

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "degf/backend.hpp"
#include "degf/json_text.hpp"

namespace degf {

inline constexpr std::string_view kScenarioSchema = "degf-scenario/1";

enum class StreamKind { original, reference, distorted, transformed, text_only, any };

StreamKind classify_image(const std::optional<ImageRef>& image);

struct ScriptEntry {
  std::optional<int> t;
  StreamKind stream = StreamKind::any;
  std::optional<std::string> prompt_contains;
  std::optional<std::string> image;
  std::vector<double> logits;

  bool matches(int step, StreamKind kind, const std::optional<ImageRef>& image_ref,
               std::string_view prompt) const;
};

struct Scenario {
  std::string name = "hashmix";
  Vocabulary vocab;
  std::uint64_t hash_seed = 0;
  double logit_scale = 3.0;
  double image_weight = 1.0;
  double eos_bias = 0.0;
  double eos_ramp = 0.15;
  bool distort_identity = false;
  bool transform_identity = false;
  std::vector<ScriptEntry> script;

  /// Throws ConfigError on malformed documents.
  static Scenario from_json(const Json& doc);
  /// Built-in names: hashmix (alias default), identical, disjoint@0, eos@0.
  static std::optional<Scenario> builtin(std::string_view name);
  /// A built-in name or a path to a scenario document.
  static Scenario load(std::string_view spec);

  /// 32-token English-ish vocabulary used by the built-ins; EOS is id 0.
  static Vocabulary default_vocabulary();
};

class SyntheticBackend final : public ModelBackend, public VisualGenerator {
 public:
  explicit SyntheticBackend(Scenario scenario);

  LogitVector logits(const std::optional<ImageRef>& image, std::string_view prompt,
                     std::span<const TokenId> prefix) override;
  Vocabulary vocabulary() override { return scenario_.vocab; }
  ImageRef transform(const ImageRef& image, int augment) override;
  ImageRef distort(const ImageRef& image, int noise_steps) override;
  std::string describe() const override { return "synthetic:" + scenario_.name; }

  ImageRef generate(std::string_view caption, std::uint64_t seed, int steps) override;

  const Scenario& scenario() const { return scenario_; }

 private:
  Scenario scenario_;
};

}  // namespace degf
