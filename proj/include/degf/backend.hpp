// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "degf/distributions.hpp"

namespace degf {

/// Opaque server-side image handle; the core never touches pixels.
using ImageRef = std::string;

/// Source of next-token logits f(y_t | image, query, prefix).
///
/// Implementations must be safe for concurrent calls from independent
/// sessions. A deterministic backend returns the same vector for the same
/// (image, prompt, prefix) every time.
class ModelBackend {
 public:
  virtual ~ModelBackend() = default;

  /// `image == nullopt` requests text-only logits.
  virtual LogitVector logits(const std::optional<ImageRef>& image, std::string_view prompt,
                             std::span<const TokenId> prefix) = 0;
  virtual Vocabulary vocabulary() = 0;
  /// Image augmentation (crop, flip, colour jitter, ...) selected by `augment`.
  virtual ImageRef transform(const ImageRef& image, int augment) = 0;
  /// Forward-noise distortion with `noise_steps` steps.
  virtual ImageRef distort(const ImageRef& image, int noise_steps) = 0;
  virtual bool deterministic() const { return true; }
  /// Short human-readable identity for manifests.
  virtual std::string describe() const = 0;
};

/// Text-to-image model producing the visual reference from a caption.
class VisualGenerator {
 public:
  virtual ~VisualGenerator() = default;

  virtual ImageRef generate(std::string_view caption, std::uint64_t seed, int steps) = 0;
};

}  // namespace degf
