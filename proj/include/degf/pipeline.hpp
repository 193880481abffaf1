// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Decode sessions.
 *
 * A self-correcting session runs three phases:
 *
 *   1. initial query   regular decoding on the original image; the prompt of
 *                      yes/no and binary-choice tasks is extended with
 *                      "Briefly describe relevant details."
 *   2. generation      the initial response becomes the caption for the
 *                      visual generator, which returns the reference image v'
 *   3. second pass     token loop with the unmodified prompt; each step asks
 *                      the backend for f(.|v) and f(.|v') and applies
 *                      degf_step
 *
 * Baseline sessions are a single pass with their auxiliary stream: a distorted
 * image (vcd), no image (m3id) or an augmented image (ritual).
 *
 * Responses include the terminating EOS token when generation stopped on it,
 * so every sampled token (EOS included) has exactly one StepTrace and the
 * backend call count is len(initial) + 2 * len(final) logits calls plus one
 * generator call.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "degf/backend.hpp"
#include "degf/decoders.hpp"

namespace degf {

enum class BenchmarkKind { yes_no, open_caption, binary_choice };

std::string_view to_string(BenchmarkKind k);
BenchmarkKind parse_benchmark_kind(std::string_view name);

inline constexpr std::string_view kDetailSuffix = "Briefly describe relevant details.";
inline constexpr std::string_view kCaptionPrompt = "Please describe this image in detail.";

/// Prompt for the initial query.
std::string first_pass_prompt(BenchmarkKind kind, std::string_view base_prompt);
/// Prompt for the self-correcting pass: always `base_prompt` verbatim.
std::string second_pass_prompt(BenchmarkKind kind, std::string_view base_prompt);

inline constexpr std::size_t kTraceTopK = 10;

struct StepTrace {
  int t = 0;
  double distance = 0.0;
  Branch branch = Branch::not_applicable;
  std::vector<TokenProb> top_original;
  std::vector<TokenProb> top_auxiliary;
  std::size_t keep_set_size = 0;
  TokenId token = 0;

  friend bool operator==(const StepTrace&, const StepTrace&) = default;
};

struct CallCounts {
  std::uint64_t logits = 0;
  std::uint64_t generate = 0;
  std::uint64_t transform = 0;

  friend bool operator==(const CallCounts&, const CallCounts&) = default;
};

struct PhaseTimings {
  double initial_s = 0.0;
  double generate_s = 0.0;
  double decode_s = 0.0;

  friend bool operator==(const PhaseTimings&, const PhaseTimings&) = default;
};

struct DecodeTrace {
  std::string instance_id;
  DecodeConfig config;
  BenchmarkKind kind = BenchmarkKind::open_caption;
  ImageRef image_ref;
  std::string prompt;
  std::string initial_prompt;
  TokenSeq initial_response;
  bool initial_truncated = false;
  std::optional<ImageRef> generated_image_ref;
  /// Distorted (vcd) or augmented (ritual) image used as the auxiliary stream.
  std::optional<ImageRef> auxiliary_image_ref;
  std::vector<StepTrace> steps;
  TokenSeq final_response;
  std::string final_text;
  bool truncated = false;
  bool complete = true;
  std::string error;
  CallCounts calls;
  PhaseTimings timings;

  friend bool operator==(const DecodeTrace&, const DecodeTrace&) = default;
};

struct InitialResponse {
  TokenSeq tokens;
  bool truncated = false;
  std::vector<StepTrace> steps;
  Xoshiro256StarStar rng;
};

struct DecodeRequest {
  ImageRef image;
  std::string prompt;
  BenchmarkKind kind = BenchmarkKind::open_caption;
  std::string instance_id = "0";
};

/// Regular decoding conditioned on `image`, capped at cfg.initial_max_tokens.
/// Truncation is reported, not thrown.
InitialResponse run_initial_query(ModelBackend& backend, const ImageRef& image, std::string_view prompt,
                                  const DecodeConfig& cfg, Xoshiro256StarStar rng);
InitialResponse run_initial_query(ModelBackend& backend, const ImageRef& image, std::string_view prompt,
                                  const DecodeConfig& cfg);

/// Full self-correcting session. Backend or generator failures do not throw:
/// the returned trace has complete == false and `error` set. Config errors
/// throw ConfigError.
DecodeTrace run_degf(ModelBackend& backend, VisualGenerator& generator, const DecodeRequest& request,
                     const DecodeConfig& cfg);

/// Single-pass session for regular, vcd, m3id and ritual.
DecodeTrace run_baseline(ModelBackend& backend, const DecodeRequest& request, const DecodeConfig& cfg);

/// Dispatches on cfg.decoder. `generator` may be null for baselines.
DecodeTrace run_session(ModelBackend& backend, VisualGenerator* generator, const DecodeRequest& request,
                        const DecodeConfig& cfg);

/// Generator seed for an instance when cfg.generator_seed is unset.
std::uint64_t derive_generator_seed(std::uint64_t session_seed, std::string_view instance_id);
/// Per-instance sampling seed for benchmark runs.
std::uint64_t derive_instance_seed(std::uint64_t run_seed, std::string_view instance_id);

/// Expected backend calls for a finished trace (audit helper).
CallCounts expected_calls(const DecodeTrace& trace);

}  // namespace degf
