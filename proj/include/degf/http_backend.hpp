// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Client for the model-adapter wire protocol (JSON over HTTP/1.1).
 *
 *   GET  /meta       -> {"vocab_size", "eos_id", "model_name", "generator_name", "logit_dtype"}
 *   POST /logits     {"request_id", "image_ref"|null, "prompt", "prefix_ids"} -> {"logits": [number|"-inf"]}
 *   POST /txt2img    {"request_id", "caption", "seed", "steps"} -> {"image_ref"}
 *   POST /transform  {"image_ref", "kind": "distort"|"augment", "param"} -> {"image_ref"}
 *   errors           4xx/5xx with {"error": str, "retryable": bool}
 *
 * Timeouts, connection failures and retryable error responses are retried
 * with exponential backoff plus jitter; a request keeps its request id across
 * retries so the adapter can deduplicate. At most max_in_flight requests are
 * outstanding per client at any moment.
 */

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "degf/backend.hpp"
#include "degf/json_text.hpp"

namespace degf {

struct AdapterEndpoint {
  std::string base_url;
  std::chrono::milliseconds generate_timeout{120'000};
  std::chrono::milliseconds logits_timeout{30'000};
  int max_retries = 2;
  std::size_t max_in_flight = 4;
  std::chrono::milliseconds backoff_base{500};
  double backoff_factor = 2.0;
  /// /meta is re-probed before a call when the last probe is older than this.
  std::chrono::milliseconds health_max_age{60'000};
  /// Prefix of client-generated request ids: "<prefix>-<n>".
  std::string request_id_prefix = "degf";

  /// Throws ConfigError.
  void validate() const;
};

struct AdapterMeta {
  std::size_t vocab_size = 0;
  TokenId eos_id = 0;
  std::string model_name;
  std::string generator_name;
  std::string logit_dtype = "f32";
  bool deterministic = true;
  /// Optional extension: display text per token id, used to render the
  /// initial response as a caption. Ignored unless it has vocab_size entries.
  std::vector<std::string> token_text;
};

/// One request/response exchange as seen by the client.
struct TranscriptEntry {
  std::string method;
  std::string path;
  Json request;
  int status = 0;  // 0 when no HTTP response arrived
  Json response;
};

class CountingSemaphore {
 public:
  explicit CountingSemaphore(std::size_t permits) : permits_(permits) {}
  void acquire();
  void release();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t permits_;
};

class HttpAdapterClient final : public ModelBackend, public VisualGenerator {
 public:
  explicit HttpAdapterClient(AdapterEndpoint endpoint);

  /// Probes /meta. Unreachable -> BackendUnavailable; a vocabulary size or
  /// model change against an earlier probe -> ProtocolError.
  AdapterMeta health_and_meta();

  LogitVector fetch_logits(const std::optional<ImageRef>& image, std::string_view prompt,
                           std::span<const TokenId> prefix_ids);
  /// Empty caption -> ValidationError before anything is sent.
  ImageRef request_image(std::string_view caption, std::uint64_t seed, int steps);
  ImageRef request_transform(const ImageRef& image, std::string_view kind, int param);

  // ModelBackend / VisualGenerator
  LogitVector logits(const std::optional<ImageRef>& image, std::string_view prompt,
                     std::span<const TokenId> prefix) override;
  Vocabulary vocabulary() override;
  ImageRef transform(const ImageRef& image, int augment) override;
  ImageRef distort(const ImageRef& image, int noise_steps) override;
  bool deterministic() const override;
  std::string describe() const override { return "http:" + endpoint_.base_url; }
  ImageRef generate(std::string_view caption, std::uint64_t seed, int steps) override;

  void record_transcript(bool on);
  std::vector<TranscriptEntry> transcript() const;

  const AdapterEndpoint& endpoint() const { return endpoint_; }

 private:
  enum class Route { meta, logits, generate, transform };

  Json call(Route route, const std::string& method, const std::string& path, const Json& body,
            std::chrono::milliseconds timeout);
  void ensure_fresh_meta();
  std::string next_request_id();

  AdapterEndpoint endpoint_;
  std::string host_;
  int port_ = 80;
  std::string path_prefix_;

  CountingSemaphore in_flight_;

  mutable std::mutex meta_mu_;
  std::optional<AdapterMeta> meta_;
  std::chrono::steady_clock::time_point meta_time_{};

  std::mutex id_mu_;
  std::uint64_t next_id_ = 0;

  mutable std::mutex transcript_mu_;
  bool record_ = false;
  std::vector<TranscriptEntry> transcript_;
};

/// Canonical JSON text for transcripts: one object per line with keys
/// method, path, request, status, response.
std::string transcript_to_jsonl(const std::vector<TranscriptEntry>& entries);

}  // namespace degf
