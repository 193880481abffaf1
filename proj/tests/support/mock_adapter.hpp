// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// In-process HTTP server speaking the adapter protocol. Echo mode derives
// logits and image refs from a digest of the request, so responses are
// byte-stable; knobs inject faults for the client tests.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "degf/json_text.hpp"

namespace httplib {
class Server;
}

namespace degf::testing {

struct MockAdapterOptions {
  std::size_t vocab_size = 8;
  int eos_id = 0;
  std::string model_name = "echo-lvlm";
  std::string generator_name = "echo-diffusion";
  std::vector<std::string> token_text = {"</s>", "a", "dog", "cat", "on", "the", "grass", "."};
  Json extra_meta = Json::object();
  /// Entries with this index are sent as "-inf".
  std::optional<std::size_t> masked_index = 7;
};

class MockAdapter {
 public:
  explicit MockAdapter(MockAdapterOptions options = {});
  ~MockAdapter();
  MockAdapter(const MockAdapter&) = delete;
  MockAdapter& operator=(const MockAdapter&) = delete;

  std::string url() const;
  int port() const { return port_; }

  /// Echo-mode logits for a request, as the server would send them.
  Json echo_logits(const Json& request) const;

  // Fault injection.
  void fail_next(int count, int status = 503, bool retryable = true);
  void fail_route(std::string route, int status, bool retryable, std::string message);
  /// /logits requests for this image_ref get a non-retryable 400; "" clears.
  void fail_image(std::string image_ref);
  void set_delay(std::chrono::milliseconds delay);
  void set_logits_override(std::optional<Json> payload);
  void set_raw_logits_body(std::optional<std::string> body);
  void set_model(std::string model_name, std::size_t vocab_size);

  // Observation.
  int max_in_flight() const { return max_in_flight_.load(); }
  int requests(const std::string& route) const;
  std::vector<std::string> request_ids() const;
  std::vector<Json> bodies(const std::string& route) const;

 private:
  bool maybe_fail(const std::string& route, int& status, Json& body);

  MockAdapterOptions options_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;

  mutable std::mutex mu_;
  int fail_count_ = 0;
  int fail_status_ = 503;
  bool fail_retryable_ = true;
  std::map<std::string, std::tuple<int, bool, std::string>> route_failures_;
  std::string failing_image_;
  std::chrono::milliseconds delay_{0};
  std::optional<Json> logits_override_;
  std::optional<std::string> raw_logits_body_;
  std::map<std::string, int> counts_;
  std::vector<std::string> request_ids_;
  std::map<std::string, std::vector<Json>> bodies_;

  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};
};

}  // namespace degf::testing
