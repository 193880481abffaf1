// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Frozen end-to-end scenarios shared by the unit tests and the acceptance
// binary. Set DEGF_UPDATE_GOLDEN=1 to rewrite the fixture files.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "degf/cli.hpp"
#include "degf/http_backend.hpp"
#include "degf/pipeline.hpp"
#include "mock_adapter.hpp"

namespace degf::testing {

inline std::filesystem::path fixture_path(const std::string& name) {
  return std::filesystem::path(DEGF_FIXTURE_DIR) / name;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline bool update_golden() {
  const char* v = std::getenv("DEGF_UPDATE_GOLDEN");
  return v != nullptr && std::string(v) == "1";
}

/// Compares `actual` with the fixture, or rewrites the fixture in update mode.
inline bool matches_golden(const std::string& name, const std::string& actual) {
  const auto path = fixture_path(name);
  if (update_golden()) {
    std::ofstream(path, std::ios::binary) << actual;
    return true;
  }
  return std::filesystem::exists(path) && read_file(path) == actual;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("degf_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline AdapterEndpoint fast_endpoint(const MockAdapter& mock) {
  AdapterEndpoint ep;
  ep.base_url = mock.url();
  ep.backoff_base = std::chrono::milliseconds(1);
  ep.logits_timeout = std::chrono::milliseconds(5'000);
  ep.generate_timeout = std::chrono::milliseconds(5'000);
  return ep;
}

/// Short self-correcting session against the echo adapter; returns the
/// client-side transcript.
inline std::string golden_http_transcript() {
  MockAdapter mock;
  HttpAdapterClient client(fast_endpoint(mock));
  client.record_transcript(true);
  DecodeConfig cfg;
  cfg.seed = 42;
  cfg.initial_max_tokens = 3;
  cfg.max_new_tokens = 3;
  cfg.generator_seed = 1;
  const DecodeTrace t =
      run_degf(client, client, {"img:cafe", "Is there a dog?", BenchmarkKind::yes_no, "golden"}, cfg);
  if (!t.complete) return "incomplete: " + t.error;
  return transcript_to_jsonl(client.transcript());
}

/// Trace written by `degf decode --backend synthetic:identical --decoder degf --seed 42`.
inline std::string golden_decode_trace(std::string* stdout_text = nullptr, int* exit_code = nullptr) {
  const auto dir = scratch_dir("golden_decode");
  std::ostringstream out, err;
  const int rc = cli::run({"decode", "--backend", "synthetic:identical", "--decoder", "degf", "--seed", "42",
                           "--out", dir.string()},
                          out, err);
  if (stdout_text) *stdout_text = out.str();
  if (exit_code) *exit_code = rc;
  return read_file(dir / "trace.jsonl");
}

}  // namespace degf::testing
