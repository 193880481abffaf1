// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "degf/json_text.hpp"
#include "degf/pipeline.hpp"

namespace degf {

inline constexpr std::string_view kTraceSchema = "degf-trace/1";

Json config_to_json(const DecodeConfig& cfg);
/// Missing keys keep their defaults; wrong types throw SchemaError.
DecodeConfig config_from_json(const Json& j);

/// Timings are optional so that traces from deterministic backends are
/// byte-stable across runs.
Json trace_to_json(const DecodeTrace& trace, bool include_timings);
DecodeTrace trace_from_json(const Json& j);

/// One JSONL line, without the trailing newline.
std::string trace_to_jsonl(const DecodeTrace& trace, bool include_timings);

/// Reads every line of a degf-trace/1 JSONL file. A line with any other
/// schema tag throws SchemaError naming the file and line number.
std::vector<DecodeTrace> read_traces(const std::filesystem::path& path);

}  // namespace degf
