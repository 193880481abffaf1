// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "degf/backend.hpp"
#include "degf/decoders.hpp"
#include "degf/json_text.hpp"

namespace degf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// A model backend paired with the generator it exposes (may be null).
struct BackendHandle {
  std::shared_ptr<ModelBackend> model;
  std::shared_ptr<VisualGenerator> generator;
};

/// "synthetic:<scenario name or file>" or "http:<url>". An empty spec falls
/// back to http:$DEGF_ADAPTER_URL. Throws ConfigError.
BackendHandle make_backend(std::string_view spec);

/// Applies one hyperparameter. Keys use either '-' or '_' as separator.
/// Throws ConfigError for unknown keys and unparsable values.
void apply_setting(DecodeConfig& cfg, std::string_view key, std::string_view value);

/// "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const std::string& path);

/// Splits "a,b,c"; empty items are rejected.
std::vector<std::string> split_list(std::string_view text);

}  // namespace degf::cli
