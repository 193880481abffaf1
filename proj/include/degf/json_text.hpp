// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include <json.hpp>

namespace degf {

using Json = nlohmann::ordered_json;

/// Compact single-line JSON with every floating-point number printed with 17
/// significant digits ("%.17g"), so doubles round-trip bit-for-bit. Key order
/// is insertion order. Non-finite floats are written as the strings "inf",
/// "-inf" and "nan".
std::string dump_json(const Json& value);

/// Pretty-printed variant (two-space indent) with the same number format.
std::string dump_json_pretty(const Json& value);

}  // namespace degf
