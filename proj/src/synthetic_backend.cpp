// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/synthetic_backend.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "degf/rng.hpp"

namespace degf {
namespace {

constexpr double kPointMassMargin = 1000.0;

double unit_interval(std::uint64_t x) { return static_cast<double>(x >> 11) * 0x1.0p-53; }

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

std::string hex16(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

StreamKind parse_stream(std::string_view s) {
  if (s == "original") return StreamKind::original;
  if (s == "reference") return StreamKind::reference;
  if (s == "distorted") return StreamKind::distorted;
  if (s == "transformed") return StreamKind::transformed;
  if (s == "text_only") return StreamKind::text_only;
  if (s == "any") return StreamKind::any;
  throw ConfigError("unknown stream '" + std::string(s) + "' in scenario script");
}

TokenId resolve_token(const Json& j, const Vocabulary& vocab) {
  if (j.is_number_integer()) {
    const auto id = j.get<long long>();
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size) throw ConfigError("point_mass token out of range");
    return static_cast<TokenId>(id);
  }
  if (j.is_string()) {
    const auto text = j.get<std::string>();
    const auto it = std::find(vocab.token_text.begin(), vocab.token_text.end(), text);
    if (it == vocab.token_text.end()) throw ConfigError("point_mass token '" + text + "' not in vocabulary");
    return static_cast<TokenId>(it - vocab.token_text.begin());
  }
  throw ConfigError("point_mass must be a token id or token text");
}

std::vector<double> parse_logits(const Json& arr, std::size_t size) {
  if (!arr.is_array() || arr.size() != size) {
    throw ConfigError("scripted logits must be an array of vocab_size entries");
  }
  std::vector<double> out;
  out.reserve(size);
  for (const auto& v : arr) {
    if (v.is_string() && v.get<std::string>() == "-inf") {
      out.push_back(kMasked);
    } else if (v.is_number()) {
      out.push_back(v.get<double>());
    } else {
      throw ConfigError("scripted logit must be a number or \"-inf\"");
    }
  }
  return out;
}

Scenario base_scenario(std::string name) {
  Scenario s;
  s.name = std::move(name);
  s.vocab = Scenario::default_vocabulary();
  s.hash_seed = 0x5EED;
  return s;
}

ScriptEntry point_mass_entry(int t, StreamKind stream, TokenId token, std::size_t size) {
  ScriptEntry e;
  e.t = t;
  e.stream = stream;
  e.logits.assign(size, -kPointMassMargin);
  e.logits[static_cast<std::size_t>(token)] = 0.0;
  return e;
}

}  // namespace

StreamKind classify_image(const std::optional<ImageRef>& image) {
  if (!image) return StreamKind::text_only;
  if (starts_with(*image, "gen:")) return StreamKind::reference;
  if (starts_with(*image, "distort:")) return StreamKind::distorted;
  if (starts_with(*image, "aug:")) return StreamKind::transformed;
  return StreamKind::original;
}

bool ScriptEntry::matches(int step, StreamKind kind, const std::optional<ImageRef>& image_ref,
                          std::string_view prompt) const {
  if (t && *t != step) return false;
  if (stream != StreamKind::any && stream != kind) return false;
  if (prompt_contains && prompt.find(*prompt_contains) == std::string_view::npos) return false;
  if (image && (!image_ref || *image_ref != *image)) return false;
  return true;
}

Vocabulary Scenario::default_vocabulary() {
  Vocabulary v;
  v.token_text = {"</s>", "yes",   "no",  "there", "is",     "a",       "dog",   "cat",
                  "car",  "frisbee", "person", "table", "chair", ".",   "the",   "on",
                  "in",   "with",  "and", "red",   "blue",   "two",     "sitting", "image",
                  "shows", "of",   "man", "woman", "tree",   "bus",     "cup",   "street"};
  v.size = v.token_text.size();
  v.eos_id = 0;
  return v;
}

std::optional<Scenario> Scenario::builtin(std::string_view name) {
  if (name == "hashmix" || name == "default") return base_scenario("hashmix");
  if (name == "identical") {
    Scenario s = base_scenario("identical");
    s.image_weight = 0.0;
    return s;
  }
  if (name == "disjoint@0") {
    Scenario s = base_scenario("disjoint@0");
    s.script.push_back(point_mass_entry(0, StreamKind::original, 1, s.vocab.size));
    s.script.push_back(point_mass_entry(0, StreamKind::reference, 2, s.vocab.size));
    return s;
  }
  if (name == "eos@0") {
    Scenario s = base_scenario("eos@0");
    s.script.push_back(point_mass_entry(0, StreamKind::any, s.vocab.eos_id, s.vocab.size));
    return s;
  }
  return std::nullopt;
}

Scenario Scenario::from_json(const Json& doc) {
  if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
  if (doc.value("schema", std::string()) != kScenarioSchema) {
    throw ConfigError("scenario schema must be \"" + std::string(kScenarioSchema) + "\"");
  }
  Scenario s;
  try {
    s.name = doc.value("name", std::string("custom"));
    if (auto it = doc.find("vocab"); it != doc.end()) {
      const auto& v = *it;
      if (auto tok = v.find("tokens"); tok != v.end()) s.vocab.token_text = tok->get<std::vector<std::string>>();
      s.vocab.size = v.value("size", s.vocab.token_text.size());
      s.vocab.eos_id = v.value("eos_id", 0);
      if (s.vocab.token_text.empty() && s.vocab.size == Scenario::default_vocabulary().size) {
        s.vocab.token_text = Scenario::default_vocabulary().token_text;
      }
    } else {
      s.vocab = Scenario::default_vocabulary();
    }
    s.vocab.validate();

    s.hash_seed = doc.value("hash_seed", std::uint64_t{0});
    s.logit_scale = doc.value("logit_scale", 3.0);
    s.image_weight = doc.value("image_weight", 1.0);
    s.eos_bias = doc.value("eos_bias", 0.0);
    s.eos_ramp = doc.value("eos_ramp", 0.15);
    const std::string distort = doc.value("distort", std::string("noise"));
    const std::string transform = doc.value("transform", std::string("augment"));
    if (distort != "noise" && distort != "identity") throw ConfigError("distort must be noise or identity");
    if (transform != "augment" && transform != "identity") {
      throw ConfigError("transform must be augment or identity");
    }
    s.distort_identity = distort == "identity";
    s.transform_identity = transform == "identity";

    if (auto it = doc.find("script"); it != doc.end()) {
      for (const auto& e : *it) {
        ScriptEntry entry;
        if (auto t = e.find("t"); t != e.end()) entry.t = t->get<int>();
        entry.stream = parse_stream(e.value("stream", std::string("any")));
        if (auto p = e.find("prompt_contains"); p != e.end()) entry.prompt_contains = p->get<std::string>();
        if (auto im = e.find("image"); im != e.end()) entry.image = im->get<std::string>();
        const bool has_logits = e.contains("logits");
        const bool has_mass = e.contains("point_mass");
        if (has_logits == has_mass) throw ConfigError("script entry needs exactly one of logits / point_mass");
        if (has_logits) {
          entry.logits = parse_logits(e.at("logits"), s.vocab.size);
        } else {
          const TokenId tok = resolve_token(e.at("point_mass"), s.vocab);
          entry.logits.assign(s.vocab.size, -kPointMassMargin);
          entry.logits[static_cast<std::size_t>(tok)] = 0.0;
        }
        LogitVector check(entry.logits);  // rejects all-MASKED / NaN rows up front
        s.script.push_back(std::move(entry));
      }
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  } catch (const DegenerateDistribution& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  } catch (const InvalidDistribution& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  if (!(s.logit_scale >= 0.0) || !(s.image_weight >= 0.0)) {
    throw ConfigError("logit_scale and image_weight must be non-negative");
  }
  return s;
}

Scenario Scenario::load(std::string_view spec) {
  if (auto s = builtin(spec)) return *s;
  const std::filesystem::path path{std::string(spec)};
  std::ifstream in(path);
  if (!in) throw ConfigError("unknown synthetic scenario '" + std::string(spec) + "'");
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("scenario " + path.string() + ": invalid JSON: " + e.what());
  }
  return from_json(doc);
}

SyntheticBackend::SyntheticBackend(Scenario scenario) : scenario_(std::move(scenario)) {
  scenario_.vocab.validate();
}

LogitVector SyntheticBackend::logits(const std::optional<ImageRef>& image, std::string_view prompt,
                                     std::span<const TokenId> prefix) {
  const int t = static_cast<int>(prefix.size());
  const StreamKind kind = classify_image(image);
  for (const auto& entry : scenario_.script) {
    if (entry.matches(t, kind, image, prompt)) return LogitVector(entry.logits);
  }

  std::uint64_t ctx = stable_hash(prompt, scenario_.hash_seed);
  for (TokenId tok : prefix) ctx = hash_combine(ctx, static_cast<std::uint64_t>(tok));
  const std::uint64_t text_key = hash_combine(ctx, 0x74657874ULL);
  const std::uint64_t image_key = image ? hash_combine(ctx, stable_hash(*image, scenario_.hash_seed)) : 0;
  const bool use_image = image && scenario_.image_weight != 0.0;

  const double scale = scenario_.logit_scale;
  std::vector<double> out(scenario_.vocab.size);
  for (std::size_t i = 0; i < out.size(); ++i) {
    double v = scale * (2.0 * unit_interval(hash_combine(text_key, i)) - 1.0);
    if (use_image) {
      v += scenario_.image_weight * scale * (2.0 * unit_interval(hash_combine(image_key, i)) - 1.0);
    }
    out[i] = v;
  }
  out[static_cast<std::size_t>(scenario_.vocab.eos_id)] += scenario_.eos_bias + scenario_.eos_ramp * t;
  return LogitVector(std::move(out));
}

ImageRef SyntheticBackend::transform(const ImageRef& image, int augment) {
  if (scenario_.transform_identity) return image;
  return "aug:" + std::to_string(augment) + ":" + image;
}

ImageRef SyntheticBackend::distort(const ImageRef& image, int noise_steps) {
  if (scenario_.distort_identity) return image;
  return "distort:" + std::to_string(noise_steps) + ":" + image;
}

ImageRef SyntheticBackend::generate(std::string_view caption, std::uint64_t seed, int steps) {
  std::uint64_t h = stable_hash(caption, scenario_.hash_seed);
  h = hash_combine(h, seed);
  h = hash_combine(h, static_cast<std::uint64_t>(steps));
  return "gen:" + hex16(h);
}

}  // namespace degf
