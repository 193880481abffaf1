// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/trace_io.hpp"

#include <fstream>

namespace degf {
namespace {

Json top_to_json(const std::vector<TokenProb>& top) {
  Json arr = Json::array();
  for (const auto& tp : top) arr.push_back(Json::array({tp.token, tp.prob}));
  return arr;
}

std::vector<TokenProb> top_from_json(const Json& j) {
  std::vector<TokenProb> out;
  for (const auto& item : j) {
    out.push_back({item.at(0).get<TokenId>(), item.at(1).get<double>()});
  }
  return out;
}

template <typename T>
void read_if(const Json& j, const char* key, T& out) {
  if (auto it = j.find(key); it != j.end()) out = it->get<T>();
}

}  // namespace

Json config_to_json(const DecodeConfig& cfg) {
  Json j;
  j["decoder"] = to_string(cfg.decoder);
  j["alpha1"] = cfg.alpha1;
  j["alpha2"] = cfg.alpha2;
  j["gamma"] = cfg.gamma;
  j["beta"] = cfg.beta;
  j["vcd_alpha"] = cfg.vcd_alpha;
  j["m3id_lambda"] = cfg.m3id_lambda;
  j["ritual_kappa"] = cfg.ritual_kappa;
  j["temperature"] = cfg.temperature;
  j["max_new_tokens"] = cfg.max_new_tokens;
  j["initial_max_tokens"] = cfg.initial_max_tokens;
  j["seed"] = cfg.seed;
  j["sampling"] = to_string(cfg.sampling);
  j["diffusion_steps"] = cfg.diffusion_steps;
  j["generator_seed"] = cfg.generator_seed ? Json(*cfg.generator_seed) : Json(nullptr);
  j["vcd_noise_steps"] = cfg.vcd_noise_steps;
  j["ritual_augment"] = cfg.ritual_augment;
  return j;
}

DecodeConfig config_from_json(const Json& j) {
  DecodeConfig cfg;
  try {
    if (auto it = j.find("decoder"); it != j.end()) cfg.decoder = parse_decoder(it->get<std::string>());
    read_if(j, "alpha1", cfg.alpha1);
    read_if(j, "alpha2", cfg.alpha2);
    read_if(j, "gamma", cfg.gamma);
    read_if(j, "beta", cfg.beta);
    read_if(j, "vcd_alpha", cfg.vcd_alpha);
    read_if(j, "m3id_lambda", cfg.m3id_lambda);
    read_if(j, "ritual_kappa", cfg.ritual_kappa);
    read_if(j, "temperature", cfg.temperature);
    read_if(j, "max_new_tokens", cfg.max_new_tokens);
    read_if(j, "initial_max_tokens", cfg.initial_max_tokens);
    read_if(j, "seed", cfg.seed);
    if (auto it = j.find("sampling"); it != j.end()) cfg.sampling = parse_sampling(it->get<std::string>());
    read_if(j, "diffusion_steps", cfg.diffusion_steps);
    if (auto it = j.find("generator_seed"); it != j.end() && !it->is_null()) {
      cfg.generator_seed = it->get<std::uint64_t>();
    }
    read_if(j, "vcd_noise_steps", cfg.vcd_noise_steps);
    read_if(j, "ritual_augment", cfg.ritual_augment);
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("bad config object: ") + e.what());
  }
  return cfg;
}

Json trace_to_json(const DecodeTrace& trace, bool include_timings) {
  Json j;
  j["schema"] = kTraceSchema;
  j["instance_id"] = trace.instance_id;
  j["complete"] = trace.complete;
  if (!trace.error.empty()) j["error"] = trace.error;
  j["config"] = config_to_json(trace.config);
  j["kind"] = to_string(trace.kind);
  j["image_ref"] = trace.image_ref;
  j["prompt"] = trace.prompt;
  j["initial_prompt"] = trace.initial_prompt;
  j["initial_response"] = trace.initial_response;
  j["initial_truncated"] = trace.initial_truncated;
  j["generated_image_ref"] = trace.generated_image_ref ? Json(*trace.generated_image_ref) : Json(nullptr);
  j["auxiliary_image_ref"] = trace.auxiliary_image_ref ? Json(*trace.auxiliary_image_ref) : Json(nullptr);

  Json steps = Json::array();
  for (const auto& st : trace.steps) {
    Json s;
    s["t"] = st.t;
    s["d"] = st.distance;
    s["branch"] = to_string(st.branch);
    s["keep_set_size"] = st.keep_set_size;
    s["token"] = st.token;
    s["top_p"] = top_to_json(st.top_original);
    s["top_p_aux"] = top_to_json(st.top_auxiliary);
    steps.push_back(std::move(s));
  }
  j["steps"] = std::move(steps);
  j["final_response"] = trace.final_response;
  j["final_text"] = trace.final_text;
  j["truncated"] = trace.truncated;
  j["calls"] = {{"logits", trace.calls.logits},
                {"generate", trace.calls.generate},
                {"transform", trace.calls.transform}};
  if (include_timings) {
    j["timings"] = {{"initial_s", trace.timings.initial_s},
                    {"generate_s", trace.timings.generate_s},
                    {"decode_s", trace.timings.decode_s}};
  }
  return j;
}

DecodeTrace trace_from_json(const Json& j) {
  if (!j.is_object() || j.value("schema", std::string()) != kTraceSchema) {
    throw SchemaError("not a " + std::string(kTraceSchema) + " record");
  }
  DecodeTrace t;
  try {
    t.instance_id = j.at("instance_id").get<std::string>();
    t.complete = j.at("complete").get<bool>();
    read_if(j, "error", t.error);
    t.config = config_from_json(j.at("config"));
    t.kind = parse_benchmark_kind(j.at("kind").get<std::string>());
    t.image_ref = j.at("image_ref").get<std::string>();
    t.prompt = j.at("prompt").get<std::string>();
    t.initial_prompt = j.at("initial_prompt").get<std::string>();
    t.initial_response = j.at("initial_response").get<TokenSeq>();
    t.initial_truncated = j.at("initial_truncated").get<bool>();
    if (const auto& g = j.at("generated_image_ref"); !g.is_null()) t.generated_image_ref = g.get<std::string>();
    if (const auto& a = j.at("auxiliary_image_ref"); !a.is_null()) t.auxiliary_image_ref = a.get<std::string>();
    for (const auto& s : j.at("steps")) {
      StepTrace st;
      st.t = s.at("t").get<int>();
      st.distance = s.at("d").get<double>();
      st.branch = parse_branch(s.at("branch").get<std::string>());
      st.keep_set_size = s.at("keep_set_size").get<std::size_t>();
      st.token = s.at("token").get<TokenId>();
      st.top_original = top_from_json(s.at("top_p"));
      st.top_auxiliary = top_from_json(s.at("top_p_aux"));
      t.steps.push_back(std::move(st));
    }
    t.final_response = j.at("final_response").get<TokenSeq>();
    t.final_text = j.at("final_text").get<std::string>();
    t.truncated = j.at("truncated").get<bool>();
    const auto& c = j.at("calls");
    t.calls = {c.at("logits").get<std::uint64_t>(), c.at("generate").get<std::uint64_t>(),
               c.at("transform").get<std::uint64_t>()};
    if (auto it = j.find("timings"); it != j.end()) {
      t.timings = {it->at("initial_s").get<double>(), it->at("generate_s").get<double>(),
                   it->at("decode_s").get<double>()};
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed trace: ") + e.what());
  } catch (const ConfigError& e) {
    throw SchemaError(std::string("malformed trace: ") + e.what());
  }
  return t;
}

std::string trace_to_jsonl(const DecodeTrace& trace, bool include_timings) {
  return dump_json(trace_to_json(trace, include_timings));
}

std::vector<DecodeTrace> read_traces(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open trace file " + path.string());
  std::vector<DecodeTrace> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw SchemaError(where + ": invalid JSON: " + e.what());
    }
    const std::string schema = j.is_object() ? j.value("schema", std::string("<missing>")) : "<missing>";
    if (schema != kTraceSchema) {
      throw SchemaError(where + ": unsupported schema '" + schema + "' (expected " + std::string(kTraceSchema) +
                        ")");
    }
    try {
      out.push_back(trace_from_json(j));
    } catch (const SchemaError& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  return out;
}

}  // namespace degf
