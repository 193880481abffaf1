// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/pipeline.hpp"

#include <chrono>
#include <functional>

namespace degf {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

StepTrace to_step_trace(int t, const StepDecision& dec, TokenId token) {
  StepTrace st;
  st.t = t;
  st.distance = dec.distance;
  st.branch = dec.branch;
  st.top_original = top_k(dec.original, kTraceTopK);
  if (dec.auxiliary) st.top_auxiliary = top_k(*dec.auxiliary, kTraceTopK);
  st.keep_set_size = dec.keep_set_size;
  st.token = token;
  return st;
}

// Strictly sequential token loop: the step callback for position t sees the
// prefix committed through t-1. Writes into `tokens` / `steps` as it goes so a
// backend failure leaves the partial result behind.
using StepFn = std::function<StepDecision(int t, std::span<const TokenId> prefix)>;

struct LoopOutput {
  TokenSeq& tokens;
  std::vector<StepTrace>& steps;
  bool& truncated;
};

Xoshiro256StarStar decode_loop(const Vocabulary& vocab, int cap, Sampling sampling, Xoshiro256StarStar rng,
                               const StepFn& step, LoopOutput out) {
  out.truncated = true;
  for (int t = 0; t < cap; ++t) {
    const StepDecision dec = step(t, out.tokens);
    const Draw draw = sample(dec.final_distribution, sampling, rng);
    rng = draw.rng;
    out.tokens.push_back(draw.token);
    out.steps.push_back(to_step_trace(t, dec, draw.token));
    if (draw.token == vocab.eos_id) {
      out.truncated = false;
      break;
    }
  }
  return rng;
}

void check_logit_size(const LogitVector& v, const Vocabulary& vocab) {
  if (v.size() != vocab.size) {
    throw DimensionError("backend returned " + std::to_string(v.size()) + " logits for a vocabulary of " +
                         std::to_string(vocab.size));
  }
}

std::string describe_error(const Error& e) {
  const char* kind = "Error";
  if (dynamic_cast<const BackendUnavailable*>(&e)) kind = "BackendUnavailable";
  else if (dynamic_cast<const GeneratorUnavailable*>(&e)) kind = "GeneratorUnavailable";
  else if (dynamic_cast<const ProtocolError*>(&e)) kind = "ProtocolError";
  else if (dynamic_cast<const ValidationError*>(&e)) kind = "ValidationError";
  else if (dynamic_cast<const DimensionError*>(&e)) kind = "DimensionError";
  else if (dynamic_cast<const DegenerateDistribution*>(&e)) kind = "DegenerateDistribution";
  return std::string(kind) + ": " + e.what();
}

DecodeTrace new_trace(const DecodeRequest& request, const DecodeConfig& cfg) {
  DecodeTrace trace;
  trace.instance_id = request.instance_id;
  trace.config = cfg;
  trace.kind = request.kind;
  trace.image_ref = request.image;
  trace.prompt = second_pass_prompt(request.kind, request.prompt);
  return trace;
}

void require_prompt(std::string_view prompt) {
  if (prompt.empty()) throw ConfigError("prompt must be non-empty");
}

// Regular decoding on the original image; `out.rng` is both input and output.
void initial_phase(ModelBackend& backend, const Vocabulary& vocab, const ImageRef& image, std::string_view prompt,
                   const DecodeConfig& cfg, InitialResponse& out, std::uint64_t& calls) {
  const StepFn step = [&](int, std::span<const TokenId> prefix) {
    ++calls;
    LogitVector f_v = backend.logits(image, prompt, prefix);
    check_logit_size(f_v, vocab);
    return regular_step(f_v, cfg);
  };
  out.rng = decode_loop(vocab, cfg.initial_max_tokens, cfg.sampling, out.rng, step,
                        {out.tokens, out.steps, out.truncated});
}

}  // namespace

std::string_view to_string(BenchmarkKind k) {
  switch (k) {
    case BenchmarkKind::yes_no: return "yes_no";
    case BenchmarkKind::open_caption: return "open_caption";
    case BenchmarkKind::binary_choice: return "binary_choice";
  }
  return "?";
}

BenchmarkKind parse_benchmark_kind(std::string_view name) {
  for (BenchmarkKind k : {BenchmarkKind::yes_no, BenchmarkKind::open_caption, BenchmarkKind::binary_choice}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown benchmark kind '" + std::string(name) +
                    "' (expected yes_no, open_caption or binary_choice)");
}

std::string first_pass_prompt(BenchmarkKind kind, std::string_view base_prompt) {
  if (base_prompt.empty()) throw ConfigError("base prompt must be non-empty");
  std::string out(base_prompt);
  if (kind == BenchmarkKind::open_caption) return out;
  if (!out.empty() && out.back() != ' ' && out.back() != '\n') out += ' ';
  out += kDetailSuffix;
  return out;
}

std::string second_pass_prompt(BenchmarkKind /*kind*/, std::string_view base_prompt) {
  if (base_prompt.empty()) throw ConfigError("base prompt must be non-empty");
  return std::string(base_prompt);
}

std::uint64_t derive_generator_seed(std::uint64_t session_seed, std::string_view instance_id) {
  return hash_combine(session_seed, stable_hash(instance_id, 0x67656e6572617465ULL));
}

std::uint64_t derive_instance_seed(std::uint64_t run_seed, std::string_view instance_id) {
  return hash_combine(run_seed, stable_hash(instance_id, 0x696e7374616e6365ULL));
}

InitialResponse run_initial_query(ModelBackend& backend, const ImageRef& image, std::string_view prompt,
                                  const DecodeConfig& cfg, Xoshiro256StarStar rng) {
  require_prompt(prompt);
  const Vocabulary vocab = backend.vocabulary();
  InitialResponse out{{}, false, {}, rng};
  std::uint64_t calls = 0;
  initial_phase(backend, vocab, image, prompt, cfg, out, calls);
  return out;
}

InitialResponse run_initial_query(ModelBackend& backend, const ImageRef& image, std::string_view prompt,
                                  const DecodeConfig& cfg) {
  return run_initial_query(backend, image, prompt, cfg, Xoshiro256StarStar::from_seed(cfg.seed));
}

DecodeTrace run_degf(ModelBackend& backend, VisualGenerator& generator, const DecodeRequest& request,
                     const DecodeConfig& cfg) {
  if (cfg.decoder != Decoder::degf) throw ConfigError("run_degf requires decoder = degf");
  cfg.validate();
  require_prompt(request.prompt);

  DecodeTrace trace = new_trace(request, cfg);
  trace.initial_prompt = first_pass_prompt(request.kind, request.prompt);
  InitialResponse initial{{}, false, {}, Xoshiro256StarStar::from_seed(cfg.seed)};

  try {
    const Vocabulary vocab = backend.vocabulary();

    // Phase 1: initial response on the original image.
    auto start = Clock::now();
    try {
      initial_phase(backend, vocab, request.image, trace.initial_prompt, cfg, initial, trace.calls.logits);
    } catch (...) {
      trace.initial_response = initial.tokens;
      throw;
    }
    trace.initial_response = initial.tokens;
    trace.initial_truncated = initial.truncated;
    trace.timings.initial_s = seconds_since(start);

    // Phase 2: visual reference from the initial response.
    start = Clock::now();
    const std::string caption = vocab.detokenize(trace.initial_response);
    const std::uint64_t gen_seed =
        cfg.generator_seed ? *cfg.generator_seed : derive_generator_seed(cfg.seed, request.instance_id);
    ++trace.calls.generate;
    trace.generated_image_ref = generator.generate(caption, gen_seed, cfg.diffusion_steps);
    trace.timings.generate_s = seconds_since(start);

    // Phase 3: self-correcting pass with the original prompt.
    start = Clock::now();
    const ImageRef reference = *trace.generated_image_ref;
    const StepFn step = [&](int, std::span<const TokenId> prefix) {
      trace.calls.logits += 2;
      LogitVector f_v = backend.logits(request.image, trace.prompt, prefix);
      LogitVector f_ref = backend.logits(reference, trace.prompt, prefix);
      check_logit_size(f_v, vocab);
      check_logit_size(f_ref, vocab);
      return degf_step(f_v, f_ref, cfg);
    };
    decode_loop(vocab, cfg.max_new_tokens, cfg.sampling, initial.rng, step,
                {trace.final_response, trace.steps, trace.truncated});
    trace.timings.decode_s = seconds_since(start);
    trace.final_text = vocab.detokenize(trace.final_response);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    trace.complete = false;
    trace.error = describe_error(e);
  }
  return trace;
}

DecodeTrace run_baseline(ModelBackend& backend, const DecodeRequest& request, const DecodeConfig& cfg) {
  if (cfg.decoder == Decoder::degf) throw ConfigError("run_baseline does not run the degf decoder");
  cfg.validate();
  require_prompt(request.prompt);

  DecodeTrace trace = new_trace(request, cfg);
  const Xoshiro256StarStar rng = Xoshiro256StarStar::from_seed(cfg.seed);

  try {
    const Vocabulary vocab = backend.vocabulary();
    const auto start = Clock::now();

    StepFn step;
    switch (cfg.decoder) {
      case Decoder::regular:
        step = [&](int, std::span<const TokenId> prefix) {
          ++trace.calls.logits;
          LogitVector f_v = backend.logits(request.image, trace.prompt, prefix);
          check_logit_size(f_v, vocab);
          return regular_step(f_v, cfg);
        };
        break;
      case Decoder::vcd:
        ++trace.calls.transform;
        trace.auxiliary_image_ref = backend.distort(request.image, cfg.vcd_noise_steps);
        step = [&](int, std::span<const TokenId> prefix) {
          trace.calls.logits += 2;
          LogitVector f_v = backend.logits(request.image, trace.prompt, prefix);
          LogitVector f_aux = backend.logits(trace.auxiliary_image_ref, trace.prompt, prefix);
          check_logit_size(f_v, vocab);
          check_logit_size(f_aux, vocab);
          return vcd_step(f_v, f_aux, cfg);
        };
        break;
      case Decoder::m3id:
        step = [&](int t, std::span<const TokenId> prefix) {
          trace.calls.logits += 2;
          LogitVector f_v = backend.logits(request.image, trace.prompt, prefix);
          LogitVector f_text = backend.logits(std::nullopt, trace.prompt, prefix);
          check_logit_size(f_v, vocab);
          check_logit_size(f_text, vocab);
          return m3id_step(f_v, f_text, t, cfg);
        };
        break;
      case Decoder::ritual:
        ++trace.calls.transform;
        trace.auxiliary_image_ref = backend.transform(request.image, cfg.ritual_augment);
        step = [&](int, std::span<const TokenId> prefix) {
          trace.calls.logits += 2;
          LogitVector f_v = backend.logits(request.image, trace.prompt, prefix);
          LogitVector f_aux = backend.logits(trace.auxiliary_image_ref, trace.prompt, prefix);
          check_logit_size(f_v, vocab);
          check_logit_size(f_aux, vocab);
          return ritual_step(f_v, f_aux, cfg);
        };
        break;
      case Decoder::degf:
        break;
    }
    decode_loop(vocab, cfg.max_new_tokens, cfg.sampling, rng, step,
                {trace.final_response, trace.steps, trace.truncated});
    trace.timings.decode_s = seconds_since(start);
    trace.final_text = vocab.detokenize(trace.final_response);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    trace.complete = false;
    trace.error = describe_error(e);
  }
  return trace;
}

DecodeTrace run_session(ModelBackend& backend, VisualGenerator* generator, const DecodeRequest& request,
                        const DecodeConfig& cfg) {
  if (cfg.decoder == Decoder::degf) {
    if (generator == nullptr) throw ConfigError("the degf decoder needs a visual generator");
    return run_degf(backend, *generator, request, cfg);
  }
  return run_baseline(backend, request, cfg);
}

CallCounts expected_calls(const DecodeTrace& trace) {
  CallCounts c;
  const auto final_len = static_cast<std::uint64_t>(trace.final_response.size());
  switch (trace.config.decoder) {
    case Decoder::degf:
      c.logits = trace.initial_response.size() + 2 * final_len;
      c.generate = 1;
      break;
    case Decoder::regular:
      c.logits = final_len;
      break;
    case Decoder::m3id:
      c.logits = 2 * final_len;
      break;
    case Decoder::vcd:
    case Decoder::ritual:
      c.logits = 2 * final_len;
      c.transform = 1;
      break;
  }
  return c;
}

}  // namespace degf
