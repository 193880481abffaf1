// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "counting_backend.hpp"
#include "degf/pipeline.hpp"

namespace degf {
namespace {

using testing::CountingBackend;

Scenario scenario(const char* name) { return *Scenario::builtin(name); }

DecodeRequest caption_request(std::string id = "0") {
  return {"image-0", std::string(kCaptionPrompt), BenchmarkKind::open_caption, std::move(id)};
}

TEST(PromptTest, FirstPassAppendsDetailSentenceForShortAnswerKinds) {
  const std::string p = first_pass_prompt(BenchmarkKind::yes_no, "Is there a dog in the image?");
  EXPECT_EQ(p, "Is there a dog in the image? Briefly describe relevant details.");
  EXPECT_EQ(first_pass_prompt(BenchmarkKind::binary_choice, "Pick (a) or (b)."),
            "Pick (a) or (b). Briefly describe relevant details.");
  EXPECT_EQ(first_pass_prompt(BenchmarkKind::open_caption, kCaptionPrompt), kCaptionPrompt);
}

TEST(PromptTest, SecondPassIsVerbatim) {
  for (auto kind : {BenchmarkKind::yes_no, BenchmarkKind::open_caption, BenchmarkKind::binary_choice}) {
    EXPECT_EQ(second_pass_prompt(kind, "Is there a cat?"), "Is there a cat?");
  }
  EXPECT_THROW(first_pass_prompt(BenchmarkKind::yes_no, ""), ConfigError);
  EXPECT_THROW(second_pass_prompt(BenchmarkKind::yes_no, ""), ConfigError);
}

TEST(InitialQueryTest, CapAndTruncation) {
  SyntheticBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  cfg.initial_max_tokens = 1;
  cfg.seed = 3;
  const InitialResponse r = run_initial_query(backend, "image-0", "describe", cfg);
  ASSERT_EQ(r.tokens.size(), 1u);
  EXPECT_EQ(r.truncated, r.tokens[0] != 0);
  EXPECT_EQ(r.steps.size(), 1u);
}

TEST(InitialQueryTest, ImmediateEosGivesEmptyText) {
  SyntheticBackend backend(scenario("eos@0"));
  const InitialResponse r = run_initial_query(backend, "image-0", "describe", DecodeConfig{});
  EXPECT_EQ(r.tokens, TokenSeq{0});
  EXPECT_FALSE(r.truncated);
  EXPECT_EQ(backend.vocabulary().detokenize(r.tokens), "");
}

TEST(InitialQueryTest, EmptyPromptRejected) {
  SyntheticBackend backend(scenario("hashmix"));
  EXPECT_THROW(run_initial_query(backend, "image-0", "", DecodeConfig{}), ConfigError);
}

TEST(DegfSessionTest, CallCountsMatchResponseLengths) {
  for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
    CountingBackend backend(scenario("hashmix"));
    DecodeConfig cfg;
    cfg.seed = seed;
    const DecodeTrace t = run_degf(backend, backend, caption_request(), cfg);
    ASSERT_TRUE(t.complete) << t.error;
    EXPECT_EQ(backend.count("logits"), t.initial_response.size() + 2 * t.final_response.size());
    EXPECT_EQ(backend.count("generate"), 1u);
    EXPECT_EQ(t.calls, expected_calls(t));
    EXPECT_EQ(t.calls.logits, backend.count("logits"));
    EXPECT_EQ(t.steps.size(), t.final_response.size());
  }
}

TEST(DegfSessionTest, SequentialContractAndSingleReference) {
  CountingBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  cfg.seed = 9;
  const DecodeTrace t = run_degf(backend, backend, caption_request(), cfg);
  ASSERT_TRUE(t.complete);

  std::size_t i = 0;
  // Phase 1: one original-image call per initial token, prefix grows by one.
  for (std::size_t k = 0; k < t.initial_response.size(); ++k, ++i) {
    const auto& c = backend.calls[i];
    ASSERT_EQ(c.kind, "logits");
    EXPECT_EQ(c.image, std::optional<ImageRef>("image-0"));
    EXPECT_EQ(c.prompt, t.initial_prompt);
    EXPECT_EQ(c.prefix, TokenSeq(t.initial_response.begin(), t.initial_response.begin() + k));
  }
  // Phase 2: the generator sees the detokenized initial response.
  ASSERT_EQ(backend.calls[i].kind, "generate");
  EXPECT_EQ(backend.calls[i].prompt, backend.vocabulary().detokenize(t.initial_response));
  ++i;
  // Phase 3: pairs of (v, v') calls; the prefix is the committed response.
  for (std::size_t k = 0; k < t.final_response.size(); ++k) {
    const TokenSeq prefix(t.final_response.begin(), t.final_response.begin() + k);
    const auto& a = backend.calls[i++];
    const auto& b = backend.calls[i++];
    EXPECT_EQ(a.image, std::optional<ImageRef>("image-0"));
    EXPECT_EQ(b.image, t.generated_image_ref);
    EXPECT_EQ(a.prefix, prefix);
    EXPECT_EQ(b.prefix, prefix);
    EXPECT_EQ(a.prompt, t.prompt);
  }
  EXPECT_EQ(i, backend.calls.size());
}

TEST(DegfSessionTest, TraceInvariants) {
  for (const char* name : {"hashmix", "identical", "disjoint@0"}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      SyntheticBackend backend(scenario(name));
      DecodeConfig cfg;
      cfg.seed = seed;
      const DecodeTrace t = run_degf(backend, backend, caption_request(), cfg);
      ASSERT_TRUE(t.complete);
      ASSERT_EQ(t.steps.size(), t.final_response.size());
      for (std::size_t k = 0; k < t.steps.size(); ++k) {
        const auto& st = t.steps[k];
        EXPECT_EQ(st.t, static_cast<int>(k));
        EXPECT_EQ(st.token, t.final_response[k]);
        EXPECT_GE(st.distance, 0.0);
        EXPECT_LE(st.distance, 1.0);
        EXPECT_EQ(st.branch, st.distance < cfg.gamma ? Branch::complementary : Branch::contrastive);
        EXPECT_LE(st.top_original.size(), kTraceTopK);
      }
      if (t.truncated) {
        EXPECT_EQ(t.final_response.size(), static_cast<std::size_t>(cfg.max_new_tokens));
      } else {
        EXPECT_EQ(t.final_response.back(), backend.vocabulary().eos_id);
      }
    }
  }
}

TEST(DegfSessionTest, DeterministicUnderFixedSeed) {
  SyntheticBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  cfg.seed = 77;
  DecodeTrace a = run_degf(backend, backend, caption_request(), cfg);
  DecodeTrace b = run_degf(backend, backend, caption_request(), cfg);
  a.timings = b.timings = {};
  EXPECT_EQ(a, b);
  cfg.seed = 78;
  const auto other = run_degf(backend, backend, caption_request(), cfg);
  cfg.seed = 77;
  EXPECT_NE(other.final_response, run_degf(backend, backend, caption_request(), cfg).final_response);
}

TEST(DegfSessionTest, IdenticalScenarioMatchesRegularUnderGreedy) {
  SyntheticBackend backend(scenario("identical"));
  for (std::uint64_t seed : {1, 42}) {
    DecodeConfig cfg;
    cfg.seed = seed;
    cfg.sampling = Sampling::greedy;
    const DecodeTrace degf = run_degf(backend, backend, caption_request(), cfg);
    cfg.decoder = Decoder::regular;
    const DecodeTrace reg = run_baseline(backend, caption_request(), cfg);
    for (const auto& st : degf.steps) {
      EXPECT_EQ(st.distance, 0.0);
      EXPECT_EQ(st.branch, Branch::complementary);
    }
    EXPECT_EQ(degf.final_response, reg.final_response);
  }
}

TEST(DegfSessionTest, IdenticalScenarioWithZeroAlpha1MatchesRegularUnderSampling) {
  // With alpha1 = 0 the complementary fusion is the original stream itself;
  // the second pass resumes the RNG where the first pass left it.
  SyntheticBackend backend(scenario("identical"));
  DecodeConfig cfg;
  cfg.seed = 42;
  cfg.alpha1 = 0.0;
  const DecodeTrace degf = run_degf(backend, backend, caption_request(), cfg);
  const InitialResponse initial = run_initial_query(backend, "image-0", kCaptionPrompt, cfg);
  EXPECT_EQ(initial.tokens, degf.initial_response);
  DecodeConfig second = cfg;
  second.initial_max_tokens = cfg.max_new_tokens;
  const InitialResponse replay = run_initial_query(backend, "image-0", kCaptionPrompt, second, initial.rng);
  EXPECT_EQ(degf.final_response, replay.tokens);
}

TEST(DegfSessionTest, DisjointScenarioForcesContrastiveFirstStep) {
  SyntheticBackend backend(scenario("disjoint@0"));
  const DecodeTrace t = run_degf(backend, backend, caption_request(), DecodeConfig{});
  ASSERT_FALSE(t.steps.empty());
  EXPECT_EQ(t.steps[0].distance, 1.0);
  EXPECT_EQ(t.steps[0].branch, Branch::contrastive);
  EXPECT_EQ(t.steps[0].token, 1);
}

TEST(DegfSessionTest, MaxNewTokensOne) {
  SyntheticBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  cfg.max_new_tokens = 1;
  const DecodeTrace t = run_degf(backend, backend, caption_request(), cfg);
  EXPECT_EQ(t.final_response.size(), 1u);
  EXPECT_EQ(t.steps.size(), 1u);
}

TEST(DegfSessionTest, YesNoUsesModifiedFirstPromptOnly) {
  CountingBackend backend(scenario("hashmix"));
  const DecodeRequest req{"image-0", "Is there a dog in the image?", BenchmarkKind::yes_no, "q1"};
  const DecodeTrace t = run_degf(backend, backend, req, DecodeConfig{});
  EXPECT_EQ(t.initial_prompt, "Is there a dog in the image? Briefly describe relevant details.");
  EXPECT_EQ(t.prompt, "Is there a dog in the image?");
  EXPECT_EQ(backend.calls.front().prompt, t.initial_prompt);
  EXPECT_EQ(backend.calls.back().prompt, t.prompt);
}

TEST(DegfSessionTest, GeneratorFailureLeavesPartialTrace) {
  CountingBackend backend(scenario("hashmix"));
  backend.fail_generate_ = true;
  const DecodeTrace t = run_degf(backend, backend, caption_request(), DecodeConfig{});
  EXPECT_FALSE(t.complete);
  EXPECT_EQ(t.error.rfind("GeneratorUnavailable", 0), 0u) << t.error;
  EXPECT_FALSE(t.initial_response.empty());
  EXPECT_TRUE(t.steps.empty());
  EXPECT_EQ(backend.count("generate"), 1u);
}

TEST(DegfSessionTest, BackendOutageMidDecodeKeepsCommittedSteps) {
  CountingBackend probe(scenario("hashmix"));
  const DecodeTrace full = run_degf(probe, probe, caption_request(), DecodeConfig{});
  ASSERT_GE(full.final_response.size(), 3u);

  CountingBackend backend(scenario("hashmix"));
  backend.fail_logits_after_ = full.initial_response.size() + 2 * 2 + 1;
  const DecodeTrace t = run_degf(backend, backend, caption_request(), DecodeConfig{});
  EXPECT_FALSE(t.complete);
  EXPECT_EQ(t.error.rfind("BackendUnavailable", 0), 0u);
  EXPECT_EQ(t.final_response.size(), 2u);
  EXPECT_EQ(t.steps.size(), 2u);
  EXPECT_EQ(t.generated_image_ref, full.generated_image_ref);
}

TEST(DegfSessionTest, ConfigErrorsThrow) {
  SyntheticBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  cfg.gamma = 2.0;
  EXPECT_THROW(run_degf(backend, backend, caption_request(), cfg), ConfigError);
  cfg = {};
  cfg.decoder = Decoder::vcd;
  EXPECT_THROW(run_degf(backend, backend, caption_request(), cfg), ConfigError);
  EXPECT_THROW(run_session(backend, nullptr, caption_request(), DecodeConfig{}), ConfigError);
}

TEST(DegfSessionTest, GeneratorSeedPolicy) {
  CountingBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  const auto a = run_degf(backend, backend, caption_request("x"), cfg);
  const auto b = run_degf(backend, backend, caption_request("y"), cfg);
  // Same caption is not guaranteed, but the derived seed differs per instance.
  EXPECT_NE(derive_generator_seed(0, "x"), derive_generator_seed(0, "y"));
  cfg.generator_seed = 5;
  const auto c = run_degf(backend, backend, caption_request("x"), cfg);
  const auto d = run_degf(backend, backend, caption_request("y"), cfg);
  EXPECT_EQ(c.generated_image_ref, d.generated_image_ref);
  (void)a;
  (void)b;
}

TEST(BaselineSessionTest, RegularCallsAndShape) {
  CountingBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  cfg.decoder = Decoder::regular;
  const DecodeTrace t = run_baseline(backend, caption_request(), cfg);
  EXPECT_TRUE(t.initial_response.empty());
  EXPECT_FALSE(t.generated_image_ref);
  EXPECT_EQ(backend.count("logits"), t.final_response.size());
  EXPECT_EQ(t.calls, expected_calls(t));
  for (const auto& st : t.steps) EXPECT_EQ(st.branch, Branch::not_applicable);
}

TEST(BaselineSessionTest, VcdWithIdentityDistortionMatchesRegular) {
  Scenario s = scenario("hashmix");
  s.distort_identity = true;
  CountingBackend backend(s);
  for (double alpha : {0.5, 1.0, 3.0}) {
    DecodeConfig cfg;
    cfg.sampling = Sampling::greedy;
    cfg.decoder = Decoder::regular;
    const auto reg = run_baseline(backend, caption_request(), cfg);
    cfg.decoder = Decoder::vcd;
    cfg.vcd_alpha = alpha;
    const auto vcd = run_baseline(backend, caption_request(), cfg);
    EXPECT_EQ(vcd.final_response, reg.final_response);
    EXPECT_EQ(vcd.auxiliary_image_ref, std::optional<ImageRef>("image-0"));
  }
  EXPECT_EQ(backend.count("distort"), 3u);
}

TEST(BaselineSessionTest, M3idWithImageIndependentLogitsMatchesRegular) {
  SyntheticBackend backend(scenario("identical"));
  for (std::uint64_t seed : {1, 2, 3}) {
    DecodeConfig cfg;
    cfg.seed = seed;
    cfg.decoder = Decoder::regular;
    const auto reg = run_baseline(backend, caption_request(), cfg);
    cfg.decoder = Decoder::m3id;
    const auto m3 = run_baseline(backend, caption_request(), cfg);
    EXPECT_EQ(m3.final_response, reg.final_response);
  }
}

TEST(BaselineSessionTest, AuxiliaryStreams) {
  CountingBackend backend(scenario("hashmix"));
  DecodeConfig cfg;
  cfg.decoder = Decoder::ritual;
  cfg.ritual_augment = 2;
  const auto r = run_baseline(backend, caption_request(), cfg);
  EXPECT_EQ(r.auxiliary_image_ref, std::optional<ImageRef>("aug:2:image-0"));
  EXPECT_EQ(backend.count("transform"), 1u);
  EXPECT_EQ(r.calls, expected_calls(r));

  CountingBackend b2(scenario("hashmix"));
  cfg.decoder = Decoder::m3id;
  const auto m = run_baseline(b2, caption_request(), cfg);
  for (const auto& c : b2.calls) {
    if (c.image) {
      EXPECT_EQ(*c.image, "image-0");
    }
  }
  EXPECT_EQ(b2.count("logits"), 2 * m.final_response.size());

  CountingBackend b3(scenario("hashmix"));
  cfg.decoder = Decoder::vcd;
  const auto v = run_baseline(b3, caption_request(), cfg);
  EXPECT_EQ(v.auxiliary_image_ref, std::optional<ImageRef>("distort:500:image-0"));
}

}  // namespace
}  // namespace degf
