// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

// Acceptance run: one PASS/FAIL line per criterion, exit status 1 when any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "degf/decoders.hpp"
#include "degf/distributions.hpp"
#include "degf/http_backend.hpp"
#include "degf/metrics.hpp"
#include "degf/pipeline.hpp"
#include "degf/synthetic_backend.hpp"
#include "golden.hpp"
#include "mock_adapter.hpp"
#include "oracles.hpp"

namespace degf {
namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects failed checks; the first few are reported.
class Checks {
 public:
  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures_;
    if (failures_ <= 3) {
      if (!first_.empty()) first_ += "; ";
      first_ += what;
    }
  }
  bool ok() const { return failures_ == 0; }
  std::string failures() const { return std::to_string(failures_) + " failed check(s): " + first_; }

 private:
  std::size_t failures_ = 0;
  std::string first_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::vector<double> as_vector(std::span<const double> s) { return {s.begin(), s.end()}; }

// ---------------------------------------------------------------------------

Outcome divergence_kernel() {
  std::mt19937_64 gen(20260101);
  Checks c;
  double worst = 0.0;
  double kernel_s = 0.0;
  const auto start = Clock::now();
  for (int trial = 0; trial < 10000; ++trial) {
    const std::size_t n = 2 + gen() % 511;
    const ProbVector p = testing::random_distribution(gen, n);
    const ProbVector q = testing::random_distribution(gen, n);
    const auto t0 = Clock::now();
    const double d = js_divergence(p, q);
    const double d_rev = js_divergence(q, p);
    kernel_s += seconds_since(t0);
    const double err = std::fabs(d - testing::js_oracle(p, q));
    worst = std::max(worst, err);
    c.expect(err <= 1e-10, "oracle mismatch at trial " + std::to_string(trial));
    c.expect(d == d_rev, "asymmetry at trial " + std::to_string(trial));
    c.expect(d >= 0.0 && d <= 1.0, "out of [0,1] at trial " + std::to_string(trial));
  }
  const double total_s = seconds_since(start);
  c.expect(total_s < 5.0, "runtime " + fmt("%.2f s", total_s));
  return {c.ok(), c.ok() ? "10000 pairs, V in [2,512], max |err| " + fmt("%.2e", worst) + ", kernel " +
                               fmt("%.3f s", kernel_s) + ", total " + fmt("%.2f s", total_s)
                         : c.failures()};
}

Outcome branch_correctness() {
  std::mt19937_64 gen(515);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Checks c;
  std::size_t complementary = 0, contrastive = 0, boundary = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + gen() % 64;
    const auto f_v = testing::random_logits(gen, n, 3.0);
    auto f_r = f_v;
    const double spread = std::pow(10.0, -3.0 + 4.0 * u(gen));
    std::normal_distribution<double> noise(0.0, spread);
    for (auto& x : f_r) x += noise(gen);

    const auto p = testing::softmax_oracle(f_v);
    const auto q = testing::softmax_oracle(f_r);
    const double d_oracle = testing::js_oracle(ProbVector(std::vector<double>(p.begin(), p.end())),
                                               ProbVector(std::vector<double>(q.begin(), q.end())));
    DecodeConfig cfg;
    if (trial % 10 == 0) {
      // Threshold placed exactly on the library's distance: the rule is strict.
      cfg.gamma = std::min(1.0, js_divergence(softmax(LogitVector(f_v)), softmax(LogitVector(f_r))));
      const StepDecision s = degf_step(LogitVector(f_v), LogitVector(f_r), cfg);
      c.expect(s.branch == Branch::contrastive, "d == gamma must take the contrastive branch");
      ++boundary;
      continue;
    }
    do {
      cfg.gamma = trial % 3 == 0 ? u(gen) : u(gen) * 0.3;
    } while (std::fabs(cfg.gamma - d_oracle) < 1e-9);
    const StepDecision s = degf_step(LogitVector(f_v), LogitVector(f_r), cfg);
    const Branch expected = d_oracle < cfg.gamma ? Branch::complementary : Branch::contrastive;
    c.expect(s.branch == expected, "branch disagreement at trial " + std::to_string(trial));
    (expected == Branch::complementary ? complementary : contrastive) += 1;
  }
  return {c.ok(), c.ok() ? "1000/1000 agree (" + std::to_string(complementary) + " complementary, " +
                               std::to_string(contrastive) + " contrastive, " + std::to_string(boundary) +
                               " on the threshold)"
                         : c.failures()};
}

Outcome reduction_property() {
  std::mt19937_64 gen(3003);
  Checks c;
  double worst = 0.0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 2 + gen() % 128;
    auto f_v = testing::random_logits(gen, n, 4.0);
    auto f_aux = testing::random_logits(gen, n, 4.0);
    // Masked entries in both streams; the original keeps at least one live token.
    for (std::size_t i = 0; i < n; ++i) {
      if (gen() % 10 == 0) f_aux[i] = kMasked;
    }
    if (n > 2 && gen() % 2 == 0) f_v[gen() % (n - 1) + 1] = kMasked;
    const LogitVector v(f_v), aux(f_aux);

    DecodeConfig cfg;
    cfg.beta = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    cfg.alpha1 = cfg.alpha2 = cfg.vcd_alpha = cfg.ritual_kappa = 0.0;
    cfg.m3id_lambda = std::uniform_real_distribution<double>(0.0, 1.0)(gen);
    cfg.gamma = trial % 2 ? 1.0 : 0.0;  // exercise both degf branches
    const StepDecision reg = regular_step(v, cfg);
    const std::uint64_t seed = gen();
    const TokenId reg_token = sample(reg.final_distribution, Sampling::multinomial,
                                     Xoshiro256StarStar::from_seed(seed)).token;

    const std::vector<std::pair<const char*, StepDecision>> reduced = {
        {"degf", degf_step(v, aux, cfg)},
        {"vcd", vcd_step(v, aux, cfg)},
        {"m3id", m3id_step(v, aux, 0, cfg)},
        {"ritual", ritual_step(v, aux, cfg)},
    };
    for (const auto& [name, s] : reduced) {
      for (std::size_t i = 0; i < n; ++i) {
        const double err = std::fabs(s.final_distribution[i] - reg.final_distribution[i]);
        worst = std::max(worst, err);
        c.expect(err <= 1e-12, std::string(name) + " distribution differs at trial " + std::to_string(trial));
      }
      const TokenId tok = sample(s.final_distribution, Sampling::multinomial, Xoshiro256StarStar::from_seed(seed)).token;
      c.expect(tok == reg_token, std::string(name) + " sampled a different token at trial " + std::to_string(trial));
    }
  }
  return {c.ok(), c.ok() ? "500 contexts x {degf, vcd, m3id, ritual}, max |diff| " + fmt("%.2e", worst) +
                               ", identical sampled tokens"
                         : c.failures()};
}

Outcome plausibility_constraint() {
  std::mt19937_64 gen(77);
  const std::vector<double> betas = {0.0, 0.05, 0.1, 0.25, 0.5, 1.0};
  Checks c;
  std::size_t zeros = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + gen() % 96;
    const LogitVector v(testing::random_logits(gen, n, 3.0));
    const LogitVector aux(testing::random_logits(gen, n, 3.0));
    std::vector<bool> previous(n, true);
    for (double beta : betas) {
      DecodeConfig cfg;
      cfg.beta = beta;
      cfg.gamma = trial % 2 ? 1.0 : 0.0;
      const std::vector<StepDecision> decisions = {regular_step(v, cfg), degf_step(v, aux, cfg), vcd_step(v, aux, cfg),
                                                   m3id_step(v, aux, 5, cfg), ritual_step(v, aux, cfg)};
      const StepDecision& ref = decisions.front();
      double mx = 0.0;
      for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, ref.original[i]);
      std::vector<bool> keep(n);
      std::size_t kept = 0;
      for (std::size_t i = 0; i < n; ++i) {
        keep[i] = ref.original[i] >= beta * mx;
        kept += keep[i];
        c.expect(!keep[i] || previous[i], "keep-set not nested at beta " + fmt("%g", beta));
      }
      for (const auto& s : decisions) {
        c.expect(s.keep_set_size == kept, "keep-set size mismatch at beta " + fmt("%g", beta));
        for (std::size_t i = 0; i < n; ++i) {
          if (keep[i]) continue;
          c.expect(s.final_distribution[i] == 0.0, "masked token has nonzero probability");
          ++zeros;
        }
      }
      previous = keep;
    }
  }
  return {c.ok(), c.ok() ? "300 contexts x 6 betas x 5 decoders, " + std::to_string(zeros) +
                               " masked entries all exactly 0, keep-sets nested"
                         : c.failures()};
}

// Exact decode-tree enumeration for the self-correcting session.
class SequenceOracle {
 public:
  SequenceOracle(SyntheticBackend& backend, DecodeConfig cfg, DecodeRequest request)
      : b_(backend), cfg_(std::move(cfg)), req_(std::move(request)), vocab_(backend.vocabulary()) {}

  std::map<TokenSeq, long double> run() {
    initial({}, 1.0L);
    return probs_;
  }
  std::size_t complementary = 0, contrastive = 0;

 private:
  std::vector<long double> masked(const std::vector<long double>& p, const std::vector<double>& fused) const {
    long double mx = 0;
    for (auto x : p) mx = std::max(mx, x);
    std::vector<double> kept(fused.size(), kMasked);
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] >= static_cast<long double>(cfg_.beta) * mx) kept[i] = fused[i];
    }
    return testing::softmax_oracle(kept);
  }

  std::vector<double> logits(const ImageRef& image, const std::string& prompt, const TokenSeq& prefix) {
    return as_vector(b_.logits(image, prompt, prefix).values());
  }

  void initial(TokenSeq prefix, long double prob) {
    const bool ended = !prefix.empty() && prefix.back() == vocab_.eos_id;
    if (ended || prefix.size() == static_cast<std::size_t>(cfg_.initial_max_tokens)) {
      const ImageRef ref = b_.generate(vocab_.detokenize(prefix), *cfg_.generator_seed, cfg_.diffusion_steps);
      second(ref, {}, prob);
      return;
    }
    const auto f = logits(req_.image, first_pass_prompt(req_.kind, req_.prompt), prefix);
    const auto dist = masked(testing::softmax_oracle(f), f);
    for (std::size_t t = 0; t < dist.size(); ++t) {
      if (dist[t] == 0) continue;
      TokenSeq next = prefix;
      next.push_back(static_cast<TokenId>(t));
      initial(std::move(next), prob * dist[t]);
    }
  }

  void second(const ImageRef& ref, TokenSeq prefix, long double prob) {
    const bool ended = !prefix.empty() && prefix.back() == vocab_.eos_id;
    if (ended || prefix.size() == static_cast<std::size_t>(cfg_.max_new_tokens)) {
      probs_[prefix] += prob;
      return;
    }
    const auto f_v = logits(req_.image, req_.prompt, prefix);
    const auto f_r = logits(ref, req_.prompt, prefix);
    const auto p = testing::softmax_oracle(f_v);
    const auto q = testing::softmax_oracle(f_r);
    const double d = testing::js_oracle(ProbVector(std::vector<double>(p.begin(), p.end())),
                                        ProbVector(std::vector<double>(q.begin(), q.end())));
    std::vector<double> fused(f_v.size());
    const bool comp = d < cfg_.gamma;
    (comp ? complementary : contrastive) += 1;
    for (std::size_t i = 0; i < fused.size(); ++i) {
      fused[i] = comp ? f_v[i] + cfg_.alpha1 * f_r[i] : (1.0 + cfg_.alpha2) * f_v[i] - cfg_.alpha2 * f_r[i];
    }
    const auto dist = masked(p, fused);
    for (std::size_t t = 0; t < dist.size(); ++t) {
      if (dist[t] == 0) continue;
      TokenSeq next = prefix;
      next.push_back(static_cast<TokenId>(t));
      second(ref, std::move(next), prob * dist[t]);
    }
  }

  SyntheticBackend& b_;
  DecodeConfig cfg_;
  DecodeRequest req_;
  Vocabulary vocab_;
  std::map<TokenSeq, long double> probs_;
};

Outcome sequence_distribution() {
  const auto start = Clock::now();
  Json doc = {{"schema", kScenarioSchema},
              {"name", "tiny"},
              {"vocab", {{"size", 4}, {"eos_id", 0}, {"tokens", {"</s>", "a", "b", "c"}}}},
              {"hash_seed", 4242},
              {"logit_scale", 1.5},
              {"image_weight", 0.5},
              {"eos_ramp", 0.4}};
  SyntheticBackend backend(Scenario::from_json(doc));
  DecodeConfig cfg;
  cfg.initial_max_tokens = 3;
  cfg.max_new_tokens = 3;
  cfg.generator_seed = 11;
  cfg.gamma = 0.02;
  const DecodeRequest req{"image-0", "describe", BenchmarkKind::open_caption, "seq"};

  SequenceOracle oracle(backend, cfg, req);
  const auto exact = oracle.run();

  constexpr std::size_t kRuns = 200000;
  std::map<TokenSeq, std::size_t> counts;
  for (std::size_t s = 0; s < kRuns; ++s) {
    cfg.seed = s;
    const DecodeTrace t = run_degf(backend, backend, req, cfg);
    if (!t.complete) return {false, "run " + std::to_string(s) + " incomplete: " + t.error};
    ++counts[t.final_response];
  }

  Checks c;
  double worst_z = 0.0;
  long double total = 0;
  for (const auto& [seq, p] : exact) total += p;
  c.expect(std::fabs(static_cast<double>(total) - 1.0) < 1e-12, "oracle probabilities do not sum to 1");
  for (const auto& [seq, n] : counts) {
    c.expect(exact.count(seq) > 0, "sampled a sequence the oracle gives probability 0");
  }
  for (const auto& [seq, p] : exact) {
    const double expected = static_cast<double>(p) * kRuns;
    const double sd = std::sqrt(kRuns * static_cast<double>(p) * (1.0 - static_cast<double>(p)));
    const double observed = counts.count(seq) ? static_cast<double>(counts.at(seq)) : 0.0;
    const double z = sd > 0 ? std::fabs(observed - expected) / sd : (observed == expected ? 0.0 : INFINITY);
    worst_z = std::max(worst_z, z);
    c.expect(std::fabs(observed - expected) <= 3.0 * sd, "sequence frequency outside 3 sigma");
  }
  const double elapsed = seconds_since(start);
  c.expect(elapsed < 60.0, "runtime " + fmt("%.1f s", elapsed));
  return {c.ok(), c.ok() ? std::to_string(exact.size()) + " sequences, 200000 runs, max |z| " + fmt("%.2f", worst_z) +
                               ", oracle branches " + std::to_string(oracle.complementary) + " complementary / " +
                               std::to_string(oracle.contrastive) + " contrastive, " + fmt("%.1f s", elapsed)
                         : c.failures()};
}

Outcome metric_oracles() {
  Checks c;
  // POPE: decode the six fixture questions on the scripted scenario.
  SyntheticBackend pope_backend(Scenario::load(testing::fixture_path("pope_scenario.json").string()));
  auto records = read_records(testing::fixture_path("pope_dataset.jsonl"));
  for (auto& r : records) {
    DecodeConfig cfg;
    cfg.decoder = Decoder::regular;
    const DecodeTrace t = run_baseline(pope_backend, {r.image, r.question, BenchmarkKind::yes_no, r.instance_id}, cfg);
    r.response = t.final_text;
  }
  const PopeScores pope = pope_scores(records);
  c.expect(pope.tp == 2 && pope.fp == 1 && pope.fn == 1 && pope.tn == 2, "POPE confusion matrix");
  for (double v : {pope.accuracy, pope.precision, pope.recall, pope.f1}) {
    c.expect(std::fabs(v - 2.0 / 3.0) < 1e-12, "POPE rate");
  }

  // CHAIR: hand-tallied corpus.
  const auto corpus = read_records(testing::fixture_path("chair_corpus.jsonl"));
  const GroundTruth truth = load_ground_truth(testing::fixture_path("chair_truth.json"));
  const SynonymTable syn = SynonymTable::load(std::filesystem::path(DEGF_TEST_DATA_DIR) / "coco_synonyms.tsv");
  const Json expected = Json::parse(testing::read_file(testing::fixture_path("chair_expected.json")));
  const ChairScores chair = chair_scores(corpus, truth, syn);
  c.expect(chair.sentences == expected["sentences"] && chair.hallucinated_sentences == expected["hallucinated_sentences"] &&
               chair.mentions == expected["mentions"] &&
               chair.hallucinated_mentions == expected["hallucinated_mentions"] &&
               chair.truth_objects == expected["truth_objects"] && chair.covered_objects == expected["covered_objects"] &&
               chair.words == expected["words"],
           "CHAIR hand counts");

  // MME: two images, one fully correct.
  auto mme_rec = [](std::string id, std::string image, bool label, std::string response) {
    BenchmarkRecord r;
    r.instance_id = std::move(id);
    r.benchmark = Benchmark::mme;
    r.image = std::move(image);
    r.label_yes = label;
    r.response = std::move(response);
    return r;
  };
  const MmeScores mme = mme_score({mme_rec("a1", "A", true, "Yes"), mme_rec("a2", "A", false, "No"),
                                   mme_rec("b1", "B", true, "Yes"), mme_rec("b2", "B", false, "Yes")});
  c.expect(mme.score == 125.0, "MME score");

  // 0/0 conventions.
  BenchmarkRecord empty_caption;
  empty_caption.instance_id = "z";
  empty_caption.benchmark = Benchmark::chair;
  empty_caption.image = "img1";
  empty_caption.response = "Nothing here.";
  const ChairScores zero = chair_scores({empty_caption}, truth, syn);
  c.expect(zero.chair_i == 0.0 && zero.recall == 0.0, "CHAIR 0/0 value");
  c.expect(std::find(zero.zero_division.begin(), zero.zero_division.end(), "chair_i") != zero.zero_division.end(),
           "CHAIR 0/0 flag");
  auto negatives = records;
  for (auto& r : negatives) r.response = "no";
  const PopeScores none = pope_scores(negatives);
  c.expect(none.precision == 0.0 && !none.zero_division.empty(), "POPE 0/0 precision flagged");

  return {c.ok(), c.ok() ? "POPE TP2 FP1 FN1 TN2 (all rates 2/3); CHAIR S=" + std::to_string(chair.hallucinated_sentences) +
                               "/" + std::to_string(chair.sentences) + " I=" +
                               std::to_string(chair.hallucinated_mentions) + "/" + std::to_string(chair.mentions) +
                               " recall=" + std::to_string(chair.covered_objects) + "/" +
                               std::to_string(chair.truth_objects) + "; MME 125; 0/0 -> 0 flagged"
                         : c.failures()};
}

Outcome golden_end_to_end() {
  std::string text;
  int code = -1;
  const std::string trace = testing::golden_decode_trace(&text, &code);
  Checks c;
  c.expect(code == 0, "exit code " + std::to_string(code));
  c.expect(testing::matches_golden("golden_decode_trace.jsonl", trace), "trace differs from the committed fixture");
  std::size_t steps = 0;
  try {
    const Json j = Json::parse(trace);
    const Json& cfg = j.at("config");
    c.expect(cfg.at("alpha1") == 3.0 && cfg.at("alpha2") == 1.0 && cfg.at("gamma") == 0.1 && cfg.at("beta") == 0.25,
             "defaults");
    for (const auto& st : j.at("steps")) {
      ++steps;
      c.expect(st.at("branch") == "complementary", "branch");
      c.expect(st.at("d").get<double>() == 0.0, "d");
    }
    c.expect(steps > 0, "no steps");
  } catch (const std::exception& e) {
    c.expect(false, std::string("unreadable trace: ") + e.what());
  }
  return {c.ok(), c.ok() ? "byte-identical, " + std::to_string(steps) + " steps all complementary with d=0"
                         : c.failures()};
}

Outcome qualitative_divergence_pattern() {
  // Instances carry scripted hallucination steps: at those steps the
  // reference stream is replaced by unrelated logits.
  constexpr int kSteps = 8;
  std::mt19937_64 gen(99);
  Json script = Json::array();
  for (int t = 0; t < kSteps; ++t) {
    script.push_back({{"t", t},
                      {"stream", "reference"},
                      {"prompt_contains", "#h" + std::to_string(t) + "#"},
                      {"logits", testing::random_logits(gen, 32, 3.0)}});
  }
  Json doc = {{"schema", kScenarioSchema}, {"name", "two-class"}, {"hash_seed", 5},     {"image_weight", 0.1},
              {"eos_bias", -30.0},          {"eos_ramp", 0.0},       {"script", script}};
  SyntheticBackend backend(Scenario::from_json(doc));

  std::vector<DecodeTrace> traces;
  std::map<std::string, std::set<int>> bad_steps;
  std::vector<ResponsePoint> points;
  std::uniform_real_distribution<double> jitter(-0.03, 0.03);
  for (int i = 0; i < 60; ++i) {
    std::vector<int> positions(kSteps);
    for (int t = 0; t < kSteps; ++t) positions[t] = t;
    std::shuffle(positions.begin(), positions.end(), gen);
    const int k = i % 5;
    std::string prompt = "Describe the scene. ";
    const std::string id = "inst-" + std::to_string(i);
    for (int j = 0; j < k; ++j) {
      prompt += "#h" + std::to_string(positions[j]) + "#";
      bad_steps[id].insert(positions[j]);
    }
    DecodeConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(i);
    cfg.max_new_tokens = kSteps;
    cfg.initial_max_tokens = 8;
    traces.push_back(run_degf(backend, backend, {"image-" + std::to_string(i), prompt, BenchmarkKind::open_caption, id},
                              cfg));
    points.push_back({0.9 - 0.1 * k + jitter(gen), static_cast<double>(k) / kSteps});
  }
  const TokenLabeler labeler = [&](const DecodeTrace& t, const StepTrace& s) {
    const auto it = bad_steps.find(t.instance_id);
    return it != bad_steps.end() && it->second.count(s.t) ? TokenClass::hallucinatory : TokenClass::clean;
  };
  const DivergenceStats stats = trace_divergence_stats(traces, labeler, points);
  Checks c;
  for (const auto& t : traces) c.expect(t.complete && t.steps.size() == kSteps, "trace shape");
  const Summary& clean = stats.by_class.at(TokenClass::clean);
  const Summary& bad = stats.by_class.at(TokenClass::hallucinatory);
  c.expect(bad.n > 0 && clean.n > 0, "both classes populated");
  c.expect(bad.mean > clean.mean, "hallucinatory mean d not above clean mean");
  c.expect(stats.pearson_rho && *stats.pearson_rho < 0.0, "correlation not negative");
  std::string bins;
  for (const auto& b : stats.binned) {
    if (b.n == 0) continue;
    if (!bins.empty()) bins += " ";
    bins += fmt("%.2f", b.mean);
  }
  return {c.ok(), c.ok() ? "mean d hallucinatory " + fmt("%.4f", bad.mean) + " (n=" + std::to_string(bad.n) +
                               ") > clean " + fmt("%.4f", clean.mean) + " (n=" + std::to_string(clean.n) +
                               "); rho " + fmt("%.3f", *stats.pearson_rho) + "; binned scores [" + bins + "]"
                         : c.failures()};
}

Outcome protocol_conformance() {
  using testing::fast_endpoint;
  using testing::MockAdapter;
  Checks c;
  std::size_t checks = 0;
  const auto expect = [&](bool ok, const std::string& what) {
    ++checks;
    c.expect(ok, what);
  };
  const TokenSeq prefix = {1, 2};
  const auto throws = [](auto&& fn, auto tag) {
    using E = decltype(tag);
    try {
      fn();
    } catch (const E&) {
      return true;
    } catch (...) {
      return false;
    }
    return false;
  };

  {
    MockAdapter mock;
    HttpAdapterClient client(fast_endpoint(mock));
    const AdapterMeta meta = client.health_and_meta();
    expect(meta.vocab_size == 8 && meta.model_name == "echo-lvlm", "meta fields");
    const LogitVector l = client.fetch_logits(ImageRef("img:1"), "p", prefix);
    const Json want = mock.echo_logits(Json{{"image_ref", "img:1"}, {"prompt", "p"}, {"prefix_ids", prefix}});
    bool same = l.size() == want.size();
    for (std::size_t i = 0; same && i < l.size(); ++i) {
      same = want[i].is_string() ? l.masked(i) : l[i] == want[i].get<double>();
    }
    expect(same, "logits payload round-trip");
    mock.set_logits_override(Json::array({1.0, 2.0}));
    expect(throws([&] { client.fetch_logits(ImageRef("img:1"), "p", prefix); }, ProtocolError("")),
           "wrong-length logits");
    mock.set_logits_override(std::nullopt);
    mock.set_raw_logits_body("{\"logits\": [NaN]}");
    expect(throws([&] { client.fetch_logits(ImageRef("img:1"), "p", prefix); }, ProtocolError("")), "NaN payload");
    mock.set_raw_logits_body(std::nullopt);

    mock.fail_next(2, 503, true);
    const auto ids_before = mock.request_ids().size();
    client.fetch_logits(ImageRef("img:1"), "p", prefix);
    const auto ids = mock.request_ids();
    expect(ids.size() == ids_before + 3 && ids[ids_before] == ids.back(), "retry keeps the request id");
    mock.fail_next(10, 500, true);
    expect(throws([&] { client.fetch_logits(ImageRef("img:1"), "p", prefix); }, BackendUnavailable("")),
           "retry exhaustion");
    mock.fail_next(0);
    mock.fail_next(1, 400, false);
    expect(throws([&] { client.fetch_logits(ImageRef("img:1"), "p", prefix); }, ProtocolError("")),
           "non-retryable 4xx");
    expect(throws([&] { client.request_image("", 1, 50); }, ValidationError("")), "empty caption rejected locally");
    expect(client.request_image("a dog", 1, 50) != client.request_image("a dog", 1, 10), "steps reach the generator");
    mock.fail_route("/txt2img", 503, false, "oom");
    expect(throws([&] { client.request_image("a dog", 1, 50); }, GeneratorUnavailable("")), "generator failure");
  }
  {
    MockAdapter mock;
    AdapterEndpoint ep = fast_endpoint(mock);
    ep.logits_timeout = std::chrono::milliseconds(100);
    ep.max_retries = 1;
    HttpAdapterClient client(ep);
    client.health_and_meta();
    mock.set_delay(std::chrono::milliseconds(400));
    expect(throws([&] { client.fetch_logits(ImageRef("img:1"), "p", prefix); }, BackendUnavailable("")), "timeout");
    mock.set_delay(std::chrono::milliseconds(0));
  }
  {
    MockAdapter mock;
    AdapterEndpoint ep = fast_endpoint(mock);
    ep.max_in_flight = 2;
    HttpAdapterClient client(ep);
    client.health_and_meta();
    mock.set_delay(std::chrono::milliseconds(40));
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.fetch_logits(ImageRef("img:1"), "p", prefix); });
    for (auto& t : threads) t.join();
    expect(mock.requests("/logits") == 8 && mock.max_in_flight() <= 2, "in-flight limit");
  }
  {
    MockAdapter mock;
    AdapterEndpoint ep = fast_endpoint(mock);
    ep.health_max_age = std::chrono::milliseconds(0);
    HttpAdapterClient client(ep);
    client.fetch_logits(ImageRef("img:1"), "p", prefix);
    mock.set_model("swapped", 8);
    expect(throws([&] { client.fetch_logits(ImageRef("img:1"), "p", prefix); }, ProtocolError("")),
           "model swap detected");
  }
  const std::string transcript = testing::golden_http_transcript();
  expect(testing::matches_golden("golden_transcript.jsonl", transcript), "golden transcript");
  std::size_t lines = 0;
  for (char ch : transcript) lines += ch == '\n';
  return {c.ok(), c.ok() ? std::to_string(checks) + " contract checks against the mock adapter; transcript " +
                               std::to_string(lines) + " exchanges byte-identical"
                         : c.failures()};
}

}  // namespace
}  // namespace degf

int main() {
  using degf::Outcome;
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"divergence kernel", degf::divergence_kernel},
      {"branch correctness", degf::branch_correctness},
      {"reduction to regular decoding", degf::reduction_property},
      {"plausibility constraint", degf::plausibility_constraint},
      {"sequence distribution", degf::sequence_distribution},
      {"metric oracles", degf::metric_oracles},
      {"golden end-to-end", degf::golden_end_to_end},
      {"divergence pattern by class", degf::qualitative_divergence_pattern},
      {"protocol conformance", degf::protocol_conformance},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
