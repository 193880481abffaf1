// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

/**
 * Benchmark scoring and trace statistics.
 *
 * Records are read from JSONL files with "schema": "degf-bench/1":
 *
 *   {"schema": "degf-bench/1", "instance_id": "pope-0001", "benchmark": "pope",
 *    "image": "COCO_val2014_000000000042", "question": "Is there a dog in the image?",
 *    "label": "yes", "response": "Yes, there is."}
 *
 *   label      "yes"/"no" for pope and mme; an array of object names (or
 *              absent, with ground truth supplied separately) for chair
 *   response   model output; absent in input datasets
 *   similarity optional image-similarity column consumed by the analysis
 *   trace      optional instance id of the DecodeTrace that produced it
 *   judge      reserved, carried through untouched
 *
 * Division by zero in any rate yields 0 and the metric name is listed in the
 * result's `zero_division` flags.
 */

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "degf/json_text.hpp"
#include "degf/pipeline.hpp"

namespace degf {

inline constexpr std::string_view kBenchSchema = "degf-bench/1";

enum class Benchmark { pope, chair, mme };

std::string_view to_string(Benchmark b);
Benchmark parse_benchmark(std::string_view name);
/// Prompt handling used when decoding a benchmark instance.
BenchmarkKind kind_of(Benchmark b);

struct BenchmarkRecord {
  std::string instance_id;
  Benchmark benchmark = Benchmark::pope;
  std::string image;
  std::string question;
  std::optional<bool> label_yes;                          // pope, mme
  std::optional<std::vector<std::string>> label_objects;  // chair
  std::optional<std::string> response;
  std::optional<double> similarity;
  std::optional<std::string> trace;
  Json judge;

  /// Label shape must match the benchmark. Throws SchemaError.
  void validate() const;

  friend bool operator==(const BenchmarkRecord&, const BenchmarkRecord&) = default;
};

Json record_to_json(const BenchmarkRecord& r);
BenchmarkRecord record_from_json(const Json& j);

/// Reads every line; on failure throws one SchemaError listing each offending
/// line as "path:line: reason".
std::vector<BenchmarkRecord> read_records(const std::filesystem::path& path);

/// First alphabetic word, case-insensitive. nullopt when it is neither.
std::optional<bool> parse_yes_no(std::string_view response);

struct PopeScores {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::size_t unparsed = 0;
  double accuracy = 0, precision = 0, recall = 0, f1 = 0;
  std::vector<std::string> zero_division;
};

/// Unparseable responses count as "no". Throws EmptyInput.
PopeScores pope_scores(const std::vector<BenchmarkRecord>& records);

/// Maps surface forms (possibly multi-word) to canonical object classes.
class SynonymTable {
 public:
  /// TSV lines "surface<TAB>canonical"; '#' comments and blank lines skipped.
  static SynonymTable load(const std::filesystem::path& path);
  static SynonymTable parse(std::string_view tsv);

  void add(std::string_view surface, std::string_view canonical);
  /// Canonical class for a lowercase phrase, trying a singular form of the
  /// last word when the phrase itself is unknown.
  std::optional<std::string> lookup(std::string_view phrase) const;
  std::size_t max_words() const { return max_words_; }
  std::size_t size() const { return map_.size(); }

  struct Mention {
    std::string canonical;
    std::size_t word = 0;
  };
  /// Longest-match scan over lowercase words.
  std::vector<Mention> mentions(const std::vector<std::string>& words) const;

 private:
  std::map<std::string, std::string, std::less<>> map_;
  std::size_t max_words_ = 1;
};

/// Lowercase alphanumeric words.
std::vector<std::string> split_words(std::string_view text);
/// Splits on '.', '!' or '?' followed by whitespace or end of text; segments
/// without words are dropped.
std::vector<std::string> split_sentences(std::string_view text);

using GroundTruth = std::map<std::string, std::vector<std::string>>;

/// {"image id": ["object", ...]} JSON document.
GroundTruth load_ground_truth(const std::filesystem::path& path);

struct ChairScores {
  std::size_t captions = 0;
  std::size_t sentences = 0, hallucinated_sentences = 0;
  std::size_t mentions = 0, hallucinated_mentions = 0;
  std::size_t truth_objects = 0, covered_objects = 0;
  std::size_t words = 0;
  double chair_s = 0, chair_i = 0, recall = 0, avg_length = 0;
  std::vector<std::string> zero_division;
};

/// Truth comes from `truth` keyed by record image, falling back to the
/// record's inline label. Throws MissingTruth (listing ids) or EmptyInput.
ChairScores chair_scores(const std::vector<BenchmarkRecord>& records, const GroundTruth& truth,
                         const SynonymTable& synonyms);

struct MmeScores {
  std::size_t images = 0, questions = 0;
  std::size_t correct = 0, images_both_correct = 0;
  double accuracy = 0, accuracy_plus = 0, score = 0;
};

/// Throws MalformedSubset when an image does not have exactly two records,
/// EmptyInput when there are none.
MmeScores mme_score(const std::vector<BenchmarkRecord>& records);

// Statistics.

struct Summary {
  std::size_t n = 0;
  double mean = 0, stddev = 0, min = 0, q25 = 0, median = 0, q75 = 0, q90 = 0, max = 0;
};

/// Quantiles by linear interpolation between order statistics. Sample
/// standard deviation (n - 1); zero for n < 2. All zeros when empty.
Summary summarize(std::vector<double> values);
double quantile(std::vector<double> sorted, double q);

struct Histogram {
  double lo = 0, hi = 1;
  std::vector<std::size_t> counts;
  std::size_t outside = 0;

  double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
  /// Normalized so that the bars integrate to one over [lo, hi].
  std::vector<double> density() const;
};

/// Fixed-width bins over [lo, hi]; the upper edge belongs to the last bin.
Histogram histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins);

struct BinnedMean {
  double lo = 0, hi = 0;
  std::size_t n = 0;
  double mean = 0;
};

/// Mean of y over fixed-width bins of x on [lo, hi]. Empty bins have n = 0.
std::vector<BinnedMean> binned_means(const std::vector<std::pair<double, double>>& xy, double lo, double hi,
                                     std::size_t bins);

/// Throws InsufficientData for fewer than two points or a constant coordinate.
double pearson(const std::vector<std::pair<double, double>>& xy);

enum class TokenClass { clean, hallucinatory, unlabeled };
std::string_view to_string(TokenClass c);

using TokenLabeler = std::function<TokenClass(const DecodeTrace&, const StepTrace&)>;

/// Response-level point: similarity of the original and reference image
/// against a hallucination score for the response.
struct ResponsePoint {
  double similarity = 0;
  double score = 0;
};

struct DivergenceStats {
  Summary all;
  std::map<TokenClass, Summary> by_class;
  std::map<TokenClass, Histogram> histograms;
  std::vector<BinnedMean> binned;
  std::optional<double> pearson_rho;
  std::size_t traces = 0;
};

struct DivergenceStatsOptions {
  std::size_t histogram_bins = 20;
  std::size_t similarity_bins = 5;
  /// Bin range for the similarity axis; defaults to the observed range.
  std::optional<std::pair<double, double>> similarity_range;
};

/// Token divergences come from steps with a gating decision. Correlation and
/// binned means are computed only when `points` is non-empty.
DivergenceStats trace_divergence_stats(const std::vector<DecodeTrace>& traces, const TokenLabeler& labeler,
                                       const std::vector<ResponsePoint>& points,
                                       const DivergenceStatsOptions& options = {});

Json summary_to_json(const Summary& s);
Json stats_to_json(const DivergenceStats& stats);

// Reports.

/// Named scalar results of one scoring run, in a fixed order.
struct ScoreSet {
  std::vector<std::pair<std::string, double>> values;
  Json counts = Json::object();
  std::vector<std::string> zero_division;
};

ScoreSet to_score_set(const PopeScores& s);
ScoreSet to_score_set(const ChairScores& s);
ScoreSet to_score_set(const MmeScores& s);

struct MetricValue {
  double mean = 0;
  double stddev = 0;  // sample standard deviation over seeds; 0 for one seed
  std::vector<double> per_seed;
};

struct ReportRow {
  /// Swept parameter and value, empty when not sweeping.
  std::string param;
  std::string value;
  std::vector<std::pair<std::string, MetricValue>> metrics;
  std::vector<Json> counts;  // per seed
  std::vector<std::string> zero_division;
};

/// Mean and spread of per-seed score sets. Throws EmptyInput.
ReportRow aggregate(std::string param, std::string value, const std::vector<ScoreSet>& per_seed);

struct MetricReport {
  std::string benchmark;
  std::string decoder;
  std::string backend;
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<ReportRow> rows;
};

inline constexpr std::string_view kReportSchema = "degf-report/1";

Json report_to_json(const MetricReport& report);
MetricReport report_from_json(const Json& j);
MetricReport read_report(const std::filesystem::path& path);

/// Human-readable aligned table, one line per row.
std::string format_report_table(const MetricReport& report);
/// Side-by-side table of several reports (first row of each, by metric name).
std::string format_comparison(const std::vector<std::pair<std::string, MetricReport>>& reports);

}  // namespace degf
