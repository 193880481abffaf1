// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace degf {

MissingTruth::MissingTruth(std::vector<std::string> ids)
    : Error([&] {
        std::string msg = "no ground truth for " + std::to_string(ids.size()) + " image(s):";
        for (const auto& id : ids) msg += " " + id;
        return msg;
      }()),
      ids_(std::move(ids)) {}

namespace {

double ratio(std::size_t num, std::size_t den, const char* name, std::vector<std::string>& flags) {
  if (den == 0) {
    flags.emplace_back(name);
    return 0.0;
  }
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string join_words(const std::vector<std::string>& words, std::size_t from, std::size_t count) {
  std::string out;
  for (std::size_t i = from; i < from + count; ++i) {
    if (i > from) out += ' ';
    out += words[i];
  }
  return out;
}

std::vector<std::string> singular_forms(const std::string& word) {
  std::vector<std::string> out;
  const auto ends = [&](std::string_view suf) {
    return word.size() > suf.size() + 1 && word.compare(word.size() - suf.size(), suf.size(), suf) == 0;
  };
  if (ends("ies")) out.push_back(word.substr(0, word.size() - 3) + "y");
  if (ends("es")) out.push_back(word.substr(0, word.size() - 2));
  if (ends("s") && !ends("ss")) out.push_back(word.substr(0, word.size() - 1));
  return out;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

Json string_list(const std::vector<std::string>& v) {
  Json a = Json::array();
  for (const auto& s : v) a.push_back(s);
  return a;
}

std::string render_table(const std::vector<std::vector<std::string>>& cells) {
  std::vector<std::size_t> widths;
  for (const auto& row : cells) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], row[c].size());
  }
  std::string out;
  for (const auto& row : cells) {
    std::string line;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) line += "  ";
      line += pad(row[c], widths[c]);
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    out += line + "\n";
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Records

std::string_view to_string(Benchmark b) {
  switch (b) {
    case Benchmark::pope: return "pope";
    case Benchmark::chair: return "chair";
    case Benchmark::mme: return "mme";
  }
  return "?";
}

Benchmark parse_benchmark(std::string_view name) {
  if (name == "pope") return Benchmark::pope;
  if (name == "chair") return Benchmark::chair;
  if (name == "mme") return Benchmark::mme;
  throw ConfigError("unknown benchmark '" + std::string(name) + "' (expected pope, chair or mme)");
}

BenchmarkKind kind_of(Benchmark b) {
  return b == Benchmark::chair ? BenchmarkKind::open_caption : BenchmarkKind::yes_no;
}

void BenchmarkRecord::validate() const {
  if (instance_id.empty()) throw SchemaError("instance_id must be non-empty");
  if (image.empty()) throw SchemaError(instance_id + ": image must be non-empty");
  switch (benchmark) {
    case Benchmark::pope:
    case Benchmark::mme:
      if (!label_yes || label_objects) throw SchemaError(instance_id + ": label must be \"yes\" or \"no\"");
      break;
    case Benchmark::chair:
      if (label_yes) throw SchemaError(instance_id + ": chair label must be a list of objects");
      break;
  }
}

Json record_to_json(const BenchmarkRecord& r) {
  Json j;
  j["schema"] = kBenchSchema;
  j["instance_id"] = r.instance_id;
  j["benchmark"] = to_string(r.benchmark);
  j["image"] = r.image;
  j["question"] = r.question;
  if (r.label_yes) j["label"] = *r.label_yes ? "yes" : "no";
  if (r.label_objects) j["label"] = string_list(*r.label_objects);
  if (r.response) j["response"] = *r.response;
  if (r.similarity) j["similarity"] = *r.similarity;
  if (r.trace) j["trace"] = *r.trace;
  if (!r.judge.is_null()) j["judge"] = r.judge;
  return j;
}

BenchmarkRecord record_from_json(const Json& j) {
  if (!j.is_object()) throw SchemaError("record must be a JSON object");
  const std::string schema = j.value("schema", std::string("<missing>"));
  if (schema != kBenchSchema) {
    throw SchemaError("unsupported schema '" + schema + "' (expected " + std::string(kBenchSchema) + ")");
  }
  BenchmarkRecord r;
  try {
    r.instance_id = j.at("instance_id").get<std::string>();
    try {
      r.benchmark = parse_benchmark(j.at("benchmark").get<std::string>());
    } catch (const ConfigError& e) {
      throw SchemaError(e.what());
    }
    r.image = j.at("image").get<std::string>();
    r.question = j.value("question", std::string());
    if (auto it = j.find("label"); it != j.end() && !it->is_null()) {
      if (it->is_string()) {
        const std::string l = lower(it->get<std::string>());
        if (l != "yes" && l != "no") throw SchemaError("label must be \"yes\" or \"no\", got '" + l + "'");
        r.label_yes = l == "yes";
      } else {
        r.label_objects = it->get<std::vector<std::string>>();
      }
    }
    if (auto it = j.find("response"); it != j.end() && !it->is_null()) r.response = it->get<std::string>();
    if (auto it = j.find("similarity"); it != j.end() && !it->is_null()) r.similarity = it->get<double>();
    if (auto it = j.find("trace"); it != j.end() && !it->is_null()) r.trace = it->get<std::string>();
    if (auto it = j.find("judge"); it != j.end()) r.judge = *it;
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed record: ") + e.what());
  }
  r.validate();
  return r;
}

std::vector<BenchmarkRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::vector<BenchmarkRecord> out;
  std::vector<std::string> problems;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    try {
      out.push_back(record_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      problems.push_back(where + "invalid JSON: " + e.what());
    } catch (const SchemaError& e) {
      problems.push_back(where + e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " invalid record line(s)";
    for (const auto& p : problems) msg += "\n  " + p;
    throw SchemaError(msg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// POPE

std::optional<bool> parse_yes_no(std::string_view response) {
  std::size_t i = 0;
  while (i < response.size() && !std::isalpha(static_cast<unsigned char>(response[i]))) ++i;
  std::size_t j = i;
  while (j < response.size() && std::isalpha(static_cast<unsigned char>(response[j]))) ++j;
  const std::string word = lower(response.substr(i, j - i));
  if (word == "yes") return true;
  if (word == "no") return false;
  return std::nullopt;
}

PopeScores pope_scores(const std::vector<BenchmarkRecord>& records) {
  if (records.empty()) throw EmptyInput("pope_scores: no records");
  PopeScores s;
  for (const auto& r : records) {
    if (!r.label_yes) throw SchemaError(r.instance_id + ": pope record without yes/no label");
    const auto parsed = parse_yes_no(r.response.value_or(""));
    if (!parsed) ++s.unparsed;
    const bool pred = parsed.value_or(false);
    const bool truth = *r.label_yes;
    if (pred && truth) ++s.tp;
    else if (pred && !truth) ++s.fp;
    else if (!pred && truth) ++s.fn;
    else ++s.tn;
  }
  s.accuracy = ratio(s.tp + s.tn, records.size(), "accuracy", s.zero_division);
  s.precision = ratio(s.tp, s.tp + s.fp, "precision", s.zero_division);
  s.recall = ratio(s.tp, s.tp + s.fn, "recall", s.zero_division);
  if (s.precision + s.recall > 0) {
    s.f1 = 2 * s.precision * s.recall / (s.precision + s.recall);
  } else {
    s.f1 = 0.0;
    s.zero_division.emplace_back("f1");
  }
  return s;
}

// ---------------------------------------------------------------------------
// CHAIR

SynonymTable SynonymTable::parse(std::string_view tsv) {
  SynonymTable t;
  std::istringstream in{std::string(tsv)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    const auto tab = s.find('\t');
    if (tab == std::string::npos) {
      throw ConfigError("synonym table line " + std::to_string(lineno) + ": expected surface<TAB>class");
    }
    t.add(trim(s.substr(0, tab)), trim(s.substr(tab + 1)));
  }
  return t;
}

SynonymTable SynonymTable::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open synonym table " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void SynonymTable::add(std::string_view surface, std::string_view canonical) {
  const auto words = split_words(surface);
  const std::string canon = join_words(split_words(canonical), 0, split_words(canonical).size());
  if (words.empty() || canon.empty()) throw ConfigError("empty synonym entry");
  map_[join_words(words, 0, words.size())] = canon;
  map_.try_emplace(canon, canon);
  max_words_ = std::max({max_words_, words.size(), split_words(canon).size()});
}

std::optional<std::string> SynonymTable::lookup(std::string_view phrase) const {
  if (auto it = map_.find(phrase); it != map_.end()) return it->second;
  const std::string p(phrase);
  const auto space = p.rfind(' ');
  const std::string head = space == std::string::npos ? std::string() : p.substr(0, space + 1);
  const std::string last = space == std::string::npos ? p : p.substr(space + 1);
  for (const auto& s : singular_forms(last)) {
    if (auto it = map_.find(head + s); it != map_.end()) return it->second;
  }
  return std::nullopt;
}

std::vector<SynonymTable::Mention> SynonymTable::mentions(const std::vector<std::string>& words) const {
  std::vector<Mention> out;
  std::size_t i = 0;
  while (i < words.size()) {
    std::size_t matched = 0;
    for (std::size_t len = std::min(max_words_, words.size() - i); len >= 1; --len) {
      if (auto canon = lookup(join_words(words, i, len))) {
        out.push_back({*canon, i});
        matched = len;
        break;
      }
    }
    i += matched == 0 ? 1 : matched;
  }
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur += static_cast<char>(std::tolower(u));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  const auto flush = [&](std::size_t end) {
    const auto seg = text.substr(start, end - start);
    if (!split_words(seg).empty()) out.push_back(trim(seg));
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    const bool boundary = i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1]));
    if (!boundary) continue;
    flush(i + 1);
    start = i + 1;
  }
  if (start < text.size()) flush(text.size());
  return out;
}

GroundTruth load_ground_truth(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open ground truth " + path.string());
  try {
    const Json j = Json::parse(in);
    GroundTruth gt;
    for (const auto& [k, v] : j.items()) gt[k] = v.get<std::vector<std::string>>();
    return gt;
  } catch (const Json::exception& e) {
    throw ConfigError("ground truth " + path.string() + ": " + e.what());
  }
}

ChairScores chair_scores(const std::vector<BenchmarkRecord>& records, const GroundTruth& truth,
                         const SynonymTable& synonyms) {
  if (records.empty()) throw EmptyInput("chair_scores: no records");
  std::vector<std::string> missing;
  for (const auto& r : records) {
    if (!truth.count(r.image) && !r.label_objects) missing.push_back(r.image);
  }
  if (!missing.empty()) {
    std::sort(missing.begin(), missing.end());
    missing.erase(std::unique(missing.begin(), missing.end()), missing.end());
    throw MissingTruth(std::move(missing));
  }

  ChairScores s;
  for (const auto& r : records) {
    const auto it = truth.find(r.image);
    const auto& raw = it != truth.end() ? it->second : *r.label_objects;
    std::set<std::string> gt;
    for (const auto& obj : raw) {
      const auto words = split_words(obj);
      const std::string phrase = join_words(words, 0, words.size());
      gt.insert(synonyms.lookup(phrase).value_or(phrase));
    }

    const std::string text = r.response.value_or("");
    std::set<std::string> mentioned;
    for (const auto& sentence : split_sentences(text)) {
      bool hallucinated = false;
      for (const auto& m : synonyms.mentions(split_words(sentence))) {
        ++s.mentions;
        mentioned.insert(m.canonical);
        if (!gt.count(m.canonical)) {
          ++s.hallucinated_mentions;
          hallucinated = true;
        }
      }
      ++s.sentences;
      if (hallucinated) ++s.hallucinated_sentences;
    }
    s.truth_objects += gt.size();
    for (const auto& obj : gt) s.covered_objects += mentioned.count(obj);
    s.words += split_words(text).size();
    ++s.captions;
  }
  s.chair_i = ratio(s.hallucinated_mentions, s.mentions, "chair_i", s.zero_division);
  s.chair_s = ratio(s.hallucinated_sentences, s.sentences, "chair_s", s.zero_division);
  s.recall = ratio(s.covered_objects, s.truth_objects, "recall", s.zero_division);
  s.avg_length = static_cast<double>(s.words) / static_cast<double>(s.captions);
  return s;
}

// ---------------------------------------------------------------------------
// MME

MmeScores mme_score(const std::vector<BenchmarkRecord>& records) {
  if (records.empty()) throw EmptyInput("mme_score: no records");
  std::map<std::string, std::vector<const BenchmarkRecord*>> by_image;
  for (const auto& r : records) by_image[r.image].push_back(&r);
  std::vector<std::string> bad;
  for (const auto& [img, recs] : by_image) {
    if (recs.size() != 2) bad.push_back(img + " (" + std::to_string(recs.size()) + ")");
  }
  if (!bad.empty()) {
    std::string msg = "mme_score: every image needs exactly two questions; offending:";
    for (const auto& b : bad) msg += " " + b;
    throw MalformedSubset(msg);
  }
  MmeScores s;
  for (const auto& [img, recs] : by_image) {
    std::size_t ok = 0;
    for (const auto* r : recs) {
      if (!r->label_yes) throw SchemaError(r->instance_id + ": mme record without yes/no label");
      if (parse_yes_no(r->response.value_or("")).value_or(false) == *r->label_yes) ++ok;
    }
    s.correct += ok;
    if (ok == 2) ++s.images_both_correct;
  }
  s.images = by_image.size();
  s.questions = records.size();
  s.accuracy = static_cast<double>(s.correct) / static_cast<double>(s.questions);
  s.accuracy_plus = static_cast<double>(s.images_both_correct) / static_cast<double>(s.images);
  s.score = 100.0 * s.accuracy + 100.0 * s.accuracy_plus;
  return s;
}

// ---------------------------------------------------------------------------
// Statistics

double quantile(std::vector<double> sorted, double q) {
  if (sorted.empty()) throw EmptyInput("quantile of empty sample");
  if (!std::is_sorted(sorted.begin(), sorted.end())) std::sort(sorted.begin(), sorted.end());
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

Summary summarize(std::vector<double> values) {
  Summary s;
  s.n = values.size();
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  long double sum = 0;
  for (double v : values) sum += v;
  const long double mean = sum / static_cast<long double>(values.size());
  long double ss = 0;
  for (double v : values) ss += (v - mean) * (v - mean);
  s.mean = static_cast<double>(mean);
  s.stddev = values.size() > 1 ? static_cast<double>(std::sqrt(ss / static_cast<long double>(values.size() - 1))) : 0;
  s.min = values.front();
  s.max = values.back();
  s.q25 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q75 = quantile(values, 0.75);
  s.q90 = quantile(values, 0.9);
  return s;
}

std::vector<double> Histogram::density() const {
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::vector<double> out(counts.size(), 0.0);
  if (total == 0) return out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out[i] = static_cast<double>(counts[i]) / (static_cast<double>(total) * width());
  }
  return out;
}

Histogram histogram(const std::vector<double>& values, double lo, double hi, std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw ConfigError("histogram needs bins > 0 and hi > lo");
  Histogram h;
  h.lo = lo;
  h.hi = hi;
  h.counts.assign(bins, 0);
  for (double v : values) {
    if (!(v >= lo && v <= hi)) {
      ++h.outside;
      continue;
    }
    auto i = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    ++h.counts[std::min(i, bins - 1)];
  }
  return h;
}

std::vector<BinnedMean> binned_means(const std::vector<std::pair<double, double>>& xy, double lo, double hi,
                                     std::size_t bins) {
  if (bins == 0 || !(hi > lo)) throw ConfigError("binned_means needs bins > 0 and hi > lo");
  std::vector<BinnedMean> out(bins);
  std::vector<long double> sums(bins, 0);
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lo = lo + w * static_cast<double>(i);
    out[i].hi = i + 1 == bins ? hi : lo + w * static_cast<double>(i + 1);
  }
  for (const auto& [x, y] : xy) {
    if (!(x >= lo && x <= hi)) continue;
    auto i = std::min(static_cast<std::size_t>((x - lo) / (hi - lo) * static_cast<double>(bins)), bins - 1);
    ++out[i].n;
    sums[i] += y;
  }
  for (std::size_t i = 0; i < bins; ++i) {
    if (out[i].n > 0) out[i].mean = static_cast<double>(sums[i] / static_cast<long double>(out[i].n));
  }
  return out;
}

double pearson(const std::vector<std::pair<double, double>>& xy) {
  if (xy.size() < 2) throw InsufficientData("correlation needs at least 2 points, got " + std::to_string(xy.size()));
  const auto [xmin, xmax] = std::minmax_element(xy.begin(), xy.end(), [](auto& a, auto& b) { return a.first < b.first; });
  const auto [ymin, ymax] =
      std::minmax_element(xy.begin(), xy.end(), [](auto& a, auto& b) { return a.second < b.second; });
  if (xmin->first == xmax->first || ymin->second == ymax->second) {
    throw InsufficientData("correlation undefined for a constant coordinate");
  }
  long double mx = 0, my = 0;
  for (const auto& [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<long double>(xy.size());
  my /= static_cast<long double>(xy.size());
  long double sxx = 0, syy = 0, sxy = 0;
  for (const auto& [x, y] : xy) {
    const long double dx = x - mx, dy = y - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  const double r = static_cast<double>(sxy / std::sqrt(sxx * syy));
  return std::clamp(r, -1.0, 1.0);
}

std::string_view to_string(TokenClass c) {
  switch (c) {
    case TokenClass::clean: return "clean";
    case TokenClass::hallucinatory: return "hallucinatory";
    case TokenClass::unlabeled: return "unlabeled";
  }
  return "?";
}

DivergenceStats trace_divergence_stats(const std::vector<DecodeTrace>& traces, const TokenLabeler& labeler,
                                       const std::vector<ResponsePoint>& points,
                                       const DivergenceStatsOptions& options) {
  DivergenceStats out;
  out.traces = traces.size();
  std::vector<double> all;
  std::map<TokenClass, std::vector<double>> by_class{{TokenClass::clean, {}}, {TokenClass::hallucinatory, {}}};
  for (const auto& tr : traces) {
    for (const auto& st : tr.steps) {
      if (st.branch == Branch::not_applicable) continue;
      all.push_back(st.distance);
      by_class[labeler ? labeler(tr, st) : TokenClass::unlabeled].push_back(st.distance);
    }
  }
  out.all = summarize(all);
  for (const auto& [cls, values] : by_class) {
    out.by_class[cls] = summarize(values);
    out.histograms[cls] = histogram(values, 0.0, 1.0, options.histogram_bins);
  }

  if (!points.empty()) {
    std::vector<std::pair<double, double>> xy;
    xy.reserve(points.size());
    for (const auto& p : points) xy.emplace_back(p.similarity, p.score);
    out.pearson_rho = pearson(xy);
    double lo, hi;
    if (options.similarity_range) {
      std::tie(lo, hi) = *options.similarity_range;
    } else {
      const auto [mn, mx] =
          std::minmax_element(xy.begin(), xy.end(), [](auto& a, auto& b) { return a.first < b.first; });
      lo = mn->first;
      hi = mx->first;
    }
    out.binned = binned_means(xy, lo, hi, options.similarity_bins);
  }
  return out;
}

Json summary_to_json(const Summary& s) {
  return Json{{"n", s.n},        {"mean", s.mean},     {"std", s.stddev}, {"min", s.min},  {"q25", s.q25},
              {"median", s.median}, {"q75", s.q75}, {"q90", s.q90},     {"max", s.max}};
}

Json stats_to_json(const DivergenceStats& stats) {
  Json j;
  j["traces"] = stats.traces;
  j["all"] = summary_to_json(stats.all);
  Json classes = Json::object();
  for (const auto& [cls, s] : stats.by_class) classes[std::string(to_string(cls))] = summary_to_json(s);
  j["by_class"] = std::move(classes);
  Json hists = Json::object();
  for (const auto& [cls, h] : stats.histograms) {
    hists[std::string(to_string(cls))] = {{"lo", h.lo}, {"hi", h.hi}, {"counts", h.counts}, {"density", h.density()}};
  }
  j["histograms"] = std::move(hists);
  Json bins = Json::array();
  for (const auto& b : stats.binned) bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"n", b.n}, {"mean", b.mean}});
  j["binned_means"] = std::move(bins);
  j["pearson_rho"] = stats.pearson_rho ? Json(*stats.pearson_rho) : Json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Reports

ScoreSet to_score_set(const PopeScores& s) {
  ScoreSet out;
  out.values = {{"accuracy", s.accuracy}, {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
  out.counts = {{"tp", s.tp}, {"fp", s.fp}, {"fn", s.fn}, {"tn", s.tn}, {"unparsed", s.unparsed}};
  out.zero_division = s.zero_division;
  return out;
}

ScoreSet to_score_set(const ChairScores& s) {
  ScoreSet out;
  out.values = {{"chair_s", s.chair_s}, {"chair_i", s.chair_i}, {"recall", s.recall}, {"avg_length", s.avg_length}};
  out.counts = {{"captions", s.captions},
                {"sentences", s.sentences},
                {"hallucinated_sentences", s.hallucinated_sentences},
                {"mentions", s.mentions},
                {"hallucinated_mentions", s.hallucinated_mentions},
                {"truth_objects", s.truth_objects},
                {"covered_objects", s.covered_objects},
                {"words", s.words}};
  out.zero_division = s.zero_division;
  return out;
}

ScoreSet to_score_set(const MmeScores& s) {
  ScoreSet out;
  out.values = {{"score", s.score}, {"accuracy", s.accuracy}, {"accuracy_plus", s.accuracy_plus}};
  out.counts = {{"images", s.images},
                {"questions", s.questions},
                {"correct", s.correct},
                {"images_both_correct", s.images_both_correct}};
  return out;
}

ReportRow aggregate(std::string param, std::string value, const std::vector<ScoreSet>& per_seed) {
  if (per_seed.empty()) throw EmptyInput("aggregate: no score sets");
  ReportRow row;
  row.param = std::move(param);
  row.value = std::move(value);
  for (std::size_t m = 0; m < per_seed.front().values.size(); ++m) {
    MetricValue mv;
    for (const auto& set : per_seed) mv.per_seed.push_back(set.values.at(m).second);
    const Summary s = summarize(mv.per_seed);
    mv.mean = s.mean;
    mv.stddev = s.stddev;
    row.metrics.emplace_back(per_seed.front().values[m].first, std::move(mv));
  }
  std::set<std::string> flags;
  for (const auto& set : per_seed) {
    row.counts.push_back(set.counts);
    flags.insert(set.zero_division.begin(), set.zero_division.end());
  }
  row.zero_division.assign(flags.begin(), flags.end());
  return row;
}

Json report_to_json(const MetricReport& report) {
  Json j;
  j["schema"] = kReportSchema;
  j["benchmark"] = report.benchmark;
  j["decoder"] = report.decoder;
  j["backend"] = report.backend;
  j["config_hash"] = report.config_hash;
  j["seeds"] = report.seeds;
  Json rows = Json::array();
  for (const auto& r : report.rows) {
    Json row;
    row["param"] = r.param;
    row["value"] = r.value;
    Json metrics = Json::object();
    for (const auto& [name, mv] : r.metrics) {
      metrics[name] = {{"mean", mv.mean}, {"std", mv.stddev}, {"per_seed", mv.per_seed}};
    }
    row["metrics"] = std::move(metrics);
    row["counts"] = r.counts;
    row["zero_division"] = string_list(r.zero_division);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

MetricReport report_from_json(const Json& j) {
  if (!j.is_object() || j.value("schema", std::string()) != kReportSchema) {
    throw SchemaError("not a " + std::string(kReportSchema) + " document");
  }
  MetricReport rep;
  try {
    rep.benchmark = j.at("benchmark").get<std::string>();
    rep.decoder = j.at("decoder").get<std::string>();
    rep.backend = j.value("backend", std::string());
    rep.config_hash = j.value("config_hash", std::string());
    rep.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& r : j.at("rows")) {
      ReportRow row;
      row.param = r.value("param", std::string());
      row.value = r.value("value", std::string());
      for (const auto& [name, mv] : r.at("metrics").items()) {
        row.metrics.emplace_back(name, MetricValue{mv.at("mean").get<double>(), mv.at("std").get<double>(),
                                                   mv.at("per_seed").get<std::vector<double>>()});
      }
      for (const auto& c : r.at("counts")) row.counts.push_back(c);
      row.zero_division = r.value("zero_division", std::vector<std::string>{});
      rep.rows.push_back(std::move(row));
    }
  } catch (const Json::exception& e) {
    throw SchemaError(std::string("malformed report: ") + e.what());
  }
  return rep;
}

MetricReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open report " + path.string());
  try {
    return report_from_json(Json::parse(in));
  } catch (const Json::exception& e) {
    throw SchemaError(path.string() + ": invalid JSON: " + e.what());
  } catch (const SchemaError& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
}

namespace {

std::string cell(const MetricValue& mv, bool spread) {
  std::string s = fmt("%.4f", mv.mean);
  if (spread) s += " ± " + fmt("%.4f", mv.stddev);
  return s;
}

}  // namespace

std::string format_report_table(const MetricReport& report) {
  std::vector<std::vector<std::string>> cells;
  if (report.rows.empty()) return "(empty report)\n";
  const bool spread = report.seeds.size() > 1;
  const bool sweep = !report.rows.front().param.empty();
  std::vector<std::string> header;
  if (sweep) header.push_back(report.rows.front().param);
  for (const auto& [name, mv] : report.rows.front().metrics) header.push_back(name);
  cells.push_back(std::move(header));
  for (const auto& r : report.rows) {
    std::vector<std::string> line;
    if (sweep) line.push_back(r.value);
    for (const auto& [name, mv] : r.metrics) line.push_back(cell(mv, spread));
    cells.push_back(std::move(line));
  }
  std::string out = report.benchmark + " / " + report.decoder;
  if (spread) out += " (mean ± std over " + std::to_string(report.seeds.size()) + " seeds)";
  out += "\n" + render_table(cells);
  for (const auto& r : report.rows) {
    if (r.zero_division.empty()) continue;
    out += "zero-division (reported as 0)" + (sweep ? " at " + r.param + "=" + r.value : std::string()) + ":";
    for (const auto& f : r.zero_division) out += " " + f;
    out += "\n";
  }
  return out;
}

std::string format_comparison(const std::vector<std::pair<std::string, MetricReport>>& reports) {
  std::vector<std::string> metric_names;
  for (const auto& [label, rep] : reports) {
    if (rep.rows.empty()) continue;
    for (const auto& [name, mv] : rep.rows.front().metrics) {
      if (std::find(metric_names.begin(), metric_names.end(), name) == metric_names.end()) {
        metric_names.push_back(name);
      }
    }
  }
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"metric"};
  for (const auto& [label, rep] : reports) header.push_back(label);
  cells.push_back(std::move(header));
  for (const auto& name : metric_names) {
    std::vector<std::string> line{name};
    for (const auto& [label, rep] : reports) {
      std::string v = "-";
      if (!rep.rows.empty()) {
        for (const auto& [n, mv] : rep.rows.front().metrics) {
          if (n == name) v = cell(mv, rep.seeds.size() > 1);
        }
      }
      line.push_back(std::move(v));
    }
    cells.push_back(std::move(line));
  }
  return render_table(cells);
}

}  // namespace degf
