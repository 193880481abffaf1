// Copyright 2026 The degf Authors
// SPDX-License-Identifier: Apache-2.0

#include "degf/http_backend.hpp"

#include <cmath>
#include <random>
#include <regex>
#include <thread>

#include <httplib.h>

namespace degf {
namespace {

class PermitGuard {
 public:
  explicit PermitGuard(CountingSemaphore& sem) : sem_(sem) { sem_.acquire(); }
  ~PermitGuard() { sem_.release(); }
  PermitGuard(const PermitGuard&) = delete;
  PermitGuard& operator=(const PermitGuard&) = delete;

 private:
  CountingSemaphore& sem_;
};

std::chrono::milliseconds jittered(std::chrono::milliseconds delay) {
  thread_local std::mt19937_64 gen{std::random_device{}()};
  std::uniform_real_distribution<double> frac(0.0, 0.25);
  return delay + std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) * frac(gen)));
}

}  // namespace

void CountingSemaphore::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return permits_ > 0; });
  --permits_;
}

void CountingSemaphore::release() {
  {
    std::lock_guard lock(mu_);
    ++permits_;
  }
  cv_.notify_one();
}

void AdapterEndpoint::validate() const {
  static const std::regex url_re(R"(^http://[A-Za-z0-9.\-]+(:[0-9]{1,5})?(/[^\s]*)?$)");
  if (!std::regex_match(base_url, url_re)) {
    throw ConfigError("adapter base_url must look like http://host[:port][/prefix], got '" + base_url + "'");
  }
  if (generate_timeout.count() <= 0 || logits_timeout.count() <= 0) throw ConfigError("timeouts must be positive");
  if (max_retries < 0) throw ConfigError("max_retries must be non-negative");
  if (max_in_flight == 0) throw ConfigError("max_in_flight must be positive");
  if (backoff_base.count() < 0 || backoff_factor < 1.0) throw ConfigError("invalid backoff settings");
}

HttpAdapterClient::HttpAdapterClient(AdapterEndpoint endpoint)
    : endpoint_(std::move(endpoint)), in_flight_(endpoint_.max_in_flight == 0 ? 1 : endpoint_.max_in_flight) {
  endpoint_.validate();
  static const std::regex parts_re(R"(^http://([A-Za-z0-9.\-]+)(?::([0-9]{1,5}))?(/[^\s]*)?$)");
  std::smatch m;
  std::regex_match(endpoint_.base_url, m, parts_re);
  host_ = m[1].str();
  port_ = m[2].matched ? std::stoi(m[2].str()) : 80;
  path_prefix_ = m[3].matched ? m[3].str() : "";
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

std::string HttpAdapterClient::next_request_id() {
  std::lock_guard lock(id_mu_);
  return endpoint_.request_id_prefix + "-" + std::to_string(next_id_++);
}

void HttpAdapterClient::record_transcript(bool on) {
  std::lock_guard lock(transcript_mu_);
  record_ = on;
}

std::vector<TranscriptEntry> HttpAdapterClient::transcript() const {
  std::lock_guard lock(transcript_mu_);
  return transcript_;
}

Json HttpAdapterClient::call(Route route, const std::string& method, const std::string& path, const Json& body,
                             std::chrono::milliseconds timeout) {
  const std::string full_path = path_prefix_ + path;
  const std::string payload = body.is_null() ? std::string() : body.dump();
  std::string last_error = "no attempt made";

  const auto fail = [&](const std::string& why, bool protocol) {
    const std::string msg = method + " " + path + ": " + why;
    if (route == Route::generate) throw GeneratorUnavailable(msg);
    if (protocol) throw ProtocolError(msg);
    throw BackendUnavailable(msg);
  };

  for (int attempt = 0; attempt <= endpoint_.max_retries; ++attempt) {
    if (attempt > 0) {
      const double scale = std::pow(endpoint_.backoff_factor, attempt - 1);
      const auto delay = std::chrono::milliseconds(
          static_cast<long long>(static_cast<double>(endpoint_.backoff_base.count()) * scale));
      std::this_thread::sleep_for(jittered(delay));
    }

    httplib::Result res;
    {
      PermitGuard permit(in_flight_);
      httplib::Client cli(host_, port_);
      cli.set_connection_timeout(timeout);
      cli.set_read_timeout(timeout);
      cli.set_write_timeout(timeout);
      cli.set_keep_alive(false);
      if (method == "GET") {
        res = cli.Get(full_path);
      } else {
        res = cli.Post(full_path, payload, "application/json");
      }
    }

    TranscriptEntry entry{method, path, body, 0, Json()};
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
      entry.response = {{"transport_error", httplib::to_string(res.error())}};
      {
        std::lock_guard lock(transcript_mu_);
        if (record_) transcript_.push_back(std::move(entry));
      }
      continue;
    }

    entry.status = res->status;
    Json parsed;
    bool parsed_ok = true;
    try {
      parsed = Json::parse(res->body);
    } catch (const Json::exception&) {
      parsed_ok = false;
    }
    entry.response = parsed_ok ? parsed : Json(res->body);
    {
      std::lock_guard lock(transcript_mu_);
      if (record_) transcript_.push_back(std::move(entry));
    }

    if (res->status >= 200 && res->status < 300) {
      if (!parsed_ok || !parsed.is_object()) fail("response body is not a JSON object", true);
      return parsed;
    }

    bool retryable = res->status >= 500;
    std::string reason = "HTTP " + std::to_string(res->status);
    if (parsed_ok && parsed.is_object()) {
      if (auto it = parsed.find("retryable"); it != parsed.end() && it->is_boolean()) retryable = it->get<bool>();
      if (auto it = parsed.find("error"); it != parsed.end() && it->is_string()) {
        reason += ": " + it->get<std::string>();
      }
    }
    last_error = reason;
    if (!retryable) fail(reason, res->status < 500);
  }
  fail("giving up after " + std::to_string(endpoint_.max_retries + 1) + " attempts; last error: " + last_error,
       false);
  return Json();  // unreachable
}

AdapterMeta HttpAdapterClient::health_and_meta() {
  const Json j = call(Route::meta, "GET", "/meta", Json(), endpoint_.logits_timeout);
  AdapterMeta meta;
  try {
    const auto vocab = j.at("vocab_size").get<long long>();
    const auto eos = j.at("eos_id").get<long long>();
    if (vocab < 2) throw ProtocolError("/meta: vocab_size must be at least 2");
    if (eos < 0 || eos >= vocab) throw ProtocolError("/meta: eos_id must be < vocab_size");
    meta.vocab_size = static_cast<std::size_t>(vocab);
    meta.eos_id = static_cast<TokenId>(eos);
    meta.model_name = j.at("model_name").get<std::string>();
    meta.generator_name = j.at("generator_name").get<std::string>();
    meta.logit_dtype = j.value("logit_dtype", std::string("f32"));
    meta.deterministic = j.value("deterministic", true);
    if (auto it = j.find("token_text"); it != j.end() && it->is_array() && it->size() == meta.vocab_size) {
      meta.token_text = it->get<std::vector<std::string>>();
    }
  } catch (const Json::exception& e) {
    throw ProtocolError(std::string("/meta: ") + e.what());
  }

  std::lock_guard lock(meta_mu_);
  if (meta_ && (meta_->vocab_size != meta.vocab_size || meta_->model_name != meta.model_name)) {
    throw ProtocolError("adapter changed model mid-session (" + meta_->model_name + ", V=" +
                        std::to_string(meta_->vocab_size) + " -> " + meta.model_name +
                        ", V=" + std::to_string(meta.vocab_size) + ")");
  }
  meta_ = meta;
  meta_time_ = std::chrono::steady_clock::now();
  return meta;
}

void HttpAdapterClient::ensure_fresh_meta() {
  {
    std::lock_guard lock(meta_mu_);
    if (meta_ && std::chrono::steady_clock::now() - meta_time_ <= endpoint_.health_max_age) return;
  }
  health_and_meta();
}

LogitVector HttpAdapterClient::fetch_logits(const std::optional<ImageRef>& image, std::string_view prompt,
                                            std::span<const TokenId> prefix_ids) {
  ensure_fresh_meta();
  std::size_t vocab_size = 0;
  {
    std::lock_guard lock(meta_mu_);
    vocab_size = meta_->vocab_size;
  }

  Json body;
  body["request_id"] = next_request_id();
  body["image_ref"] = image ? Json(*image) : Json(nullptr);
  body["prompt"] = std::string(prompt);
  body["prefix_ids"] = Json(std::vector<TokenId>(prefix_ids.begin(), prefix_ids.end()));

  const Json j = call(Route::logits, "POST", "/logits", body, endpoint_.logits_timeout);
  const auto it = j.find("logits");
  if (it == j.end() || !it->is_array()) throw ProtocolError("/logits: missing logits array");
  if (it->size() != vocab_size) {
    throw ProtocolError("/logits: payload has " + std::to_string(it->size()) + " entries, vocab_size is " +
                        std::to_string(vocab_size));
  }
  std::vector<double> values;
  values.reserve(vocab_size);
  for (const auto& v : *it) {
    if (v.is_number()) {
      const double x = v.get<double>();
      if (!std::isfinite(x)) throw ProtocolError("/logits: non-finite number in payload");
      values.push_back(x);
    } else if (v.is_string() && v.get<std::string>() == "-inf") {
      values.push_back(kMasked);
    } else {
      throw ProtocolError("/logits: entries must be numbers or \"-inf\"");
    }
  }
  try {
    return LogitVector(std::move(values));
  } catch (const Error& e) {
    throw ProtocolError(std::string("/logits: ") + e.what());
  }
}

ImageRef HttpAdapterClient::request_image(std::string_view caption, std::uint64_t seed, int steps) {
  if (caption.empty()) throw ValidationError("txt2img caption must be non-empty");
  if (steps <= 0) throw ValidationError("txt2img steps must be positive");
  Json body;
  body["request_id"] = next_request_id();
  body["caption"] = std::string(caption);
  body["seed"] = seed;
  body["steps"] = steps;
  const Json j = call(Route::generate, "POST", "/txt2img", body, endpoint_.generate_timeout);
  const auto it = j.find("image_ref");
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw ProtocolError("/txt2img: missing image_ref");
  }
  return it->get<std::string>();
}

ImageRef HttpAdapterClient::request_transform(const ImageRef& image, std::string_view kind, int param) {
  Json body;
  body["image_ref"] = image;
  body["kind"] = std::string(kind);
  body["param"] = param;
  const Json j = call(Route::transform, "POST", "/transform", body, endpoint_.generate_timeout);
  const auto it = j.find("image_ref");
  if (it == j.end() || !it->is_string() || it->get<std::string>().empty()) {
    throw ProtocolError("/transform: missing image_ref");
  }
  return it->get<std::string>();
}

LogitVector HttpAdapterClient::logits(const std::optional<ImageRef>& image, std::string_view prompt,
                                      std::span<const TokenId> prefix) {
  return fetch_logits(image, prompt, prefix);
}

Vocabulary HttpAdapterClient::vocabulary() {
  ensure_fresh_meta();
  std::lock_guard lock(meta_mu_);
  Vocabulary v;
  v.size = meta_->vocab_size;
  v.eos_id = meta_->eos_id;
  v.token_text = meta_->token_text;
  return v;
}

ImageRef HttpAdapterClient::transform(const ImageRef& image, int augment) {
  return request_transform(image, "augment", augment);
}

ImageRef HttpAdapterClient::distort(const ImageRef& image, int noise_steps) {
  return request_transform(image, "distort", noise_steps);
}

bool HttpAdapterClient::deterministic() const {
  std::lock_guard lock(meta_mu_);
  return meta_ ? meta_->deterministic : true;
}

ImageRef HttpAdapterClient::generate(std::string_view caption, std::uint64_t seed, int steps) {
  return request_image(caption, seed, steps);
}

std::string transcript_to_jsonl(const std::vector<TranscriptEntry>& entries) {
  std::string out;
  for (const auto& e : entries) {
    Json j;
    j["method"] = e.method;
    j["path"] = e.path;
    j["request"] = e.request;
    j["status"] = e.status;
    j["response"] = e.response;
    out += dump_json(j);
    out += '\n';
  }
  return out;
}

}  // namespace degf
