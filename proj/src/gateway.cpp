#include "kbprobe/gateway.hpp"

#include <chrono>
#include <cmath>
#include <thread>

#include <json.hpp>

#include "kbprobe/util.hpp"

namespace kbprobe {

namespace {

void validate_request(const chat_request& request) {
  if (request.model_id.empty())
    throw precondition_error("chat request needs a model id");
  if (request.messages.empty())
    throw precondition_error("chat request needs at least one message");
  for (const chat_message& m : request.messages) {
    if (m.role != "system" && m.role != "user" && m.role != "assistant")
      throw precondition_error("invalid message role: " + m.role);
  }
  if (request.temperature < 0.0)
    throw precondition_error("temperature must be nonnegative");
  if (request.max_output_tokens < 1)
    throw precondition_error("max_output_tokens must be positive");
}

}  // namespace

gateway::gateway(backend_resolver resolver, gateway_options options)
    : resolver_(std::move(resolver)), options_(std::move(options)) {
  if (options_.concurrency < 1 || options_.concurrency > 64)
    throw config_error("gateway concurrency must be within 1..64");
  if (options_.retry.max_attempts < 1)
    throw config_error("retry max_attempts must be at least 1");
  if (options_.embed_batch_limit < 1)
    throw config_error("embed batch limit must be positive");
  if (!options_.sleeper) {
    options_.sleeper = [](double seconds) {
      std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    };
  }
}

void gateway::acquire_slot() {
  std::unique_lock<std::mutex> lock(slot_mutex_);
  slot_cv_.wait(lock, [&] { return slots_in_use_ < options_.concurrency; });
  ++slots_in_use_;
}

void gateway::release_slot() {
  {
    std::lock_guard<std::mutex> lock(slot_mutex_);
    --slots_in_use_;
  }
  slot_cv_.notify_one();
}

class gateway::slot_guard {
 public:
  explicit slot_guard(gateway& g) : g_(g) { g_.acquire_slot(); }
  ~slot_guard() { g_.release_slot(); }
  slot_guard(const slot_guard&) = delete;
  slot_guard& operator=(const slot_guard&) = delete;

 private:
  gateway& g_;
};

template <typename Fn>
auto gateway::with_retries(Fn&& fn) -> decltype(fn()) {
  double delay = options_.retry.backoff_base_seconds;
  for (int attempt = 1;; ++attempt) {
    try {
      return fn();
    } catch (const transport_error&) {
      if (attempt >= options_.retry.max_attempts) throw;
      options_.sleeper(delay);
      delay *= options_.retry.backoff_multiplier;
    }
  }
}

chat_response gateway::chat(const chat_request& request) {
  validate_request(request);
  slot_guard guard(*this);
  backend& b = resolver_(request.model_id);
  const wire_chat wire = with_retries([&] { return b.chat(request); });

  chat_response response;
  response.text = wire.text;
  if (wire.prompt_tokens && wire.completion_tokens) {
    response.prompt_tokens = *wire.prompt_tokens;
    response.completion_tokens = *wire.completion_tokens;
  } else {
    std::size_t prompt_chars = 0;
    for (const chat_message& m : request.messages)
      prompt_chars += m.content.size();
    response.prompt_tokens = wire.prompt_tokens.value_or(
        static_cast<std::int64_t>((prompt_chars + 3) / 4));
    response.completion_tokens =
        wire.completion_tokens.value_or(estimate_tokens(wire.text));
    response.usage_estimated = true;
  }
  if (response.prompt_tokens < 0 || response.completion_tokens < 0)
    throw malformed_response_error("negative token usage reported");
  generation_tokens_.fetch_add(
      response.prompt_tokens + response.completion_tokens,
      std::memory_order_relaxed);

  if (record_calls_.load(std::memory_order_relaxed)) {
    std::lock_guard<std::mutex> lock(record_mutex_);
    recorded_.push_back({request, response});
  }
  {
    std::lock_guard<std::mutex> lock(trace_mutex_);
    if (trace_sink_) {
      nlohmann::json line;
      line["call"] = "chat";
      line["model_id"] = request.model_id;
      line["prompt"] = request.messages.back().content;
      line["response"] = response.text;
      line["prompt_tokens"] = response.prompt_tokens;
      line["completion_tokens"] = response.completion_tokens;
      trace_sink_(line.dump());
    }
  }
  return response;
}

embedding_batch gateway::embed(const std::string& model_id,
                               const std::vector<std::string>& texts) {
  if (texts.empty()) throw precondition_error("embed needs at least one text");
  for (const std::string& t : texts)
    if (t.empty()) throw precondition_error("embed texts must be non-empty");

  embedding_batch out;
  out.texts = texts;
  out.vectors.reserve(texts.size());
  std::size_t dimension = 0;

  backend& b = resolver_(model_id);
  const std::size_t limit = static_cast<std::size_t>(options_.embed_batch_limit);
  for (std::size_t start = 0; start < texts.size(); start += limit) {
    const std::size_t count = std::min(limit, texts.size() - start);
    std::vector<std::string> chunk(texts.begin() + start,
                                   texts.begin() + start + count);
    slot_guard guard(*this);
    const wire_embeddings wire =
        with_retries([&] { return b.embed(model_id, chunk); });
    if (wire.vectors.size() != chunk.size())
      throw malformed_response_error("embedding count mismatch");
    std::int64_t chunk_tokens = 0;
    if (wire.tokens) {
      chunk_tokens = *wire.tokens;
    } else {
      for (const std::string& t : chunk) chunk_tokens += estimate_tokens(t);
    }
    for (const std::vector<double>& v : wire.vectors) {
      if (dimension == 0) dimension = v.size();
      if (v.empty() || v.size() != dimension)
        throw dimension_mismatch_error("inconsistent embedding dimensions");
      double norm_sq = 0.0;
      for (double x : v) norm_sq += x * x;
      if (!(norm_sq > 0.0))
        throw malformed_response_error("zero-norm embedding returned");
      const double inv = 1.0 / std::sqrt(norm_sq);
      std::vector<double> unit(v.size());
      for (std::size_t i = 0; i < v.size(); ++i) unit[i] = v[i] * inv;
      out.vectors.push_back(std::move(unit));
    }
    out.embedding_tokens += chunk_tokens;
  }
  embedding_tokens_.fetch_add(out.embedding_tokens, std::memory_order_relaxed);
  {
    std::lock_guard<std::mutex> lock(trace_mutex_);
    if (trace_sink_) {
      nlohmann::json line;
      line["call"] = "embed";
      line["model_id"] = model_id;
      line["texts"] = texts.size();
      line["tokens"] = out.embedding_tokens;
      trace_sink_(line.dump());
    }
  }
  return out;
}

cost_snapshot gateway::cost_ledger() const {
  cost_snapshot s;
  s.generation_tokens = generation_tokens_.load(std::memory_order_relaxed);
  s.embedding_tokens = embedding_tokens_.load(std::memory_order_relaxed);
  return s;
}

std::vector<recorded_call> gateway::recorded_calls() const {
  std::lock_guard<std::mutex> lock(record_mutex_);
  return recorded_;
}

void gateway::set_trace_sink(std::function<void(const std::string&)> sink) {
  std::lock_guard<std::mutex> lock(trace_mutex_);
  trace_sink_ = std::move(sink);
}

}  // namespace kbprobe
