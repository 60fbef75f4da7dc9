#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "kbprobe/errors.hpp"

namespace kbprobe {

struct chat_message {
  std::string role;  // system | user | assistant
  std::string content;
};

struct chat_request {
  std::string model_id;
  std::vector<chat_message> messages;
  double temperature = 0.7;
  int max_output_tokens = 2048;
};

struct chat_response {
  std::string text;
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  bool usage_estimated = false;
};

struct embedding_batch {
  std::vector<std::string> texts;
  std::vector<std::vector<double>> vectors;
  std::int64_t embedding_tokens = 0;
};

struct retry_policy {
  int max_attempts = 3;
  double backoff_base_seconds = 0.5;
  double backoff_multiplier = 2.0;
};

struct cost_snapshot {
  std::int64_t generation_tokens = 0;
  std::int64_t embedding_tokens = 0;

  std::int64_t total() const { return generation_tokens + embedding_tokens; }
};

// Raw backend results; usage may be absent, the gateway then estimates it.
struct wire_chat {
  std::string text;
  std::optional<std::int64_t> prompt_tokens;
  std::optional<std::int64_t> completion_tokens;
};

struct wire_embeddings {
  std::vector<std::vector<double>> vectors;
  std::optional<std::int64_t> tokens;
};

// One chat/embedding provider. Implementations signal retryable failures
// with transport_error (or a subclass); auth_error and
// malformed_response_error are terminal.
class backend {
 public:
  virtual ~backend() = default;
  virtual wire_chat chat(const chat_request& request) = 0;
  virtual wire_embeddings embed(const std::string& model_id,
                                const std::vector<std::string>& texts) = 0;
};

// Maps a model id to the backend serving it ("sim:" ids go to the simulated
// oracle, everything else to the remote client).
using backend_resolver = std::function<backend&(const std::string& model_id)>;

struct gateway_options {
  int concurrency = 32;  // in-flight call cap, 1..64
  retry_policy retry;
  int embed_batch_limit = 128;
  // Test seam: receives the computed backoff delay. Defaults to a real sleep.
  std::function<void(double seconds)> sleeper;
};

struct recorded_call {
  chat_request request;
  chat_response response;
};

// Front door for all model traffic: routing, retries, the global in-flight
// limit, embedding sub-batching/normalization, and the token cost ledger.
class gateway {
 public:
  gateway(backend_resolver resolver, gateway_options options);

  chat_response chat(const chat_request& request);
  embedding_batch embed(const std::string& model_id,
                        const std::vector<std::string>& texts);

  cost_snapshot cost_ledger() const;

  // When enabled, every successful chat is kept for inspection.
  void set_record_calls(bool on) { record_calls_ = on; }
  std::vector<recorded_call> recorded_calls() const;

  // Wire log hook for --trace; receives one line per request/response pair.
  void set_trace_sink(std::function<void(const std::string&)> sink);

 private:
  class slot_guard;
  void acquire_slot();
  void release_slot();
  template <typename Fn>
  auto with_retries(Fn&& fn) -> decltype(fn());

  backend_resolver resolver_;
  gateway_options options_;
  std::atomic<std::int64_t> generation_tokens_{0};
  std::atomic<std::int64_t> embedding_tokens_{0};
  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int slots_in_use_ = 0;
  std::atomic<bool> record_calls_{false};
  mutable std::mutex record_mutex_;
  std::vector<recorded_call> recorded_;
  std::function<void(const std::string&)> trace_sink_;
  std::mutex trace_mutex_;
};

// Remote client speaking the chat-completions/embeddings HTTP JSON protocol.
class http_backend : public backend {
 public:
  http_backend(std::string base_url, std::string api_key,
               double timeout_seconds = 60.0);
  ~http_backend() override;

  wire_chat chat(const chat_request& request) override;
  wire_embeddings embed(const std::string& model_id,
                        const std::vector<std::string>& texts) override;

 private:
  struct impl;
  std::unique_ptr<impl> impl_;
};

}  // namespace kbprobe
