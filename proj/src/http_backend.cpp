#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS 0
#include <httplib.h>

#include "kbprobe/gateway.hpp"
#include "kbprobe/util.hpp"

namespace kbprobe {

using nlohmann::json;

struct http_backend::impl {
  std::string base_url;
  std::string api_key;
  double timeout_seconds;
  std::unique_ptr<httplib::Client> client;
  std::mutex mutex;  // httplib::Client is not thread-safe
};

http_backend::http_backend(std::string base_url, std::string api_key,
                           double timeout_seconds)
    : impl_(std::make_unique<impl>()) {
  impl_->base_url = std::move(base_url);
  impl_->api_key = std::move(api_key);
  impl_->timeout_seconds = timeout_seconds;
  impl_->client = std::make_unique<httplib::Client>(impl_->base_url);
  const auto whole = static_cast<time_t>(timeout_seconds);
  const auto micros =
      static_cast<time_t>((timeout_seconds - static_cast<double>(whole)) * 1e6);
  impl_->client->set_connection_timeout(whole, micros);
  impl_->client->set_read_timeout(whole, micros);
  impl_->client->set_write_timeout(whole, micros);
}

http_backend::~http_backend() = default;

namespace {

httplib::Headers auth_headers(const std::string& api_key) {
  httplib::Headers headers;
  if (!api_key.empty())
    headers.emplace("Authorization", "Bearer " + api_key);
  return headers;
}

// Converts an HTTP outcome into the library error taxonomy.
void raise_for_status(const httplib::Result& res, const char* endpoint) {
  if (!res) {
    throw transport_error(std::string("request to ") + endpoint +
                          " failed: " + httplib::to_string(res.error()));
  }
  const int status = res->status;
  if (status == 401 || status == 403)
    throw auth_error("authentication rejected by " + std::string(endpoint));
  if (status == 429)
    throw rate_limit_error("rate limited by " + std::string(endpoint));
  if (status >= 500)
    throw server_error("server error " + std::to_string(status) + " from " +
                       endpoint);
  if (status == 408)
    throw transport_error("request timeout from " + std::string(endpoint));
  if (status != 200)
    throw malformed_response_error("unexpected status " +
                                   std::to_string(status) + " from " +
                                   endpoint);
}

json parse_body(const std::string& body, const char* endpoint) {
  json parsed = json::parse(body, nullptr, false);
  if (parsed.is_discarded())
    throw malformed_response_error(std::string("invalid JSON from ") +
                                   endpoint);
  return parsed;
}

}  // namespace

wire_chat http_backend::chat(const chat_request& request) {
  json body;
  body["model"] = request.model_id;
  json messages = json::array();
  for (const chat_message& m : request.messages) {
    json msg;
    msg["role"] = m.role;
    msg["content"] = m.content;
    messages.push_back(msg);
  }
  body["messages"] = messages;
  body["temperature"] = request.temperature;
  body["max_tokens"] = request.max_output_tokens;

  httplib::Result res;
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    res = impl_->client->Post("/v1/chat/completions",
                              auth_headers(impl_->api_key), body.dump(),
                              "application/json");
  }
  raise_for_status(res, "/v1/chat/completions");
  const json parsed = parse_body(res->body, "/v1/chat/completions");

  wire_chat out;
  try {
    const json& choices = parsed.at("choices");
    if (!choices.is_array() || choices.empty())
      throw malformed_response_error("chat response has no choices");
    out.text = choices.at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw malformed_response_error("chat response missing message content");
  }
  if (parsed.contains("usage") && parsed["usage"].is_object()) {
    const json& usage = parsed["usage"];
    if (usage.contains("prompt_tokens"))
      out.prompt_tokens = usage["prompt_tokens"].get<std::int64_t>();
    if (usage.contains("completion_tokens"))
      out.completion_tokens = usage["completion_tokens"].get<std::int64_t>();
  }
  return out;
}

wire_embeddings http_backend::embed(const std::string& model_id,
                                    const std::vector<std::string>& texts) {
  json body;
  body["model"] = model_id;
  body["input"] = texts;

  httplib::Result res;
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    res = impl_->client->Post("/v1/embeddings", auth_headers(impl_->api_key),
                              body.dump(), "application/json");
  }
  raise_for_status(res, "/v1/embeddings");
  const json parsed = parse_body(res->body, "/v1/embeddings");

  wire_embeddings out;
  try {
    const json& data = parsed.at("data");
    if (!data.is_array())
      throw malformed_response_error("embeddings response has no data array");
    out.vectors.resize(data.size());
    for (const json& item : data) {
      const std::size_t index = item.at("index").get<std::size_t>();
      if (index >= out.vectors.size())
        throw malformed_response_error("embedding index out of range");
      out.vectors[index] = item.at("embedding").get<std::vector<double>>();
    }
  } catch (const json::exception&) {
    throw malformed_response_error("embeddings response malformed");
  }
  if (parsed.contains("usage") && parsed["usage"].is_object() &&
      parsed["usage"].contains("total_tokens"))
    out.tokens = parsed["usage"]["total_tokens"].get<std::int64_t>();
  return out;
}

}  // namespace kbprobe
