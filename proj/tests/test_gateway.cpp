#include <doctest.h>

#include <atomic>
#include <chrono>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "kbprobe/gateway.hpp"
#include "support/scripted_backend.hpp"

using namespace kbprobe;
namespace kt = kbprobe::testing;
using nlohmann::json;

namespace {

chat_request simple_request(std::string prompt = "ping") {
  chat_request r;
  r.model_id = "scripted:m";
  r.messages = {{"user", std::move(prompt)}};
  return r;
}

}  // namespace

TEST_SUITE("gateway") {

TEST_CASE("request validation") {
  kt::scripted_backend backend;
  gateway gw(kt::resolver_for(backend), kt::fast_options());

  chat_request r = simple_request();
  r.model_id = "";
  CHECK_THROWS_AS(gw.chat(r), precondition_error);

  r = simple_request();
  r.messages.clear();
  CHECK_THROWS_AS(gw.chat(r), precondition_error);

  r = simple_request();
  r.messages[0].role = "robot";
  CHECK_THROWS_AS(gw.chat(r), precondition_error);

  r = simple_request();
  r.temperature = -0.5;
  CHECK_THROWS_AS(gw.chat(r), precondition_error);

  r = simple_request();
  r.max_output_tokens = 0;
  CHECK_THROWS_AS(gw.chat(r), precondition_error);

  CHECK_THROWS_AS(gw.embed("scripted:m", {}), precondition_error);
  CHECK_THROWS_AS(gw.embed("scripted:m", {"ok", ""}), precondition_error);
}

TEST_CASE("options validation") {
  kt::scripted_backend backend;
  auto opts = kt::fast_options();
  opts.concurrency = 0;
  CHECK_THROWS_AS(gateway(kt::resolver_for(backend), opts), config_error);
  opts = kt::fast_options();
  opts.concurrency = 65;
  CHECK_THROWS_AS(gateway(kt::resolver_for(backend), opts), config_error);
  opts = kt::fast_options();
  opts.retry.max_attempts = 0;
  CHECK_THROWS_AS(gateway(kt::resolver_for(backend), opts), config_error);
  opts = kt::fast_options();
  opts.embed_batch_limit = 0;
  CHECK_THROWS_AS(gateway(kt::resolver_for(backend), opts), config_error);
}

TEST_CASE("token usage passthrough and estimation") {
  kt::scripted_backend backend;
  gateway gw(kt::resolver_for(backend), kt::fast_options());

  backend.push_reply(wire_chat{"reported", 11, 4});
  auto reported = gw.chat(simple_request());
  CHECK(reported.prompt_tokens == 11);
  CHECK(reported.completion_tokens == 4);
  CHECK_FALSE(reported.usage_estimated);
  CHECK(gw.cost_ledger().generation_tokens == 15);

  // No usage on the wire: ceil(chars / 4) on both sides.
  backend.push_text("123456789");  // 9 chars -> 3 tokens
  auto estimated = gw.chat(simple_request("12345"));  // 5 chars -> 2 tokens
  CHECK(estimated.usage_estimated);
  CHECK(estimated.prompt_tokens == 2);
  CHECK(estimated.completion_tokens == 3);
  CHECK(gw.cost_ledger().generation_tokens == 20);

  backend.push_reply(wire_chat{"x", -1, 2});
  CHECK_THROWS_AS(gw.chat(simple_request()), malformed_response_error);
}

TEST_CASE("transport errors retry with exponential backoff") {
  kt::scripted_backend backend;
  auto opts = kt::fast_options();
  opts.retry.max_attempts = 3;
  opts.retry.backoff_base_seconds = 0.25;
  opts.retry.backoff_multiplier = 2.0;
  std::vector<double> delays;
  opts.sleeper = [&](double s) { delays.push_back(s); };
  gateway gw(kt::resolver_for(backend), opts);

  backend.push_throw([] { throw transport_error("down"); });
  backend.push_throw([] { throw rate_limit_error("429"); });
  backend.push_text("recovered");

  CHECK(gw.chat(simple_request()).text == "recovered");
  CHECK(backend.requests().size() == 3);
  CHECK(delays == std::vector<double>{0.25, 0.5});

  // Exhaustion rethrows the last failure.
  backend.push_throw([] { throw transport_error("a"); });
  backend.push_throw([] { throw transport_error("b"); });
  backend.push_throw([] { throw transport_error("c"); });
  CHECK_THROWS_AS(gw.chat(simple_request()), transport_error);
  CHECK(backend.requests().size() == 6);
}

TEST_CASE("terminal errors are not retried") {
  kt::scripted_backend backend;
  gateway gw(kt::resolver_for(backend), kt::fast_options());

  backend.push_throw([] { throw auth_error("nope"); });
  CHECK_THROWS_AS(gw.chat(simple_request()), auth_error);
  CHECK(backend.requests().size() == 1);

  backend.push_throw([] { throw malformed_response_error("junk"); });
  CHECK_THROWS_AS(gw.chat(simple_request()), malformed_response_error);
  CHECK(backend.requests().size() == 2);
}

TEST_CASE("usage is charged only on success") {
  kt::scripted_backend backend;
  auto opts = kt::fast_options();
  opts.retry.max_attempts = 2;
  gateway gw(kt::resolver_for(backend), opts);

  backend.push_throw([] { throw transport_error("x"); });
  backend.push_throw([] { throw transport_error("y"); });
  CHECK_THROWS_AS(gw.chat(simple_request()), transport_error);
  CHECK(gw.cost_ledger().generation_tokens == 0);
  CHECK(gw.cost_ledger().embedding_tokens == 0);
  CHECK(gw.cost_ledger().total() == 0);
}

TEST_CASE("embedding batches split at the limit and normalize") {
  kt::scripted_backend backend;
  auto opts = kt::fast_options();
  opts.embed_batch_limit = 2;
  gateway gw(kt::resolver_for(backend), opts);

  backend.pin_embedding("a", {3.0, 4.0});  // norm 5
  backend.pin_embedding("b", {0.0, 2.0});
  backend.pin_embedding("c", {1.0, 0.0});
  backend.pin_embedding("dddd", {0.0, -1.0});
  backend.pin_embedding("e", {5.0, 0.0});

  auto batch = gw.embed("scripted:m", {"a", "b", "c", "dddd", "e"});
  auto calls = backend.embed_calls();
  REQUIRE(calls.size() == 3);
  CHECK(calls[0].size() == 2);
  CHECK(calls[1].size() == 2);
  CHECK(calls[2].size() == 1);

  REQUIRE(batch.vectors.size() == 5);
  CHECK(batch.vectors[0][0] == doctest::Approx(0.6));
  CHECK(batch.vectors[0][1] == doctest::Approx(0.8));
  CHECK(batch.vectors[1][1] == doctest::Approx(1.0));
  CHECK(batch.vectors[3][1] == doctest::Approx(-1.0));

  // 1 + 1 + 1 + 1 + 1 estimated tokens, all texts <= 4 chars.
  CHECK(batch.embedding_tokens == 5);
  CHECK(gw.cost_ledger().embedding_tokens == 5);
  CHECK(gw.cost_ledger().generation_tokens == 0);
}

TEST_CASE("embedding shape errors") {
  kt::scripted_backend backend;
  gateway gw(kt::resolver_for(backend), kt::fast_options());

  backend.pin_embedding("one", {1.0, 0.0});
  backend.pin_embedding("two", {1.0, 0.0, 0.0});
  CHECK_THROWS_AS(gw.embed("scripted:m", {"one", "two"}),
                  dimension_mismatch_error);

  backend.pin_embedding("zero", {0.0, 0.0});
  CHECK_THROWS_AS(gw.embed("scripted:m", {"zero"}), malformed_response_error);
}

TEST_CASE("concurrency cap holds under load") {
  kt::scripted_backend backend;
  std::atomic<int> in_flight{0};
  std::atomic<int> peak{0};
  backend.set_responder([&](const chat_request&) {
    int now = ++in_flight;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --in_flight;
    return wire_chat{"ok", 1, 1};
  });

  auto opts = kt::fast_options(/*concurrency=*/2);
  gateway gw(kt::resolver_for(backend), opts);

  std::vector<std::thread> threads;
  threads.reserve(8);
  for (int i = 0; i < 8; ++i)
    threads.emplace_back([&] { gw.chat(simple_request()); });
  for (auto& t : threads) t.join();

  CHECK(peak.load() <= 2);
  CHECK(backend.requests().size() == 8);
}

TEST_CASE("recorded calls and trace sink") {
  kt::scripted_backend backend;
  gateway gw(kt::resolver_for(backend), kt::fast_options());
  gw.set_record_calls(true);
  std::vector<std::string> trace;
  gw.set_trace_sink([&](const std::string& line) { trace.push_back(line); });

  backend.push_text("- fact one");
  gw.chat(simple_request("tell me"));
  backend.pin_embedding("t", {1.0, 0.0});
  gw.embed("scripted:m", {"t"});

  auto calls = gw.recorded_calls();
  REQUIRE(calls.size() == 1);
  CHECK(calls[0].request.messages[0].content == "tell me");
  CHECK(calls[0].response.text == "- fact one");

  REQUIRE(trace.size() == 2);
  auto first = json::parse(trace[0]);
  CHECK(first.at("call") == "chat");
  CHECK(first.at("prompt") == "tell me");
  auto second = json::parse(trace[1]);
  CHECK(second.at("call") == "embed");
  CHECK(second.at("texts") == 1);
}

TEST_CASE("http backend speaks the chat-completions protocol") {
  httplib::Server server;
  std::atomic<int> chat_hits{0};

  server.Post("/v1/chat/completions",
              [&](const httplib::Request& req, httplib::Response& res) {
                ++chat_hits;
                if (req.get_header_value("Authorization") !=
                    "Bearer test-key") {
                  res.status = 401;
                  res.set_content("{}", "application/json");
                  return;
                }
                auto body = json::parse(req.body);
                const std::string model = body.at("model");
                if (model == "break-500") {
                  res.status = 500;
                  res.set_content("{}", "application/json");
                  return;
                }
                if (model == "break-429") {
                  res.status = 429;
                  res.set_content("{}", "application/json");
                  return;
                }
                if (model == "bad-json") {
                  res.set_content("{nope", "application/json");
                  return;
                }
                if (model == "no-choices") {
                  res.set_content("{\"choices\":[]}", "application/json");
                  return;
                }
                json reply;
                reply["choices"] = json::array(
                    {{{"message",
                       {{"role", "assistant"}, {"content", "- wired fact"}}}}});
                reply["usage"] = {{"prompt_tokens", 11},
                                  {"completion_tokens", 4}};
                // Echo checks: temperature and max_tokens must be forwarded.
                if (body.at("temperature").get<double>() != 0.7 ||
                    body.at("max_tokens").get<int>() != 128) {
                  res.status = 400;
                  res.set_content("{}", "application/json");
                  return;
                }
                res.set_content(reply.dump(), "application/json");
              });

  server.Post("/v1/embeddings",
              [&](const httplib::Request& req, httplib::Response& res) {
                auto body = json::parse(req.body);
                const auto& input = body.at("input");
                json data = json::array();
                // Deliberately reversed: the client must honor index fields.
                for (int i = static_cast<int>(input.size()) - 1; i >= 0; --i) {
                  json item;
                  item["index"] = i;
                  item["embedding"] =
                      std::vector<double>{1.0 + i, 0.0, 0.0, 0.0};
                  data.push_back(item);
                }
                json reply;
                reply["data"] = data;
                reply["usage"] = {{"total_tokens", 9}};
                res.set_content(reply.dump(), "application/json");
              });

  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);

  {
    http_backend remote(base, "test-key", 5.0);
    gateway gw(kt::resolver_for(remote), kt::fast_options());

    chat_request req;
    req.model_id = "gpt-test";
    req.messages = {{"user", "hello"}};
    req.max_output_tokens = 128;
    auto resp = gw.chat(req);
    CHECK(resp.text == "- wired fact");
    CHECK(resp.prompt_tokens == 11);
    CHECK(resp.completion_tokens == 4);
    CHECK_FALSE(resp.usage_estimated);

    auto batch = gw.embed("embed-test", {"alpha", "beta"});
    REQUIRE(batch.vectors.size() == 2);
    // index-ordered and normalized
    CHECK(batch.vectors[0][0] == doctest::Approx(1.0));
    CHECK(batch.vectors[1][0] == doctest::Approx(1.0));
    CHECK(batch.embedding_tokens == 9);

    req.model_id = "break-429";
    auto opts = kt::fast_options();
    opts.retry.max_attempts = 2;
    gateway retrying(kt::resolver_for(remote), opts);
    int before = chat_hits.load();
    CHECK_THROWS_AS(retrying.chat(req), rate_limit_error);
    CHECK(chat_hits.load() - before == 2);

    req.model_id = "break-500";
    before = chat_hits.load();
    CHECK_THROWS_AS(retrying.chat(req), server_error);
    CHECK(chat_hits.load() - before == 2);

    req.model_id = "bad-json";
    before = chat_hits.load();
    CHECK_THROWS_AS(retrying.chat(req), malformed_response_error);
    CHECK(chat_hits.load() - before == 1);

    req.model_id = "no-choices";
    CHECK_THROWS_AS(retrying.chat(req), malformed_response_error);
  }

  {
    http_backend wrong_key(base, "other-key", 5.0);
    gateway gw(kt::resolver_for(wrong_key), kt::fast_options());
    chat_request req;
    req.model_id = "gpt-test";
    req.messages = {{"user", "hello"}};
    int before = chat_hits.load();
    CHECK_THROWS_AS(gw.chat(req), auth_error);
    CHECK(chat_hits.load() - before == 1);  // never retried
  }

  server.stop();
  server_thread.join();

  http_backend unreachable("http://127.0.0.1:" + std::to_string(port),
                           "test-key", 0.5);
  gateway gw(kt::resolver_for(unreachable), kt::fast_options());
  chat_request req;
  req.model_id = "gpt-test";
  req.messages = {{"user", "hello"}};
  CHECK_THROWS_AS(gw.chat(req), transport_error);
}

}  // TEST_SUITE
