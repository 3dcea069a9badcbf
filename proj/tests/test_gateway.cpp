#include <atomic>
#include <cstdlib>
#include <random>
#include <thread>

#include <gtest/gtest.h>

#include "hardneg/gateway/http_transport.hpp"
#include "support.hpp"

using namespace hardneg;
using namespace hardneg::gateway;
using namespace testing_support;

namespace {

ChatRequest text_request(const std::string& tag, const std::string& text, const std::string& endpoint = "mock") {
    ChatRequest r;
    r.endpoint_id = endpoint;
    r.request_tag = tag;
    r.messages.push_back({Role::user, {TextPart{text}}});
    return r;
}

Script script_from(const char* json_text) { return parse_script(nlohmann::json::parse(json_text)); }

}  // namespace

class GatewayTest : public ::testing::Test {
protected:
    void SetUp() override { quiet_logs(); }
};

TEST_F(GatewayTest, MockAnswersMatchingRule) {
    auto gw = scripted_mock(script_from(R"({"rules":[{"tag":"verify_A","contains":"*","responses":["yes"]}]})"));
    EXPECT_EQ(gw->complete(text_request("verify_A", "Is it answerable?")), "yes");
}

TEST_F(GatewayTest, MockSequenceAdvancesPerRequest) {
    auto gw = scripted_mock(script_from(R"({"rules":[{"tag":"*","responses":["no","yes"]}]})"));
    const auto r = text_request("verify_A", "same question");
    EXPECT_EQ(gw->complete(r), "no");
    EXPECT_EQ(gw->complete(r), "yes");
}

TEST_F(GatewayTest, MockStrictModeRejectsUnmatchedTag) {
    auto gw = scripted_mock(script_from(R"({"strict":true,"rules":[{"tag":"verify_A","responses":["yes"]}]})"));
    EXPECT_THROW(gw->complete(text_request("rerank", "x")), GatewayError);
}

TEST_F(GatewayTest, MockLenientModeUsesDefault) {
    auto gw = scripted_mock(script_from(R"({"strict":false,"default":"No","rules":[]})"));
    EXPECT_EQ(gw->complete(text_request("anything", "x")), "No");
}

TEST_F(GatewayTest, MockExhaustedSequenceIsAnError) {
    auto gw = scripted_mock(script_from(R"({"rules":[{"tag":"*","responses":["once"]}]})"));
    const auto r = text_request("t", "x");
    EXPECT_EQ(gw->complete(r), "once");
    try {
        gw->complete(r);
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_NE(std::string(e.what()).find("script exhausted"), std::string::npos);
        EXPECT_EQ(e.kind(), FailureKind::script);
    }
}

TEST_F(GatewayTest, MockCycleWrapsAround) {
    auto gw = scripted_mock(script_from(R"({"rules":[{"tag":"*","responses":["a","b"],"cycle":true}]})"));
    const auto r = text_request("t", "x");
    std::string seen;
    for (int i = 0; i < 5; ++i) seen += gw->complete(r);
    EXPECT_EQ(seen, "ababa");
}

TEST_F(GatewayTest, MockSubstringRulesInOrder) {
    auto gw = scripted_mock(script_from(
        R"({"rules":[{"contains":"[NEG]","responses":["No"],"cycle":true},{"responses":["Yes"],"cycle":true}]})"));
    EXPECT_EQ(gw->complete(text_request("verify_B", "Question [NEG] here")), "No");
    EXPECT_EQ(gw->complete(text_request("verify_B", "Plain question")), "Yes");
}

TEST_F(GatewayTest, MockImageIdExpandsPerImage) {
    auto gw = scripted_mock(script_from(R"({"rules":[{"responses":["img={image_id}"],"cycle":true}]})"));
    auto a = text_request("t", "x");
    a.messages[0].parts.insert(a.messages[0].parts.begin(), ImagePart{"\x89PNG....a", "image/png"});
    auto b = text_request("t", "x");
    b.messages[0].parts.insert(b.messages[0].parts.begin(), ImagePart{"\x89PNG....b", "image/png"});
    const auto ra = gw->complete(a);
    const auto rb = gw->complete(b);
    EXPECT_EQ(ra.size(), 4u + 8u);
    EXPECT_NE(ra, rb);
    EXPECT_EQ(gw->complete(a), ra);
}

TEST_F(GatewayTest, MockTextIdExpandsPerUserText) {
    auto gw = scripted_mock(script_from(R"({"rules":[{"responses":["t={text_id} i={image_id}"],"cycle":true}]})"));
    const auto a = gw->complete(text_request("t", "first"));
    const auto b = gw->complete(text_request("t", "second"));
    EXPECT_EQ(a.size(), 2u + 8u + 3u + 7u);
    EXPECT_NE(a, b);
    EXPECT_EQ(a.substr(a.size() - 7), "noimage");
    EXPECT_EQ(gw->complete(text_request("t", "first")), a);
}

TEST_F(GatewayTest, ReplayReproducesResponses) {
    const char* text = R"({"rules":[{"tag":"gen","responses":["r1","r2","r3"]},{"responses":["x","y"],"cycle":true}]})";
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 30; ++i) reqs.push_back(text_request(i % 3 ? "gen" : "other", "q" + std::to_string(i % 7)));
    auto run = [&] {
        auto gw = scripted_mock(script_from(text), {mock_endpoint("mock", 4)});
        std::vector<std::string> out;
        for (auto& o : gw->complete_many(reqs)) out.push_back(o.ok() ? o.completion->text : "ERR:" + o.error);
        return out;
    };
    const auto first = run();
    EXPECT_EQ(run(), first);

    // A sequential replay of the same request log gives the same answers.
    auto gw = scripted_mock(script_from(text), {mock_endpoint("mock", 1)});
    std::vector<std::string> seq;
    for (const auto& r : reqs) {
        try {
            seq.push_back(gw->complete(r));
        } catch (const GatewayError& e) {
            seq.push_back(std::string("ERR:") + e.what());
        }
    }
    EXPECT_EQ(seq, first);
}

TEST_F(GatewayTest, RetriesServerErrorsThenSucceeds) {
    auto gw = scripted_mock(script_from(R"({"rules":[{"responses":[{"error":"server_error","status":503},"ok"]}]})"));
    auto c = gw->complete_full(text_request("t", "x"));
    EXPECT_EQ(c.text, "ok");
    EXPECT_EQ(c.attempts, 2);
    EXPECT_EQ(mock_transport(*gw).calls(), 2);
}

TEST_F(GatewayTest, ClientErrorIsNeverResent) {
    auto gw = scripted_mock(
        script_from(R"({"rules":[{"responses":[{"error":"client_error","status":400},"never"]}]})"),
        {mock_endpoint("mock", 4, 5)});
    try {
        gw->complete(text_request("t", "x"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), FailureKind::client_error);
        EXPECT_EQ(e.attempts(), 1);
    }
    EXPECT_EQ(mock_transport(*gw).calls(), 1);
}

TEST_F(GatewayTest, AttemptsNeverExceedMaximum) {
    for (int max_attempts = 1; max_attempts <= 4; ++max_attempts) {
        auto gw = scripted_mock(
            script_from(R"({"rules":[{"responses":[{"error":"timeout"}],"cycle":true}]})"),
            {mock_endpoint("mock", 4, max_attempts)});
        try {
            gw->complete(text_request("t", "x"));
            FAIL();
        } catch (const GatewayError& e) {
            EXPECT_EQ(e.attempts(), max_attempts);
        }
        EXPECT_EQ(mock_transport(*gw).calls(), max_attempts);
    }
}

TEST_F(GatewayTest, FanOutRespectsInFlightCeiling) {
    auto script = script_from(R"({"latency_ms":5,"rules":[{"responses":["ok"],"cycle":true}]})");
    auto gw = scripted_mock(script, {mock_endpoint("mock", 4)});
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 40; ++i) reqs.push_back(text_request("t", "q" + std::to_string(i)));
    const auto out = gw->complete_many(reqs);
    for (std::size_t i = 0; i < out.size(); ++i) {
        EXPECT_TRUE(out[i].ok());
        EXPECT_EQ(out[i].index, i);
    }
    EXPECT_LE(mock_transport(*gw).peak_in_flight(), 4);
    EXPECT_GE(mock_transport(*gw).peak_in_flight(), 2);
}

TEST_F(GatewayTest, CeilingHoldsAcrossOverlappingCallers) {
    auto script = script_from(R"({"latency_ms":3,"rules":[{"responses":["ok"],"cycle":true}]})");
    auto gw = scripted_mock(script, {mock_endpoint("mock", 3)});
    std::vector<ChatRequest> reqs;
    for (int i = 0; i < 12; ++i) reqs.push_back(text_request("t", "q" + std::to_string(i)));
    {
        std::jthread a([&] { gw->complete_many(reqs); });
        std::jthread b([&] { gw->complete_many(reqs); });
    }
    EXPECT_LE(mock_transport(*gw).peak_in_flight(), 3);
    EXPECT_EQ(mock_transport(*gw).calls(), 24);
}

TEST_F(GatewayTest, OneFailureDoesNotAffectSiblings) {
    auto gw = scripted_mock(script_from(
        R"({"rules":[{"contains":"bad","responses":[{"error":"client_error","status":422}],"cycle":true},{"responses":["ok"],"cycle":true}]})"));
    std::vector<ChatRequest> reqs{text_request("t", "good 1"), text_request("t", "bad"), text_request("t", "good 2")};
    const auto out = gw->complete_many(reqs);
    EXPECT_TRUE(out[0].ok());
    EXPECT_FALSE(out[1].ok());
    EXPECT_EQ(out[1].failure, FailureKind::client_error);
    EXPECT_TRUE(out[2].ok());
}

TEST_F(GatewayTest, UnknownEndpointRejected) {
    auto gw = scripted_mock(script_from(R"({"rules":[]})"));
    EXPECT_THROW(gw->complete(text_request("t", "x", "nope")), ValidationError);
}

TEST_F(GatewayTest, RefusingTransportCountsContacts) {
    auto transport = std::make_shared<RefusingTransport>();
    Gateway gw({mock_endpoint()}, transport);
    EXPECT_THROW(gw.complete(text_request("t", "x")), GatewayError);
    EXPECT_EQ(transport->contacts(), 1);
}

TEST(EndpointConfig, ValidationRules) {
    auto e = mock_endpoint();
    EXPECT_NO_THROW(validate(e));
    e.max_in_flight = 0;
    EXPECT_THROW(validate(e), ValidationError);
    e = mock_endpoint();
    e.retry.max_attempts = 9;
    EXPECT_THROW(validate(e), ValidationError);
    e = mock_endpoint();
    e.timeout_ms = 0;
    EXPECT_THROW(validate(e), ValidationError);
    EXPECT_THROW(Gateway({mock_endpoint("a"), mock_endpoint("a")}, std::make_shared<RefusingTransport>()),
                 ValidationError);
}

TEST(Wire, Base64RoundTripsRandomBytes) {
    std::mt19937_64 rng(3);
    for (int n = 0; n < 70; ++n) {
        std::string bytes;
        for (int i = 0; i < n; ++i) bytes.push_back(static_cast<char>(rng() & 0xff));
        EXPECT_EQ(base64_decode(base64_encode(bytes)), bytes);
    }
    EXPECT_EQ(base64_encode("Man"), "TWFu");
    EXPECT_EQ(base64_encode("Ma"), "TWE=");
}

TEST(Wire, RequestRoundTrip) {
    ChatRequest r;
    r.endpoint_id = "vlm";
    r.request_tag = "verify_A";
    r.temperature = 0.25;
    r.max_tokens = 77;
    r.top_logprobs = 5;
    r.messages.push_back({Role::system, {TextPart{"be terse"}}});
    r.messages.push_back({Role::user, {ImagePart{std::string("\x89PNG\r\n\x1a\n\x00\xff", 10), "image/png"},
                                       TextPart{"Is 2022 revenue shown?"}}});
    const auto wire = to_wire(r, "some-model");
    EXPECT_EQ(wire["model"], "some-model");
    EXPECT_EQ(wire["logprobs"], true);
    const auto url = wire["messages"][1]["content"][0]["image_url"]["url"].get<std::string>();
    EXPECT_EQ(url.rfind("data:image/png;base64,", 0), 0u);
    EXPECT_EQ(from_wire(nlohmann::json::parse(wire.dump()), "vlm", "verify_A"), r);
}

TEST(Wire, CompletionBodyWithLogprobs) {
    const auto body = nlohmann::json::parse(R"({
      "choices":[{"message":{"role":"assistant","content":"True"},
                  "logprobs":{"content":[{"token":"True","logprob":-0.1,
                     "top_logprobs":[{"token":"True","logprob":-0.1},{"token":"False","logprob":-2.4}]}]}}]})");
    auto c = parse_completion_body(body);
    ASSERT_TRUE(c);
    EXPECT_EQ(c->text, "True");
    EXPECT_DOUBLE_EQ(c->first_token_logprobs.at("False"), -2.4);
    EXPECT_FALSE(parse_completion_body(nlohmann::json::parse(R"({"choices":[]})")));
}

// ---- HTTP transport against a local server ----------------------------------

class HttpTransportTest : public ::testing::Test {
protected:
    void SetUp() override {
        quiet_logs();
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits_;
            last_auth_ = req.get_header_value("Authorization");
            last_body_ = req.body;
            const auto body = nlohmann::json::parse(req.body);
            const auto text = body["messages"][0]["content"][0]["text"].get<std::string>();
            if (text == "fail-twice" && hits_ <= 2) {
                res.status = 503;
                res.set_content("overloaded", "text/plain");
                return;
            }
            if (text == "bad-request") {
                res.status = 400;
                res.set_content(std::string(1000, 'e'), "text/plain");
                return;
            }
            if (text == "not-json") {
                res.set_content("<html>", "text/html");
                return;
            }
            if (text == "slow") std::this_thread::sleep_for(std::chrono::milliseconds(1500));
            nlohmann::json out = {{"choices", {{{"message", {{"role", "assistant"}, {"content", "echo:" + text}}}}}}};
            res.set_content(out.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        ::setenv("HARDNEG_TEST_KEY", "sk-test", 1);
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }

    EndpointConfig endpoint(int attempts = 3, int timeout_ms = 5000) {
        EndpointConfig e;
        e.endpoint_id = "local";
        e.base_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/";
        e.api_key_env = "HARDNEG_TEST_KEY";
        e.model_name = "m";
        e.timeout_ms = timeout_ms;
        e.retry = {attempts, 1, 1.0};
        return e;
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    std::string last_auth_;
    std::string last_body_;
};

TEST_F(HttpTransportTest, PostsWithBearerKey) {
    Gateway gw({endpoint()}, std::make_shared<HttpTransport>());
    EXPECT_EQ(gw.complete(text_request("t", "hello", "local")), "echo:hello");
    EXPECT_EQ(last_auth_, "Bearer sk-test");
    EXPECT_EQ(nlohmann::json::parse(last_body_)["model"], "m");
}

TEST_F(HttpTransportTest, RetriesFiveHundreds) {
    Gateway gw({endpoint()}, std::make_shared<HttpTransport>());
    auto c = gw.complete_full(text_request("t", "fail-twice", "local"));
    EXPECT_EQ(c.text, "echo:fail-twice");
    EXPECT_EQ(c.attempts, 3);
}

TEST_F(HttpTransportTest, FourHundredFailsOnceWithExcerpt) {
    Gateway gw({endpoint()}, std::make_shared<HttpTransport>());
    try {
        gw.complete(text_request("t", "bad-request", "local"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), FailureKind::client_error);
        EXPECT_EQ(e.attempts(), 1);
        EXPECT_LT(std::string(e.what()).size(), 500u);
    }
    EXPECT_EQ(hits_.load(), 1);
}

TEST_F(HttpTransportTest, NonJsonIsProtocolError) {
    Gateway gw({endpoint()}, std::make_shared<HttpTransport>());
    try {
        gw.complete(text_request("t", "not-json", "local"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), FailureKind::protocol);
    }
}

TEST_F(HttpTransportTest, SlowServerTimesOut) {
    Gateway gw({endpoint(1, 200)}, std::make_shared<HttpTransport>());
    try {
        gw.complete(text_request("t", "slow", "local"));
        FAIL();
    } catch (const GatewayError& e) {
        EXPECT_EQ(e.kind(), FailureKind::timeout);
    }
}

TEST_F(HttpTransportTest, MissingKeyIsClientError) {
    auto e = endpoint();
    e.api_key_env = "HARDNEG_TEST_KEY_UNSET_XYZ";
    Gateway gw({e}, std::make_shared<HttpTransport>());
    try {
        gw.complete(text_request("t", "hello", "local"));
        FAIL();
    } catch (const GatewayError& err) {
        EXPECT_EQ(err.kind(), FailureKind::client_error);
    }
    EXPECT_EQ(hits_.load(), 0);
}

TEST(HttpTransport, ConnectionRefusedIsNetworkError) {
    quiet_logs();
    EndpointConfig e;
    e.endpoint_id = "dead";
    e.base_url = "http://127.0.0.1:1/v1";
    e.timeout_ms = 500;
    e.retry = {2, 1, 1.0};
    Gateway gw({e}, std::make_shared<HttpTransport>());
    try {
        gw.complete(text_request("t", "x", "dead"));
        FAIL();
    } catch (const GatewayError& err) {
        EXPECT_EQ(err.kind(), FailureKind::network);
        EXPECT_EQ(err.attempts(), 2);
    }
}

TEST(HttpTransport, SplitsBaseUrl) {
    auto u = split_base_url("https://api.example.com/v1/");
    EXPECT_EQ(u.origin, "https://api.example.com");
    EXPECT_EQ(u.path, "/v1");
    EXPECT_EQ(split_base_url("http://h:8000").path, "");
    EXPECT_THROW(split_base_url("localhost:8000"), ValidationError);
}
