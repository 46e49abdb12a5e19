#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pathvlm/common.hpp"

namespace pathvlm {

// What a judge call carries besides the prompt. Mock judges match keywords
// against `text`; the remote judge ships `image_b64` when present.
struct JudgePayload {
    std::string text;
    std::optional<std::string> image_b64;
};

// Raw-completion client. Implementations handle their own transport retries;
// a transport failure that survives the retry budget surfaces as JudgeError.
class JudgeClient {
public:
    virtual ~JudgeClient() = default;
    virtual std::string complete(const std::string& prompt, const JudgePayload& payload) = 0;
    virtual int retry_budget() const { return 2; }
};

// Deterministic keyword judge for tests and the desk profile. First matching
// rule wins; unmatched payloads get the default reply.
class MockJudge : public JudgeClient {
public:
    struct Rule {
        std::string keyword;  // substring of payload text (case-sensitive)
        std::string reply;
    };

    MockJudge(std::vector<Rule> rules, std::string default_reply)
        : rules_(std::move(rules)), default_reply_(std::move(default_reply)) {}

    std::string complete(const std::string& prompt, const JudgePayload& payload) override;

private:
    std::vector<Rule> rules_;
    std::string default_reply_;
};

// Minimal chat-completion HTTP client: POST {model, messages:[...]} to
// endpoint, read choices[0].message.content. Retries with linear backoff up
// to retry_budget extra attempts; concurrent calls are capped.
class RemoteJudge : public JudgeClient {
public:
    struct Options {
        std::string host;       // e.g. "127.0.0.1"
        int port = 80;
        std::string path = "/v1/chat/completions";
        std::string model = "judge";
        int retry_budget = 2;
        int timeout_ms = 5000;
        int backoff_ms = 50;
        int max_in_flight = 4;
    };

    explicit RemoteJudge(Options opts);
    ~RemoteJudge() override;
    std::string complete(const std::string& prompt, const JudgePayload& payload) override;
    int retry_budget() const override { return opts_.retry_budget; }

private:
    struct Impl;
    Options opts_;
    std::unique_ptr<Impl> impl_;
};

enum class Verdict { yes, no };

// Case-insensitive leading "yes"/"no" after whitespace; anything else is a
// parse failure (nullopt).
std::optional<Verdict> parse_verdict(const std::string& raw);

// Asks for a yes/no verdict, retrying transport errors and non-verdict
// replies within the client's retry budget. Throws JudgeError when the
// budget is exhausted.
Verdict judge_verdict(JudgeClient& client, const std::string& prompt, const JudgePayload& payload);

// First integer in the reply, clamped to [1,10]; retries like judge_verdict.
int judge_score(JudgeClient& client, const std::string& prompt, const JudgePayload& payload);

std::string base64_encode(const std::string& bytes);

}  // namespace pathvlm
