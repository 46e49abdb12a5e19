#include "pathvlm/judge.hpp"

#include <cctype>
#include <chrono>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

namespace pathvlm {

std::string MockJudge::complete(const std::string& /*prompt*/, const JudgePayload& payload) {
    for (const auto& rule : rules_)
        if (payload.text.find(rule.keyword) != std::string::npos) return rule.reply;
    return default_reply_;
}

struct RemoteJudge::Impl {
    explicit Impl(int max_in_flight) : gate(max_in_flight) {}
    std::counting_semaphore<256> gate;
};

RemoteJudge::RemoteJudge(Options opts) : opts_(std::move(opts)) {
    if (opts_.host.empty()) throw ConfigError("judge.endpoint: missing host");
    if (opts_.max_in_flight < 1 || opts_.max_in_flight > 256)
        throw ConfigError("judge.max_in_flight: must be in [1,256]");
    impl_ = std::make_unique<Impl>(opts_.max_in_flight);
}

RemoteJudge::~RemoteJudge() = default;

std::string RemoteJudge::complete(const std::string& prompt, const JudgePayload& payload) {
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    if (payload.image_b64)
        content.push_back({{"type", "image_b64"}, {"data", *payload.image_b64}});
    else if (!payload.text.empty())
        content.push_back({{"type", "text"}, {"text", payload.text}});
    nlohmann::json body = {
        {"model", opts_.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
    };
    const std::string body_str = body.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= opts_.retry_budget; ++attempt) {
        if (attempt > 0)
            std::this_thread::sleep_for(std::chrono::milliseconds(opts_.backoff_ms * attempt));
        impl_->gate.acquire();
        httplib::Client cli(opts_.host, opts_.port);
        cli.set_connection_timeout(0, opts_.timeout_ms * 1000);
        cli.set_read_timeout(0, opts_.timeout_ms * 1000);
        auto res = cli.Post(opts_.path, body_str, "application/json");
        impl_->gate.release();
        if (!res) {
            last_error = "transport error " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "http status " + std::to_string(res->status);
            continue;
        }
        try {
            auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const std::exception& e) {
            last_error = std::string("bad response body: ") + e.what();
        }
    }
    throw JudgeError("remote judge failed after " + std::to_string(opts_.retry_budget + 1) +
                     " attempts: " + last_error);
}

std::optional<Verdict> parse_verdict(const std::string& raw) {
    size_t i = 0;
    while (i < raw.size() && std::isspace(static_cast<unsigned char>(raw[i]))) ++i;
    auto starts_with_ci = [&](const char* word) {
        size_t n = std::char_traits<char>::length(word);
        if (i + n > raw.size()) return false;
        for (size_t k = 0; k < n; ++k)
            if (std::tolower(static_cast<unsigned char>(raw[i + k])) != word[k]) return false;
        // must not continue into a longer letter run ("yesterday" is not a verdict)
        if (i + n < raw.size() && std::isalpha(static_cast<unsigned char>(raw[i + n]))) return false;
        return true;
    };
    if (starts_with_ci("yes")) return Verdict::yes;
    if (starts_with_ci("no")) return Verdict::no;
    return std::nullopt;
}

Verdict judge_verdict(JudgeClient& client, const std::string& prompt, const JudgePayload& payload) {
    std::string last;
    for (int attempt = 0; attempt <= client.retry_budget(); ++attempt) {
        std::string raw;
        try {
            raw = client.complete(prompt, payload);
        } catch (const JudgeError&) {
            throw;  // client already exhausted its own transport retries
        } catch (const std::exception& e) {
            last = std::string("(exception) ") + e.what();
            continue;
        }
        if (auto v = parse_verdict(raw)) return *v;
        last = raw;
    }
    throw JudgeError("no yes/no verdict from judge: \"" + last + "\"");
}

int judge_score(JudgeClient& client, const std::string& prompt, const JudgePayload& payload) {
    std::string last;
    for (int attempt = 0; attempt <= client.retry_budget(); ++attempt) {
        std::string raw;
        try {
            raw = client.complete(prompt, payload);
        } catch (const JudgeError&) {
            throw;
        } catch (const std::exception& e) {
            last = std::string("(exception) ") + e.what();
            continue;
        }
        for (size_t i = 0; i < raw.size(); ++i) {
            if (std::isdigit(static_cast<unsigned char>(raw[i]))) {
                size_t j = i;
                long val = 0;
                while (j < raw.size() && std::isdigit(static_cast<unsigned char>(raw[j])) && val < 1000)
                    val = val * 10 + (raw[j++] - '0');
                return static_cast<int>(std::min(10L, std::max(1L, val)));
            }
        }
        last = raw;
    }
    throw JudgeError("no integer from judge: \"" + last + "\"");
}

std::string base64_encode(const std::string& bytes) {
    static const char* alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    size_t i = 0;
    while (i + 2 < bytes.size()) {
        const uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back(alphabet[v & 63]);
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        const uint32_t v = static_cast<unsigned char>(bytes[i]) << 16;
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.append("==");
    } else if (i + 2 == bytes.size()) {
        const uint32_t v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out.push_back(alphabet[(v >> 18) & 63]);
        out.push_back(alphabet[(v >> 12) & 63]);
        out.push_back(alphabet[(v >> 6) & 63]);
        out.push_back('=');
    }
    return out;
}

}  // namespace pathvlm
