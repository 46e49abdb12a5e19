#pragma once

#include <stdexcept>
#include <string>

namespace pathvlm {

// Thrown when a config file or RunConfig fails validation. The message starts
// with the offending field path, e.g. "judge.endpoint: missing".
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a judge client exhausts its retry budget or returns an
// unparsable reply.
struct JudgeError : std::runtime_error {
    explicit JudgeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pathvlm
