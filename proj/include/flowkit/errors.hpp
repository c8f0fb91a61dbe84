#pragma once

#include <stdexcept>
#include <string>

namespace flowkit {

// Base for all toolkit errors; `code` is a stable machine-readable tag.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

class UnknownKindError : public Error {
public:
    explicit UnknownKindError(const std::string& token)
        : Error("UnknownKind", "unknown node kind: '" + token + "'"), token_(token) {}

    const std::string& token() const { return token_; }

private:
    std::string token_;
};

class MissingBranchSpecError : public Error {
public:
    MissingBranchSpecError(const std::string& kind, const std::string& param)
        : Error("MissingBranchSpec",
                kind + " node needs the '" + param + "' list to derive its outbound ports") {}
};

}  // namespace flowkit
