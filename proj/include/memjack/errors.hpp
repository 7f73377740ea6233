#pragma once

#include <stdexcept>
#include <string>

namespace memjack {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TransportError : Error {
    using Error::Error;
};
struct MalformedResponseError : Error {
    using Error::Error;
};
struct DimMismatchError : Error {
    using Error::Error;
};
struct BackendError : Error {
    using Error::Error;
};
struct EmptyPlanError : Error {
    using Error::Error;
};
struct AllCandidatesDroppedError : Error {
    using Error::Error;
};
struct DegenerateCorpusError : Error {
    using Error::Error;
};
struct SchemaViolationError : Error {
    using Error::Error;
};
struct ParseError : Error {
    explicit ParseError(const std::string& msg, std::string field = "")
        : Error(msg), field(std::move(field)) {}
    std::string field;
};
struct SchemaVersionError : Error {
    using Error::Error;
};
struct ValidationError : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg, std::string key = "")
        : Error(msg), key(std::move(key)) {}
    std::string key;
};

}  // namespace memjack
