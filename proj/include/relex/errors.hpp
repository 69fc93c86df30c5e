#ifndef RELEX_ERRORS_HPP
#define RELEX_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace relex {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IntegrityError : std::runtime_error {
    explicit IntegrityError(const std::string& msg) : std::runtime_error(msg) {}
};

struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

struct LookupError : std::runtime_error {
    explicit LookupError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IngestError : std::runtime_error {
    explicit IngestError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SamplingError : std::runtime_error {
    explicit SamplingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct SplitError : std::runtime_error {
    explicit SplitError(const std::string& msg) : std::runtime_error(msg) {}
};

struct EvalError : std::runtime_error {
    explicit EvalError(const std::string& msg) : std::runtime_error(msg) {}
};

struct AggregationError : std::runtime_error {
    explicit AggregationError(const std::string& msg) : std::runtime_error(msg) {}
};

struct RangeError : std::runtime_error {
    explicit RangeError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace relex

#endif
