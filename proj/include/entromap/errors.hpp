#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace entromap {

// An iterative routine produced a non-finite or unbounded value.
// `iteration` is the sweep index at which the failure was detected.
struct numerical_error : std::runtime_error {
    std::size_t iteration;
    numerical_error(const std::string& what, std::size_t it)
        : std::runtime_error(what), iteration(it) {}
};

// A requested allocation exceeds the configured cap.
struct resource_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// An operation was invoked on data violating its preconditions in a way that
// indicates stale or unconverged state rather than a malformed argument.
struct invalid_state : std::logic_error {
    using std::logic_error::logic_error;
};

// Malformed input file; `line` is 1-based, 0 when not tied to a line.
struct parse_error : std::runtime_error {
    std::size_t line;
    explicit parse_error(const std::string& what, std::size_t line_no = 0)
        : std::runtime_error(what), line(line_no) {}
};

}  // namespace entromap
