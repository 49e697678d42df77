#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace commentsim {

enum class ErrorKind {
    input,        // caller supplied bad data (empty text, bad file, malformed line)
    media,        // unsupported or undecodable media container
    validation,   // request-level validation (missing title, empty reply, ...)
    transport,    // backend unreachable after retries
    budget,       // prompt over the configured context budget
    parse,        // model output did not follow the requested framing
    generation,   // model produced nothing usable
    scoring,      // judge reply unusable
    not_found,
    conflict,     // resource not in the state the operation needs
    stale_index,  // persisted index built with a different model
    integrity,    // persisted state violates an invariant
    config,
    pipeline,     // a pipeline stage failed; message names the stage/unit
    internal,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Base exception for everything the library throws on purpose.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

/// Raised before any chat call when the rendered prompt does not fit.
class BudgetError : public Error {
  public:
    BudgetError(std::int64_t estimated_tokens, std::int64_t budget_tokens);

    std::int64_t estimated() const noexcept { return estimated_; }
    std::int64_t budget() const noexcept { return budget_; }
    std::int64_t overflow() const noexcept { return estimated_ - budget_; }

  private:
    std::int64_t estimated_;
    std::int64_t budget_;
};

/// Model output that could not be parsed; keeps the raw text for inspection.
class ParseError : public Error {
  public:
    ParseError(const std::string& message, std::string raw)
        : Error(ErrorKind::parse, message), raw_(std::move(raw)) {}

    const std::string& raw() const noexcept { return raw_; }

  private:
    std::string raw_;
};

/// Process exit code for the CLI: 0 ok, 2 validation, 3 transport, 4 budget, 5 internal.
int exit_code_for(ErrorKind kind) noexcept;

}  // namespace commentsim
