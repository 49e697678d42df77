#include "commentsim/error.hpp"

#include <fmt/format.h>

namespace commentsim {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::input: return "input";
        case ErrorKind::media: return "media";
        case ErrorKind::validation: return "validation";
        case ErrorKind::transport: return "transport";
        case ErrorKind::budget: return "budget";
        case ErrorKind::parse: return "parse";
        case ErrorKind::generation: return "generation";
        case ErrorKind::scoring: return "scoring";
        case ErrorKind::not_found: return "not_found";
        case ErrorKind::conflict: return "conflict";
        case ErrorKind::stale_index: return "stale_index";
        case ErrorKind::integrity: return "integrity";
        case ErrorKind::config: return "config";
        case ErrorKind::pipeline: return "pipeline";
        case ErrorKind::internal: return "internal";
    }
    return "internal";
}

BudgetError::BudgetError(std::int64_t estimated_tokens, std::int64_t budget_tokens)
    : Error(ErrorKind::budget,
            fmt::format("prompt exceeds the context budget by {} tokens (estimated {}, budget {})",
                        estimated_tokens - budget_tokens, estimated_tokens, budget_tokens)),
      estimated_(estimated_tokens),
      budget_(budget_tokens) {}

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::input:
        case ErrorKind::media:
        case ErrorKind::validation:
        case ErrorKind::parse:
        case ErrorKind::config:
        case ErrorKind::not_found:
        case ErrorKind::conflict:
        case ErrorKind::stale_index:
            return 2;
        case ErrorKind::transport:
            return 3;
        case ErrorKind::budget:
            return 4;
        default:
            return 5;
    }
}

}  // namespace commentsim
