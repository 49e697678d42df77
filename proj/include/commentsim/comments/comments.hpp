#pragma once

#include "commentsim/gateway/gateway.hpp"
#include "commentsim/persona/persona.hpp"
#include "commentsim/summary/summary.hpp"
#include "commentsim/util/clock.hpp"
#include "commentsim/video/video.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace commentsim::comments {

inline constexpr std::size_t kMaxBodyChars = 2000;
inline constexpr std::size_t kDefaultBatchSize = 30;

/// The four generated kinds plus the creator's own replies, which are stored
/// in the same tree but never generated.
enum class CommentKind { primary, thread, reply, custom_persona, creator_reply };

std::string_view to_string(CommentKind kind) noexcept;
CommentKind comment_kind_from_string(std::string_view text);

inline constexpr std::string_view kCreatorName = "creator";

struct Comment {
    std::string comment_id;
    std::string video_id;
    CommentKind kind = CommentKind::primary;
    std::string body;
    std::string author_name;
    std::string avatar_seed;
    std::optional<std::string> persona_id;
    std::optional<std::string> parent_id;
    std::string created_at;

    bool generated() const noexcept { return kind != CommentKind::creator_reply; }

    friend bool operator==(const Comment&, const Comment&) = default;
};

/// Local invariants: nonempty body of at most 2000 characters; primary and
/// custom comments have no parent; every other kind has one.
void validate_comment(const Comment& comment);

struct CommentBatchPlan {
    std::size_t total = 0;
    std::size_t primary_count = 0;
    std::size_t thread_count = 0;

    friend bool operator==(const CommentBatchPlan&, const CommentBatchPlan&) = default;
};

/// 70% primaries rounded half up (at least one), the rest threads.
CommentBatchPlan plan_batch(std::size_t total);

struct IdentityPool {
    std::vector<std::string> names;
    std::uint64_t rng_seed = 0;
};

/// Names must be nonempty; duplicates are dropped keeping the first.
IdentityPool make_identity_pool(std::vector<std::string> names, std::uint64_t rng_seed);

/// Accepts SSA "Name,Sex,Count" rows or one name per line.
std::vector<std::string> parse_names(std::string_view content);
std::vector<std::string> load_names(const std::filesystem::path& path);
const std::vector<std::string>& builtin_names();

struct Identity {
    std::string author_name;
    std::string avatar_seed;
};

/// Name drawn by a generator keyed on (rng_seed, comment_id); avatar_seed is
/// the content hash of comment_id.
Identity assign_identity(const IdentityPool& pool, std::string_view comment_id);

/// "c_" + content hash of (video_id, scope, ordinal).
std::string make_comment_id(std::string_view video_id, std::string_view scope, std::uint64_t ordinal);

/// Everything a viewer could know about the video.
struct VideoContext {
    std::string video_id;
    std::string title;
    std::string description;
    std::string author;
    std::string thumbnail_description = "none";
    summary::VideoSummary summary;
};

VideoContext make_context(const video::VideoAsset& asset, summary::VideoSummary summary,
                          std::string thumbnail_description);

const std::vector<std::string>& default_fewshot();
std::vector<std::string> load_fewshot(const std::filesystem::path& path);

struct PromptSettings {
    std::vector<std::string> fewshot = default_fewshot();
    double temperature = 1.0;
    std::int64_t context_budget = 200'000;
};

/// Role instruction, few-shot block, persona (omitted when null), metadata,
/// summary, keywords, in that order.
gateway::ChatExchange build_primary_prompt(const VideoContext& context,
                                           const persona::Persona* persona,
                                           const PromptSettings& settings);

/// Primary prompt plus the comment being answered.
gateway::ChatExchange build_thread_prompt(const VideoContext& context, const Comment& parent,
                                          const persona::Persona* persona,
                                          const PromptSettings& settings);

/// Primary prompt plus the commenter's earlier comment and the creator's reply.
gateway::ChatExchange build_reply_prompt(const VideoContext& context, const Comment& replied,
                                         std::string_view creator_reply,
                                         const persona::Persona* persona,
                                         const PromptSettings& settings);

/// Strips surrounding quotes, collapses whitespace and truncates to 2000
/// characters. Returns "" when nothing usable is left.
std::string clean_body(std::string_view raw);

struct EngineSettings {
    PromptSettings prompts;
    IdentityPool identities = make_identity_pool(builtin_names(), 0);
    std::shared_ptr<util::Clock> clock = std::make_shared<util::SystemClock>();
    std::size_t parallelism = 4;
};

/// Generates comments through one chat backend. Safe to share across threads.
class CommentEngine {
  public:
    CommentEngine(gateway::ChatModel& chat, EngineSettings settings);

    const EngineSettings& settings() const noexcept { return settings_; }

    Comment generate_primary(const VideoContext& context, const persona::Persona* persona,
                             std::string comment_id);

    /// parent must be a primary comment.
    Comment generate_thread(const VideoContext& context, const Comment& parent,
                            const persona::Persona* persona, std::string comment_id);

    /// Reply to `creator_node`, which answers `replied`. Uses the persona that
    /// wrote `replied`.
    Comment generate_reply(const VideoContext& context, const Comment& replied,
                           const Comment& creator_node, const persona::Persona* persona,
                           std::string comment_id);

    struct CustomResult {
        persona::Persona persona;
        Comment comment;
    };
    CustomResult generate_custom(const VideoContext& context, std::string_view persona_text,
                                 std::string comment_id);

    /// A non-generated node holding the creator's reply to `parent`.
    Comment make_creator_reply(const Comment& parent, std::string_view body, std::string comment_id);

    struct BatchRequest {
        CommentBatchPlan plan;
        /// Ranked personas; primaries take ranks 0..p-1 and threads the next
        /// ranks, wrapping when the list is short. Ignored when no_persona.
        std::span<const persona::Persona> personas;
        bool no_persona = false;
        std::uint64_t seed = 0;
        std::uint64_t batch_index = 0;
        std::function<void(std::size_t done, std::size_t total)> on_progress;
    };

    /// Primaries first (rank order), then threads attached to primaries drawn
    /// uniformly without replacement. Output order is stable whatever order
    /// the concurrent calls complete in.
    std::vector<Comment> generate_batch(const VideoContext& context, const BatchRequest& request);

  private:
    std::string complete_body(const gateway::ChatExchange& exchange);
    Comment finish(Comment comment);

    gateway::ChatModel& chat_;
    EngineSettings settings_;
};

/// Indices of the primaries that receive a thread comment, in thread order.
std::vector<std::size_t> choose_thread_parents(const CommentBatchPlan& plan, std::uint64_t seed,
                                               std::string_view video_id, std::uint64_t batch_index);

}  // namespace commentsim::comments
