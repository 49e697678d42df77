#include "commentsim/comments/comments.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/util/hash.hpp"
#include "commentsim/util/rng.hpp"
#include "commentsim/util/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <mutex>
#include <thread>
#include <unordered_set>

#include <fmt/format.h>

namespace commentsim::comments {

std::string_view to_string(CommentKind kind) noexcept {
    switch (kind) {
        case CommentKind::primary: return "primary";
        case CommentKind::thread: return "thread";
        case CommentKind::reply: return "reply";
        case CommentKind::custom_persona: return "custom_persona";
        case CommentKind::creator_reply: return "creator_reply";
    }
    return "primary";
}

CommentKind comment_kind_from_string(std::string_view text) {
    for (auto k : {CommentKind::primary, CommentKind::thread, CommentKind::reply,
                   CommentKind::custom_persona, CommentKind::creator_reply}) {
        if (to_string(k) == text) return k;
    }
    throw Error(ErrorKind::input, fmt::format("unknown comment kind '{}'", text));
}

void validate_comment(const Comment& c) {
    if (util::is_blank(c.body)) {
        throw Error(ErrorKind::validation, "comment body must not be empty");
    }
    if (util::utf8_length(c.body) > kMaxBodyChars) {
        throw Error(ErrorKind::validation, "comment body exceeds 2000 characters");
    }
    const bool root_kind = c.kind == CommentKind::primary || c.kind == CommentKind::custom_persona;
    if (root_kind && c.parent_id) {
        throw Error(ErrorKind::integrity, fmt::format("{} comment {} must not have a parent",
                                                      to_string(c.kind), c.comment_id));
    }
    if (!root_kind && !c.parent_id) {
        throw Error(ErrorKind::integrity,
                    fmt::format("{} comment {} needs a parent", to_string(c.kind), c.comment_id));
    }
}

CommentBatchPlan plan_batch(std::size_t total) {
    if (total == 0) {
        throw Error(ErrorKind::validation, "batch size must be at least 1");
    }
    // round(0.7 * total), half up, in integer arithmetic.
    const std::size_t primary = std::max<std::size_t>(1, (7 * total + 5) / 10);
    return {total, primary, total - primary};
}

IdentityPool make_identity_pool(std::vector<std::string> names, std::uint64_t rng_seed) {
    std::vector<std::string> distinct;
    std::unordered_set<std::string> seen;
    for (auto& n : names) {
        std::string name(util::trim(n));
        if (name.empty()) continue;
        if (seen.insert(name).second) distinct.push_back(std::move(name));
    }
    if (distinct.empty()) {
        throw Error(ErrorKind::input, "identity pool needs at least one name");
    }
    return {std::move(distinct), rng_seed};
}

std::vector<std::string> parse_names(std::string_view content) {
    std::vector<std::string> names;
    for (const auto& line : util::split(content, '\n')) {
        const auto trimmed = util::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        const auto fields = util::split(trimmed, ',');
        std::string name(util::trim(fields.front()));
        if (!name.empty()) names.push_back(std::move(name));
    }
    return names;
}

std::vector<std::string> load_names(const std::filesystem::path& path) {
    auto names = parse_names(util::read_text(path));
    if (names.empty()) {
        throw Error(ErrorKind::input, "names file is empty: " + path.string());
    }
    return names;
}

const std::vector<std::string>& builtin_names() {
    static const std::vector<std::string> names = {
        "Olivia", "Liam", "Emma", "Noah", "Charlotte", "Oliver", "Amelia", "James", "Sophia",
        "Elijah", "Mia", "William", "Isabella", "Henry", "Ava", "Lucas", "Evelyn", "Benjamin",
        "Luna", "Theodore", "Harper", "Mateo", "Sofia", "Levi", "Scarlett", "Sebastian", "Elizabeth",
        "Daniel", "Eleanor", "Jack", "Emily", "Michael", "Chloe", "Alexander", "Mila", "Owen",
        "Violet", "Asher", "Penelope", "Samuel", "Gianna", "Ethan", "Aria", "Leo", "Abigail",
        "Jackson", "Ella", "Mason", "Avery", "Ezra", "Hazel", "John", "Nora", "Hudson", "Layla",
        "Luca", "Lily", "Aiden", "Aurora", "Joseph", "Nova", "David", "Ellie", "Jacob", "Madison",
        "Logan", "Grace", "Luke", "Isla", "Julian", "Willow", "Gabriel", "Zoe", "Grayson", "Riley",
        "Wyatt", "Stella", "Matthew", "Eliana", "Maverick", "Ivy", "Dylan", "Victoria", "Isaac",
        "Emilia", "Elias", "Zoey", "Anthony", "Naomi", "Thomas", "Hannah", "Jayden", "Lucy",
        "Carter", "Elena", "Santiago", "Lillian", "Ezekiel", "Maya", "Charles", "Leah"};
    return names;
}

Identity assign_identity(const IdentityPool& pool, std::string_view comment_id) {
    if (pool.names.empty()) {
        throw Error(ErrorKind::input, "identity pool is empty");
    }
    auto rng = util::DeterministicRng::from_key(fmt::format("{}:{}", pool.rng_seed, comment_id));
    const auto index = rng.uniform_index(pool.names.size());
    return {pool.names[static_cast<std::size_t>(index)], util::content_hash(comment_id)};
}

std::string make_comment_id(std::string_view video_id, std::string_view scope, std::uint64_t ordinal) {
    return "c_" + util::content_hash(fmt::format("{}/{}/{}", video_id, scope, ordinal));
}

VideoContext make_context(const video::VideoAsset& asset, summary::VideoSummary summary,
                          std::string thumbnail_description) {
    VideoContext c;
    c.video_id = asset.video_id;
    c.title = asset.title;
    c.description = asset.description;
    c.author = asset.author;
    c.thumbnail_description = std::move(thumbnail_description);
    c.summary = std::move(summary);
    return c;
}

const std::vector<std::string>& default_fewshot() {
    static const std::vector<std::string> examples = {
        "I came for the tutorial and stayed for the bloopers at the end, that last take had me "
        "crying laughing.",
        "2:14 is the exact moment I realized I've been doing this wrong for years. Thank you!",
        "Not gonna lie, I was skeptical at first but the comparison halfway through totally changed "
        "my mind.",
        "Can you do a follow up on the budget version? Not all of us can afford the fancy gear lol",
        "The editing on this keeps getting better every upload. Whoever does your sound design "
        "deserves a raise.",
        "Watched this with my dad and now he wants to try it this weekend. Wish us luck."};
    return examples;
}

std::vector<std::string> load_fewshot(const std::filesystem::path& path) {
    std::vector<std::string> examples;
    for (const auto& line : util::split(util::read_text(path), '\n')) {
        const auto trimmed = util::trim(line);
        if (!trimmed.empty()) examples.emplace_back(trimmed);
    }
    if (examples.empty()) {
        throw Error(ErrorKind::input, "few-shot file has no examples: " + path.string());
    }
    return examples;
}

namespace {

constexpr std::string_view kRoleInstruction =
    "You are a viewer on a popular video-sharing platform. You have just watched a video and you "
    "leave a comment the way real viewers do: casual, specific to what you saw, sometimes funny, "
    "sometimes critical, usually short. Stay in character as the persona you are given. Never "
    "mention that you are an AI or that you were given a persona.";

std::string common_body(const VideoContext& context, const persona::Persona* persona,
                        const PromptSettings& settings) {
    if (settings.fewshot.empty()) {
        throw Error(ErrorKind::config, "few-shot example list must not be empty");
    }
    std::string body = "[COMMENT]\nHere are examples of real viewer comments:\n";
    for (std::size_t i = 0; i < settings.fewshot.size(); ++i) {
        body += fmt::format("{}. {}\n", i + 1, settings.fewshot[i]);
    }
    if (persona) {
        body += "\nYour persona:\n" + persona->text + "\n";
    }
    body += "\nVideo title: " + context.title + "\n";
    body += "Video description: " + (context.description.empty() ? std::string("none") : context.description) + "\n";
    body += "Channel author: " + (context.author.empty() ? std::string("unknown") : context.author) + "\n";
    body += "Thumbnail: " + context.thumbnail_description + "\n";
    body += "\nVideo summary:\n" + context.summary.summary_text + "\n";
    body += "\nKeywords: " + util::join(context.summary.keywords, ", ") + "\n";
    return body;
}

gateway::ChatExchange finish_prompt(std::string body, const PromptSettings& settings) {
    gateway::ChatExchange exchange;
    exchange.system_instruction = std::string(kRoleInstruction);
    exchange.messages.push_back({gateway::Role::user, std::move(body)});
    exchange.temperature = settings.temperature;
    gateway::check_budget(exchange, settings.context_budget);
    return exchange;
}

}  // namespace

gateway::ChatExchange build_primary_prompt(const VideoContext& context,
                                           const persona::Persona* persona,
                                           const PromptSettings& settings) {
    std::string body = common_body(context, persona, settings);
    body += "\nWrite one comment you would post under this video. Reply with the comment text only.";
    return finish_prompt(std::move(body), settings);
}

gateway::ChatExchange build_thread_prompt(const VideoContext& context, const Comment& parent,
                                          const persona::Persona* persona,
                                          const PromptSettings& settings) {
    std::string body = common_body(context, persona, settings);
    body += "\nAnother viewer posted this comment:\n" + parent.body + "\n";
    body += "\nWrite one reply to that comment from your own perspective. Reply with the comment "
            "text only.";
    return finish_prompt(std::move(body), settings);
}

gateway::ChatExchange build_reply_prompt(const VideoContext& context, const Comment& replied,
                                         std::string_view creator_reply,
                                         const persona::Persona* persona,
                                         const PromptSettings& settings) {
    std::string body = common_body(context, persona, settings);
    body += "\nEarlier you posted this comment:\n" + replied.body + "\n";
    body += "\nThe video's creator replied to you:\n" + std::string(creator_reply) + "\n";
    body += "\nWrite your follow-up reply to the creator. Reply with the comment text only.";
    return finish_prompt(std::move(body), settings);
}

std::string clean_body(std::string_view raw) {
    std::string text = util::collapse_whitespace(raw);
    auto is_quote = [](std::string_view s, std::string_view open, std::string_view close) {
        return s.size() >= open.size() + close.size() && s.substr(0, open.size()) == open &&
               s.substr(s.size() - close.size()) == close;
    };
    for (;;) {
        std::string_view v = text;
        if (is_quote(v, "\"", "\"") || is_quote(v, "'", "'")) {
            text = std::string(util::trim(v.substr(1, v.size() - 2)));
        } else if (is_quote(v, "\xE2\x80\x9C", "\xE2\x80\x9D")) {  // curly double quotes
            text = std::string(util::trim(v.substr(3, v.size() - 6)));
        } else {
            break;
        }
    }
    return util::utf8_truncate(text, kMaxBodyChars);
}

CommentEngine::CommentEngine(gateway::ChatModel& chat, EngineSettings settings)
    : chat_(chat), settings_(std::move(settings)) {
    if (!settings_.clock) settings_.clock = std::make_shared<util::SystemClock>();
}

std::string CommentEngine::complete_body(const gateway::ChatExchange& exchange) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        try {
            std::string body = clean_body(chat_.complete(exchange));
            if (!body.empty()) return body;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::generation) throw;
        }
        spdlog::warn("comment generation returned nothing usable (attempt {})", attempt + 1);
    }
    throw Error(ErrorKind::generation, "chat backend returned an empty comment twice");
}

Comment CommentEngine::finish(Comment comment) {
    if (comment.generated()) {
        auto identity = assign_identity(settings_.identities, comment.comment_id);
        comment.author_name = std::move(identity.author_name);
        comment.avatar_seed = std::move(identity.avatar_seed);
    } else {
        comment.author_name = std::string(kCreatorName);
        comment.avatar_seed = util::content_hash(comment.comment_id);
    }
    if (comment.created_at.empty()) comment.created_at = settings_.clock->now_iso8601();
    validate_comment(comment);
    return comment;
}

Comment CommentEngine::generate_primary(const VideoContext& context, const persona::Persona* persona,
                                        std::string comment_id) {
    Comment c;
    c.comment_id = std::move(comment_id);
    c.video_id = context.video_id;
    c.kind = CommentKind::primary;
    c.body = complete_body(build_primary_prompt(context, persona, settings_.prompts));
    if (persona) c.persona_id = persona->persona_id;
    return finish(std::move(c));
}

Comment CommentEngine::generate_thread(const VideoContext& context, const Comment& parent,
                                       const persona::Persona* persona, std::string comment_id) {
    if (parent.kind != CommentKind::primary) {
        throw Error(ErrorKind::input, "thread comments can only answer primary comments");
    }
    Comment c;
    c.comment_id = std::move(comment_id);
    c.video_id = context.video_id;
    c.kind = CommentKind::thread;
    c.parent_id = parent.comment_id;
    c.body = complete_body(build_thread_prompt(context, parent, persona, settings_.prompts));
    if (persona) c.persona_id = persona->persona_id;
    return finish(std::move(c));
}

Comment CommentEngine::generate_reply(const VideoContext& context, const Comment& replied,
                                      const Comment& creator_node, const persona::Persona* persona,
                                      std::string comment_id) {
    if (creator_node.kind != CommentKind::creator_reply ||
        creator_node.parent_id != std::optional<std::string>(replied.comment_id)) {
        throw Error(ErrorKind::input, "reply generation needs the creator's reply to the comment");
    }
    if (persona && replied.persona_id != std::optional<std::string>(persona->persona_id)) {
        throw Error(ErrorKind::input, "reply must use the persona of the comment being answered");
    }
    Comment c;
    c.comment_id = std::move(comment_id);
    c.video_id = context.video_id;
    c.kind = CommentKind::reply;
    c.parent_id = creator_node.comment_id;
    c.body = complete_body(
        build_reply_prompt(context, replied, creator_node.body, persona, settings_.prompts));
    c.persona_id = replied.persona_id;
    return finish(std::move(c));
}

CommentEngine::CustomResult CommentEngine::generate_custom(const VideoContext& context,
                                                           std::string_view persona_text,
                                                           std::string comment_id) {
    persona::Persona p = persona::make_persona(persona_text, persona::PersonaSource::user_defined);
    Comment c;
    c.comment_id = std::move(comment_id);
    c.video_id = context.video_id;
    c.kind = CommentKind::custom_persona;
    c.body = complete_body(build_primary_prompt(context, &p, settings_.prompts));
    c.persona_id = p.persona_id;
    return {std::move(p), finish(std::move(c))};
}

Comment CommentEngine::make_creator_reply(const Comment& parent, std::string_view body,
                                          std::string comment_id) {
    const std::string cleaned = util::collapse_whitespace(body);
    if (cleaned.empty()) {
        throw Error(ErrorKind::validation, "reply text must not be empty");
    }
    Comment c;
    c.comment_id = std::move(comment_id);
    c.video_id = parent.video_id;
    c.kind = CommentKind::creator_reply;
    c.parent_id = parent.comment_id;
    c.body = cleaned;
    return finish(std::move(c));
}

std::vector<std::size_t> choose_thread_parents(const CommentBatchPlan& plan, std::uint64_t seed,
                                               std::string_view video_id, std::uint64_t batch_index) {
    auto rng = util::DeterministicRng::from_key(
        fmt::format("threads:{}:{}:{}", seed, video_id, batch_index));
    return rng.sample_without_replacement(plan.primary_count, plan.thread_count);
}

namespace {

/// Runs job(i) for i in [0, count) on up to `parallelism` threads. The first
/// failure (lowest index) is rethrown after all workers stop.
template <class Job>
void parallel_for(std::size_t count, std::size_t parallelism, Job&& job) {
    if (count == 0) return;
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::mutex mutex;
    std::size_t error_index = count;
    std::exception_ptr error;
    auto worker = [&] {
        for (;;) {
            if (failed.load()) return;
            const auto i = next.fetch_add(1);
            if (i >= count) return;
            try {
                job(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
                failed.store(true);
            }
        }
    };
    const auto workers = std::clamp<std::size_t>(parallelism, 1, count);
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
        worker();
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<Comment> CommentEngine::generate_batch(const VideoContext& context,
                                                   const BatchRequest& request) {
    const auto& plan = request.plan;
    if (plan.primary_count + plan.thread_count != plan.total || plan.primary_count == 0) {
        throw Error(ErrorKind::input, "inconsistent batch plan");
    }
    if (!request.no_persona && request.personas.empty()) {
        throw Error(ErrorKind::input, "no personas available for comment generation");
    }
    const auto persona_at = [&](std::size_t rank) -> const persona::Persona* {
        if (request.no_persona) return nullptr;
        return &request.personas[rank % request.personas.size()];
    };
    const std::string scope = fmt::format("b{}", request.batch_index);
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;
    auto tick = [&] {
        const auto d = done.fetch_add(1) + 1;
        if (request.on_progress) {
            std::lock_guard lock(progress_mutex);
            request.on_progress(d, plan.total);
        }
    };

    // Timestamps are stamped afterwards, in output order, so concurrent
    // completion order never leaks into the result.
    std::vector<Comment> primaries(plan.primary_count);
    parallel_for(plan.primary_count, settings_.parallelism, [&](std::size_t i) {
        Comment c;
        c.comment_id = make_comment_id(context.video_id, scope, i);
        c.video_id = context.video_id;
        c.kind = CommentKind::primary;
        c.created_at = "pending";
        const auto* p = persona_at(i);
        c.body = complete_body(build_primary_prompt(context, p, settings_.prompts));
        if (p) c.persona_id = p->persona_id;
        primaries[i] = finish(std::move(c));
        tick();
    });

    const auto parents = choose_thread_parents(plan, request.seed, context.video_id, request.batch_index);
    std::vector<Comment> threads(plan.thread_count);
    parallel_for(plan.thread_count, settings_.parallelism, [&](std::size_t i) {
        const Comment& parent = primaries[parents[i]];
        const persona::Persona* p = persona_at(plan.primary_count + i);
        if (p && request.personas.size() > 1) {
            std::size_t step = 1;
            while (parent.persona_id == std::optional<std::string>(p->persona_id) &&
                   step < request.personas.size()) {
                p = persona_at(plan.primary_count + i + step);
                ++step;
            }
        }
        Comment c;
        c.comment_id = make_comment_id(context.video_id, scope, plan.primary_count + i);
        c.video_id = context.video_id;
        c.kind = CommentKind::thread;
        c.parent_id = parent.comment_id;
        c.created_at = "pending";
        c.body = complete_body(build_thread_prompt(context, parent, p, settings_.prompts));
        if (p) c.persona_id = p->persona_id;
        threads[i] = finish(std::move(c));
        tick();
    });

    std::vector<Comment> batch;
    batch.reserve(plan.total);
    for (auto& c : primaries) batch.push_back(std::move(c));
    for (auto& c : threads) batch.push_back(std::move(c));
    for (auto& c : batch) c.created_at = settings_.clock->now_iso8601();
    return batch;
}

}  // namespace commentsim::comments
