#include "commentsim/pipeline/serialize.hpp"

namespace commentsim::pipeline {

namespace {

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(); }

std::optional<std::string> read_optional(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

}  // namespace

json to_json(const gateway::TranscriptSegment& s) {
    return {{"start", s.start}, {"end", s.end}, {"text", s.text}};
}

gateway::TranscriptSegment segment_from_json(const json& j) {
    return {j.at("start").get<double>(), j.at("end").get<double>(), j.at("text").get<std::string>()};
}

json to_json(const video::FrameCaption& c) { return {{"timestamp", c.timestamp}, {"text", c.text}}; }

video::FrameCaption caption_from_json(const json& j) {
    return {j.at("timestamp").get<double>(), j.at("text").get<std::string>()};
}

json to_json(const comments::Comment& c) {
    return {{"comment_id", c.comment_id},
            {"video_id", c.video_id},
            {"kind", comments::to_string(c.kind)},
            {"body", c.body},
            {"author_name", c.author_name},
            {"avatar_seed", c.avatar_seed},
            {"persona_id", optional_string(c.persona_id)},
            {"parent_id", optional_string(c.parent_id)},
            {"created_at", c.created_at}};
}

comments::Comment comment_from_json(const json& j) {
    comments::Comment c;
    c.comment_id = j.at("comment_id").get<std::string>();
    c.video_id = j.at("video_id").get<std::string>();
    c.kind = comments::comment_kind_from_string(j.at("kind").get<std::string>());
    c.body = j.at("body").get<std::string>();
    c.author_name = j.at("author_name").get<std::string>();
    c.avatar_seed = j.at("avatar_seed").get<std::string>();
    c.persona_id = read_optional(j, "persona_id");
    c.parent_id = read_optional(j, "parent_id");
    c.created_at = j.at("created_at").get<std::string>();
    return c;
}

json to_json(const persona::Persona& p) {
    return {{"persona_id", p.persona_id}, {"text", p.text}, {"source", persona::to_string(p.source)}};
}

persona::Persona persona_from_json(const json& j) {
    return {j.at("persona_id").get<std::string>(), j.at("text").get<std::string>(),
            persona::persona_source_from_string(j.at("source").get<std::string>())};
}

json to_json(const persona::RankedPersona& r) { return {{"persona_id", r.persona_id}, {"score", r.score}}; }

persona::RankedPersona ranked_from_json(const json& j) {
    return {j.at("persona_id").get<std::string>(), j.at("score").get<double>()};
}

json parse_artifact(std::string_view text, std::string_view what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::integrity, std::string(what) + " is not valid JSON: " + e.what());
    }
}

}  // namespace commentsim::pipeline
