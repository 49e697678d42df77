#pragma once

#include "commentsim/comments/comments.hpp"
#include "commentsim/persona/persona.hpp"
#include "commentsim/summary/summary.hpp"
#include "commentsim/video/video.hpp"

#include <json.hpp>

#include <vector>

namespace commentsim::pipeline {

using nlohmann::json;

json to_json(const gateway::TranscriptSegment& segment);
gateway::TranscriptSegment segment_from_json(const json& j);

json to_json(const video::FrameCaption& caption);
video::FrameCaption caption_from_json(const json& j);

json to_json(const comments::Comment& comment);
comments::Comment comment_from_json(const json& j);

json to_json(const persona::Persona& persona);
persona::Persona persona_from_json(const json& j);

json to_json(const persona::RankedPersona& ranked);
persona::RankedPersona ranked_from_json(const json& j);

template <class T>
json to_json_array(const std::vector<T>& items) {
    json out = json::array();
    for (const auto& item : items) out.push_back(to_json(item));
    return out;
}

/// Parses a JSON document, turning syntax and schema failures into
/// Error(integrity) that names `what`.
json parse_artifact(std::string_view text, std::string_view what);

/// Runs `fn`, rethrowing nlohmann exceptions as Error(integrity) naming `what`.
template <class Fn>
auto decode_artifact(std::string_view what, Fn&& fn) -> decltype(fn());

}  // namespace commentsim::pipeline

#include "commentsim/error.hpp"

template <class Fn>
auto commentsim::pipeline::decode_artifact(std::string_view what, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::integrity, std::string(what) + " is malformed: " + e.what());
    }
}
