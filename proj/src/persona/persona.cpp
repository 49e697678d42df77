#include "commentsim/persona/persona.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/util/hash.hpp"
#include "commentsim/util/text.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <fmt/format.h>

namespace commentsim::persona {
using nlohmann::json;

std::string_view to_string(PersonaSource source) noexcept {
    return source == PersonaSource::dataset ? "dataset" : "user_defined";
}

PersonaSource persona_source_from_string(std::string_view text) {
    if (text == "dataset") return PersonaSource::dataset;
    if (text == "user_defined") return PersonaSource::user_defined;
    throw Error(ErrorKind::input, fmt::format("unknown persona source '{}'", text));
}

std::string derive_persona_id(std::string_view text) { return "p_" + util::content_hash(text); }

Persona make_persona(std::string_view text, PersonaSource source) {
    const std::string cleaned(util::trim(text));
    if (cleaned.empty()) {
        throw Error(ErrorKind::validation, "persona text must not be empty");
    }
    if (util::utf8_length(cleaned) > kMaxPersonaChars) {
        throw Error(ErrorKind::validation,
                    fmt::format("persona text exceeds {} characters", kMaxPersonaChars));
    }
    return {derive_persona_id(cleaned), cleaned, source};
}

std::vector<Persona> parse_personas(std::string_view content) {
    std::vector<Persona> personas;
    std::unordered_set<std::string> seen;
    std::size_t line_number = 0;
    for (const auto& raw_line : util::split(content, '\n')) {
        ++line_number;
        const auto line = util::trim(raw_line);
        if (line.empty()) continue;
        Persona p;
        try {
            if (line.front() == '{') {
                json doc;
                try {
                    doc = json::parse(line);
                } catch (const json::parse_error& e) {
                    throw Error(ErrorKind::input,
                                fmt::format("malformed JSON on line {}: {}", line_number, e.what()));
                }
                if (!doc.contains("text") || !doc["text"].is_string()) {
                    throw Error(ErrorKind::input,
                                fmt::format("line {} has no string \"text\" field", line_number));
                }
                const auto source = doc.contains("source")
                                        ? persona_source_from_string(doc["source"].get<std::string>())
                                        : PersonaSource::dataset;
                p = make_persona(doc["text"].get<std::string>(), source);
                if (doc.contains("persona_id") && doc["persona_id"].is_string() &&
                    !doc["persona_id"].get<std::string>().empty()) {
                    p.persona_id = doc["persona_id"].get<std::string>();
                }
            } else {
                p = make_persona(line, PersonaSource::dataset);
            }
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::validation) {
                throw Error(ErrorKind::input, fmt::format("line {}: {}", line_number, e.what()));
            }
            throw;
        }
        if (seen.insert(p.persona_id).second) {
            personas.push_back(std::move(p));
        }
    }
    if (personas.empty()) {
        throw Error(ErrorKind::input, "persona file contains no personas");
    }
    return personas;
}

std::vector<Persona> load_personas(const std::filesystem::path& path) {
    return parse_personas(util::read_text(path));
}

void save_personas(const std::filesystem::path& path, std::span<const Persona> personas) {
    std::string out;
    for (const auto& p : personas) {
        json row = {{"persona_id", p.persona_id}, {"text", p.text}, {"source", to_string(p.source)}};
        out += row.dump() + "\n";
    }
    util::write_atomic(path, out);
}

double cosine_similarity(const gateway::EmbeddingVector& a, const gateway::EmbeddingVector& b) {
    if (a.dimension() != b.dimension()) {
        throw Error(ErrorKind::input, fmt::format("cosine_similarity: dimension mismatch ({} vs {})",
                                                  a.dimension(), b.dimension()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw Error(ErrorKind::input, "cosine_similarity: zero vector");
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

PersonaIndex::PersonaIndex(std::string model_name, std::vector<IndexEntry> entries)
    : model_name_(std::move(model_name)), entries_(std::move(entries)) {
    std::unordered_set<std::string> ids;
    for (const auto& e : entries_) {
        e.vector.validate();
        if (dimension_ == 0) dimension_ = e.vector.dimension();
        if (e.vector.dimension() != dimension_) {
            throw Error(ErrorKind::integrity, "persona index vectors have mixed dimensions");
        }
        if (!ids.insert(e.persona_id).second) {
            throw Error(ErrorKind::integrity, "duplicate persona id in index: " + e.persona_id);
        }
    }
}

std::string PersonaIndex::serialize() const {
    json rows = json::array();
    for (const auto& e : entries_) {
        rows.push_back({{"persona_id", e.persona_id}, {"vector", e.vector.values}});
    }
    json doc = {{"format", "commentsim.persona-index"},
                {"version", kFormatVersion},
                {"model_name", model_name_},
                {"dimension", dimension_},
                {"entries", std::move(rows)}};
    return doc.dump() + "\n";
}

PersonaIndex PersonaIndex::deserialize(std::string_view json_text, const std::string& expected_model) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::input, std::string("persona index is not valid JSON: ") + e.what());
    }
    try {
        if (doc.at("format").get<std::string>() != "commentsim.persona-index") {
            throw Error(ErrorKind::input, "not a persona index file");
        }
        const int version = doc.at("version").get<int>();
        if (version != kFormatVersion) {
            throw Error(ErrorKind::input, fmt::format("unsupported persona index version {}", version));
        }
        const auto model = doc.at("model_name").get<std::string>();
        if (model != expected_model) {
            throw Error(ErrorKind::stale_index,
                        fmt::format("persona index was built with model '{}' but '{}' is configured; "
                                    "rebuild the index",
                                    model, expected_model));
        }
        std::vector<IndexEntry> entries;
        for (const auto& row : doc.at("entries")) {
            entries.push_back({row.at("persona_id").get<std::string>(),
                               {row.at("vector").get<std::vector<double>>()}});
        }
        PersonaIndex index(model, std::move(entries));
        if (!index.empty() && index.dimension() != doc.at("dimension").get<std::size_t>()) {
            throw Error(ErrorKind::integrity, "persona index dimension field does not match its rows");
        }
        return index;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::input, std::string("persona index is malformed: ") + e.what());
    }
}

void PersonaIndex::save(const std::filesystem::path& path) const {
    util::write_atomic(path, serialize());
}

PersonaIndex PersonaIndex::load(const std::filesystem::path& path, const std::string& expected_model) {
    return deserialize(util::read_text(path), expected_model);
}

PersonaIndex build_index(std::span<const Persona> personas, gateway::Embedder& embedder) {
    if (personas.empty()) {
        throw Error(ErrorKind::input, "cannot build an index from zero personas");
    }
    std::vector<IndexEntry> entries;
    entries.reserve(personas.size());
    for (const auto& p : personas) {
        try {
            entries.push_back({p.persona_id, embedder.embed(p.text)});
        } catch (const Error& e) {
            throw Error(e.kind(), fmt::format("embedding persona {} failed: {}", p.persona_id, e.what()));
        }
    }
    return PersonaIndex(embedder.model_name(), std::move(entries));
}

std::string keyword_query(std::span<const std::string> keywords) {
    return util::join(std::vector<std::string>(keywords.begin(), keywords.end()), ", ");
}

std::vector<RankedPersona> rank_by_vector(const PersonaIndex& index,
                                          const gateway::EmbeddingVector& query,
                                          const RankOptions& options) {
    if (index.empty()) {
        throw Error(ErrorKind::input, "persona index is empty");
    }
    if (options.k == 0) {
        throw Error(ErrorKind::input, "k must be positive");
    }
    std::size_t k = options.k;
    if (k > index.size()) {
        spdlog::warn("requested top {} personas but the index holds {}; clamping", k, index.size());
        k = index.size();
    }
    std::vector<RankedPersona> scored;
    scored.reserve(index.size());
    for (const auto& entry : index.entries()) {
        scored.push_back({entry.persona_id, cosine_similarity(entry.vector, query)});
    }
    auto better = [](const RankedPersona& a, const RankedPersona& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.persona_id < b.persona_id;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), better);
    scored.resize(k);
    std::erase_if(scored, [&](const RankedPersona& r) { return r.score < options.min_score; });
    return scored;
}

std::vector<RankedPersona> rank_personas(const PersonaIndex& index,
                                         std::span<const std::string> keywords,
                                         gateway::Embedder& embedder, const RankOptions& options) {
    if (keywords.empty()) {
        throw Error(ErrorKind::input, "rank_personas needs at least one keyword");
    }
    return rank_by_vector(index, embedder.embed(keyword_query(keywords)), options);
}

}  // namespace commentsim::persona
