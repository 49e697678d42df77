#pragma once

#include "commentsim/gateway/gateway.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace commentsim::persona {

inline constexpr std::size_t kMaxPersonaChars = 1000;
inline constexpr std::size_t kDefaultTopK = 30;

enum class PersonaSource { dataset, user_defined };

std::string_view to_string(PersonaSource source) noexcept;
PersonaSource persona_source_from_string(std::string_view text);

struct Persona {
    std::string persona_id;
    std::string text;
    PersonaSource source = PersonaSource::dataset;

    friend bool operator==(const Persona&, const Persona&) = default;
};

/// "p_" + content hash of the text.
std::string derive_persona_id(std::string_view text);

/// Validates length (1..1000 characters) and builds a persona with a derived id.
Persona make_persona(std::string_view text, PersonaSource source);

/// One persona per nonblank line: either flat text (sentences separated by
/// periods) or a JSON object {"persona_id"?, "text"}. Lines that resolve to
/// an id already seen collapse into the first occurrence.
std::vector<Persona> parse_personas(std::string_view content);
std::vector<Persona> load_personas(const std::filesystem::path& path);

/// JSON-lines writer matching what load_personas accepts.
void save_personas(const std::filesystem::path& path, std::span<const Persona> personas);

/// dot(a, b) / (|a| |b|), clamped to [-1, 1].
double cosine_similarity(const gateway::EmbeddingVector& a, const gateway::EmbeddingVector& b);

struct IndexEntry {
    std::string persona_id;
    gateway::EmbeddingVector vector;
};

/// Embedded persona corpus. Immutable once built.
class PersonaIndex {
  public:
    static constexpr int kFormatVersion = 1;

    PersonaIndex(std::string model_name, std::vector<IndexEntry> entries);

    const std::string& model_name() const noexcept { return model_name_; }
    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }
    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }

    /// JSON document; byte-identical for identical inputs.
    std::string serialize() const;
    /// Throws Error(stale_index) when the stored model differs from `expected_model`.
    static PersonaIndex deserialize(std::string_view json_text, const std::string& expected_model);

    void save(const std::filesystem::path& path) const;
    static PersonaIndex load(const std::filesystem::path& path, const std::string& expected_model);

  private:
    std::string model_name_;
    std::size_t dimension_ = 0;
    std::vector<IndexEntry> entries_;
};

/// Embeds every persona. Failure names the persona and nothing is returned.
PersonaIndex build_index(std::span<const Persona> personas, gateway::Embedder& embedder);

struct RankedPersona {
    std::string persona_id;
    double score = 0.0;

    friend bool operator==(const RankedPersona&, const RankedPersona&) = default;
};

/// Keywords joined with ", " and embedded once.
std::string keyword_query(std::span<const std::string> keywords);

struct RankOptions {
    std::size_t k = kDefaultTopK;
    /// Personas scoring below this are dropped even inside the top k.
    double min_score = 0.0;
};

/// Exhaustive scan: score desc, persona_id asc on ties; top k, then the floor.
/// k larger than the index is clamped with a warning.
std::vector<RankedPersona> rank_personas(const PersonaIndex& index,
                                         std::span<const std::string> keywords,
                                         gateway::Embedder& embedder,
                                         const RankOptions& options = {});

/// Ranking against an already-embedded query (what rank_personas does after
/// its one embedding call).
std::vector<RankedPersona> rank_by_vector(const PersonaIndex& index,
                                          const gateway::EmbeddingVector& query,
                                          const RankOptions& options);

}  // namespace commentsim::persona
