#pragma once

#include "commentsim/gateway/gateway.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace commentsim::metrics {

using Tokens = std::vector<std::string>;

/// Lowercased word tokens. Word characters are letters and digits from the
/// Latin, Greek, Cyrillic, Hangul and combining-mark blocks; each CJK
/// ideograph or kana is its own token. An apostrophe (' or U+2019) between
/// two word characters stays inside the word as '. Everything else separates.
Tokens tokenize(std::string_view text);

struct CommentCorpus {
    std::string label;
    std::vector<std::string> comments;
};

/// Nonempty label, at least one comment, no blank bodies.
void validate_corpus(const CommentCorpus& corpus);

/// One comment per line, or JSON lines with a "body" field.
CommentCorpus load_corpus(std::string label, const std::filesystem::path& path);

/// Mean length in Unicode code points.
double average_length(const CommentCorpus& corpus);

struct DistinctResult {
    double distinct = 0.0;     ///< mean distinct n-grams per comment
    double normalized = 0.0;   ///< mean of distinct / total (0 below n tokens)
};

DistinctResult distinct_ngrams(std::span<const std::string> comments, int n);

inline constexpr double kBleuEpsilon = 0.1;

/// BLEU of one tokenized candidate against references: clipped precision
/// per order, geometric mean, brevity penalty against the closest reference
/// length (shorter on ties). No unigram match gives 0; other zero precisions
/// become epsilon / total. Orders longer than the candidate are left out of
/// the mean. An empty candidate scores 1 when some reference is empty too.
double sentence_bleu(const Tokens& candidate, std::span<const Tokens> references, int max_n = 4);

struct SelfBleuOptions {
    int max_n = 4;
    /// Score a seeded subset of this many comments (among themselves).
    std::optional<std::size_t> subsample;
    std::uint64_t seed = 0;
};

/// Mean BLEU of each comment against all the others. Throws input error for
/// fewer than two comments.
double self_bleu(std::span<const std::string> comments, const SelfBleuOptions& options = {});
double self_bleu_tokens(std::span<const Tokens> docs, int max_n = 4);

/// Comments sorted bytewise; every seeded draw happens on this order.
std::vector<std::string> canonical_order(std::span<const std::string> comments);

/// Token embeddings, fetched once per distinct token.
class TokenEmbeddingCache {
  public:
    explicit TokenEmbeddingCache(gateway::Embedder& embedder) : embedder_(embedder) {}
    const gateway::EmbeddingVector& get(const std::string& token);
    std::string model_name() const { return embedder_.model_name(); }

  private:
    gateway::Embedder& embedder_;
    std::map<std::string, gateway::EmbeddingVector> cache_;
};

struct GreedyMatch {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Greedy-matching score of candidate against reference: precision is the
/// mean over candidate tokens of the best cosine against reference tokens,
/// recall the converse. F1 is 0 unless both are positive; empty inputs give 0.
GreedyMatch greedy_match(const Tokens& candidate, const Tokens& reference, TokenEmbeddingCache& cache);

struct PairSamplingOptions {
    std::size_t max_pairs = 1000;
    std::uint64_t seed = 0;
};

struct GroupScore {
    double value = 0.0;
    std::size_t pairs = 0;
};

/// Mean greedy-match F1 over comment pairs (all pairs when they fit under
/// max_pairs, otherwise a seeded sample). Needs at least two comments.
GroupScore embedding_group_score(std::span<const std::string> comments, gateway::Embedder& embedder,
                                 const PairSamplingOptions& options = {});

/// Mean greedy-match F1 of each comment against the summary.
double embedding_relevance(std::span<const std::string> comments, std::string_view summary,
                           gateway::Embedder& embedder);

double rouge_n_precision(std::string_view comment, std::string_view reference, int n);
double rouge_l_precision(std::string_view comment, std::string_view reference);
double rouge_n_precision_tokens(const Tokens& comment, const Tokens& reference, int n);
double rouge_l_precision_tokens(const Tokens& comment, const Tokens& reference);
std::size_t lcs_length(const Tokens& a, const Tokens& b);

gateway::ChatExchange build_judge_prompt(std::string_view comment, std::string_view summary);

/// A bare integer 0..100 (surrounding whitespace and a trailing period are
/// tolerated). Anything else is nullopt.
std::optional<int> parse_judge_score(std::string_view reply);

/// One retry on an unusable reply, then Error(scoring).
int llm_relevance(std::string_view comment, std::string_view summary, gateway::ChatModel& judge);

struct MetricReport {
    std::string corpus_label;
    std::string metric_name;
    double value = 0.0;
    std::optional<double> normalized_value;
    std::size_t sample_size = 0;
    nlohmann::json params = nlohmann::json::object();
};

struct EvalConfig {
    std::vector<int> distinct_orders{1, 2, 3, 4};
    int bleu_max_n = 4;
    /// Equalized Self-BLEU subsample; defaults to the smallest corpus size.
    std::optional<std::size_t> equalized_size;
    std::uint64_t seed = 0;
    std::size_t max_pairs = 1000;
    /// Comments per corpus sent to each judge (seeded subset).
    std::size_t judge_sample = 100;
};

struct EvalBackends {
    gateway::Embedder* embedder = nullptr;           ///< embedding metrics skipped when null
    std::vector<gateway::ChatModel*> judges;         ///< one report row per judge
};

/// Full metric battery per corpus. A blank summary skips the relevance
/// metrics (with a warning).
std::vector<MetricReport> evaluate(std::span<const CommentCorpus> corpora, std::string_view summary,
                                   const EvalConfig& config, const EvalBackends& backends);

/// {"rows": [...], "table": {"columns": [...], "rows": [[...]]}}.
nlohmann::json report_to_json(std::span<const MetricReport> reports);

/// Pivot layout: Group, one column per corpus, params. First row is
/// "Average Length", then one row per metric (normalized values get their
/// own row), then "Sample Size".
std::string report_to_csv(std::span<const MetricReport> reports);

/// Writes JSON or CSV by extension.
void write_report(const std::filesystem::path& path, std::span<const MetricReport> reports);

struct WilcoxonResult {
    double statistic = 0.0;  ///< min(W+, W-)
    std::size_t n = 0;       ///< nonzero differences
    double p_value = 1.0;    ///< two-sided
    bool exact = false;
};

/// Paired signed-rank test. Zero differences are dropped and tied ranks
/// averaged. Exact null distribution for up to 50 pairs without ties or
/// zeros; with ties or zeros, every sign flip is enumerated for up to 13
/// pairs; otherwise the normal approximation with tie correction.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y);

struct PairwiseComparison {
    std::string a;
    std::string b;
    WilcoxonResult test;
    double adjusted_p = 1.0;  ///< Bonferroni
    bool significant = false;
};

/// Every pair of columns, Bonferroni-corrected over the number of pairs.
std::vector<PairwiseComparison> compare_paired(const std::map<std::string, std::vector<double>>& columns,
                                               double alpha = 0.05);

}  // namespace commentsim::metrics
