#pragma once

// Slow, obviously-correct reimplementations used to check the library.
// Nothing here shares code with src/ beyond the token type.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

namespace commentsim::testing {

using TokenList = std::vector<std::string>;

/// Every n-gram occurrence in order, as token vectors.
std::vector<TokenList> all_ngrams(const TokenList& tokens, int n);

/// Occurrences of `gram` in `grams`, by linear scan.
std::size_t occurrences(const std::vector<TokenList>& grams, const TokenList& gram);

/// Sentence BLEU with the frozen rules: clipped counts against the max count
/// over references, zero unigram matches -> 0, orders up to min(max_n, |c|),
/// zero counts smoothed to eps/total, closest reference length (shorter on
/// ties) for the brevity penalty. Empty candidate scores 1 if some reference
/// is empty.
double oracle_bleu(const TokenList& candidate, const std::vector<TokenList>& refs, int max_n, double eps = 0.1);

/// Mean over documents of oracle_bleu against all the others.
double oracle_self_bleu(const std::vector<TokenList>& docs, int max_n);

double oracle_rouge_n_precision(const TokenList& comment, const TokenList& reference, int n);

/// Longest common subsequence by memoized recursion from the front.
std::size_t oracle_lcs(const TokenList& a, const TokenList& b);

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b);

using EmbedFn = std::function<std::vector<double>(const std::string&)>;

/// Greedy-matching F1 computed from scratch over every token pair.
double oracle_greedy_f1(const TokenList& a, const TokenList& b, const EmbedFn& embed);

/// Mean F1 over every unordered pair of documents.
double oracle_group_score(const std::vector<TokenList>& docs, const EmbedFn& embed);

/// The mock embedder's published contract, reimplemented: SHA-256 seed,
/// mt19937_64 draws mapped to [-1, 1), unit length.
std::vector<double> oracle_mock_embedding(const std::string& text, int dimension);

struct OracleRanked {
    std::string id;
    double score;
};

/// Brute force: score everything, stable sort by (score desc, id asc), top k,
/// then drop anything below min_score.
std::vector<OracleRanked> oracle_rank(const std::vector<std::pair<std::string, std::vector<double>>>& entries,
                                      const std::vector<double>& query, std::size_t k, double min_score);

/// Random token documents over a small vocabulary (so n-grams collide).
std::vector<TokenList> random_corpus(std::mt19937_64& rng, std::size_t max_docs, std::size_t max_tokens,
                                     std::size_t vocabulary);

std::string join_tokens(const TokenList& tokens);

}  // namespace commentsim::testing
