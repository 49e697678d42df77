#include "oracles.hpp"

#include <openssl/sha.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace commentsim::testing {

std::vector<TokenList> all_ngrams(const TokenList& tokens, int n) {
    std::vector<TokenList> out;
    const auto un = static_cast<std::size_t>(n);
    for (std::size_t i = 0; i + un <= tokens.size(); ++i) {
        out.emplace_back(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                         tokens.begin() + static_cast<std::ptrdiff_t>(i + un));
    }
    return out;
}

std::size_t occurrences(const std::vector<TokenList>& grams, const TokenList& gram) {
    std::size_t k = 0;
    for (const auto& g : grams) k += (g == gram) ? 1 : 0;
    return k;
}

namespace {

std::size_t clipped_matches(const TokenList& candidate, const std::vector<TokenList>& refs, int n) {
    const auto cand = all_ngrams(candidate, n);
    std::vector<std::vector<TokenList>> ref_grams;
    for (const auto& r : refs) ref_grams.push_back(all_ngrams(r, n));
    std::vector<TokenList> seen;
    std::size_t total = 0;
    for (const auto& g : cand) {
        if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
        seen.push_back(g);
        std::size_t best_ref = 0;
        for (const auto& rg : ref_grams) best_ref = std::max(best_ref, occurrences(rg, g));
        total += std::min(occurrences(cand, g), best_ref);
    }
    return total;
}

}  // namespace

double oracle_bleu(const TokenList& candidate, const std::vector<TokenList>& refs, int max_n, double eps) {
    if (candidate.empty()) {
        for (const auto& r : refs) {
            if (r.empty()) return 1.0;
        }
        return 0.0;
    }
    if (clipped_matches(candidate, refs, 1) == 0) return 0.0;
    const int orders = std::min<int>(max_n, static_cast<int>(candidate.size()));
    double product_log = 0.0;
    for (int n = 1; n <= orders; ++n) {
        const double total = static_cast<double>(candidate.size() - static_cast<std::size_t>(n) + 1);
        const double matches = static_cast<double>(clipped_matches(candidate, refs, n));
        product_log += std::log(matches > 0 ? matches / total : eps / total);
    }
    std::size_t ref_len = refs.front().size();
    for (const auto& r : refs) {
        const auto d = std::llabs(static_cast<long long>(r.size()) - static_cast<long long>(candidate.size()));
        const auto bd = std::llabs(static_cast<long long>(ref_len) - static_cast<long long>(candidate.size()));
        if (d < bd || (d == bd && r.size() < ref_len)) ref_len = r.size();
    }
    const double c = static_cast<double>(candidate.size());
    const double r = static_cast<double>(ref_len);
    const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(product_log / orders);
}

double oracle_self_bleu(const std::vector<TokenList>& docs, int max_n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        std::vector<TokenList> refs;
        for (std::size_t j = 0; j < docs.size(); ++j) {
            if (j != i) refs.push_back(docs[j]);
        }
        sum += oracle_bleu(docs[i], refs, max_n);
    }
    return sum / static_cast<double>(docs.size());
}

double oracle_rouge_n_precision(const TokenList& comment, const TokenList& reference, int n) {
    const auto cand = all_ngrams(comment, n);
    if (cand.empty()) return 0.0;
    const auto ref = all_ngrams(reference, n);
    std::vector<TokenList> seen;
    std::size_t overlap = 0;
    for (const auto& g : cand) {
        if (std::find(seen.begin(), seen.end(), g) != seen.end()) continue;
        seen.push_back(g);
        overlap += std::min(occurrences(cand, g), occurrences(ref, g));
    }
    return static_cast<double>(overlap) / static_cast<double>(cand.size());
}

std::size_t oracle_lcs(const TokenList& a, const TokenList& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
        if (i == a.size() || j == b.size()) return 0;
        if (auto it = memo.find({i, j}); it != memo.end()) return it->second;
        std::size_t best = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
        memo[{i, j}] = best;
        return best;
    };
    return go(0, 0);
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    long double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<long double>(a[i]) * b[i];
        na += static_cast<long double>(a[i]) * a[i];
        nb += static_cast<long double>(b[i]) * b[i];
    }
    return static_cast<double>(dot / std::sqrt(na * nb));
}

double oracle_greedy_f1(const TokenList& a, const TokenList& b, const EmbedFn& embed) {
    if (a.empty() || b.empty()) return 0.0;
    auto sim = [&](const std::string& x, const std::string& y) {
        return x == y ? 1.0 : oracle_cosine(embed(x), embed(y));
    };
    auto directional = [&](const TokenList& from, const TokenList& to) {
        double total = 0.0;
        for (const auto& x : from) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& y : to) best = std::max(best, sim(x, y));
            total += best;
        }
        return total / static_cast<double>(from.size());
    };
    const double p = directional(a, b);
    const double r = directional(b, a);
    if (p <= 0.0 || r <= 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

double oracle_group_score(const std::vector<TokenList>& docs, const EmbedFn& embed) {
    double sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        for (std::size_t j = i + 1; j < docs.size(); ++j) {
            sum += oracle_greedy_f1(docs[i], docs[j], embed);
            ++pairs;
        }
    }
    return sum / static_cast<double>(pairs);
}

std::vector<double> oracle_mock_embedding(const std::string& text, int dimension) {
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(text.data()), text.size(), digest);
    std::uint64_t seed = 0;
    for (int i = 0; i < 8; ++i) seed = (seed << 8) | digest[i];
    std::mt19937_64 engine(seed);
    std::vector<double> v(static_cast<std::size_t>(dimension));
    double norm = 0.0;
    for (auto& x : v) {
        x = 2.0 * (static_cast<double>(engine() >> 11) / 9007199254740992.0) - 1.0;
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    return v;
}

std::vector<OracleRanked> oracle_rank(const std::vector<std::pair<std::string, std::vector<double>>>& entries,
                                      const std::vector<double>& query, std::size_t k, double min_score) {
    std::vector<OracleRanked> all;
    for (const auto& [id, vec] : entries) all.push_back({id, oracle_cosine(vec, query)});
    std::stable_sort(all.begin(), all.end(), [](const OracleRanked& a, const OracleRanked& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    std::vector<OracleRanked> kept;
    for (const auto& r : all) {
        if (r.score >= min_score) kept.push_back(r);
    }
    return kept;
}

std::vector<TokenList> random_corpus(std::mt19937_64& rng, std::size_t max_docs, std::size_t max_tokens,
                                     std::size_t vocabulary) {
    std::uniform_int_distribution<std::size_t> doc_count(2, max_docs);
    std::uniform_int_distribution<std::size_t> token_count(1, max_tokens);
    std::uniform_int_distribution<std::size_t> word(0, vocabulary - 1);
    std::vector<TokenList> docs(doc_count(rng));
    for (auto& d : docs) {
        const auto len = token_count(rng);
        for (std::size_t i = 0; i < len; ++i) d.push_back("w" + std::to_string(word(rng)));
    }
    return docs;
}

std::string join_tokens(const TokenList& tokens) {
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty()) out += ' ';
        out += t;
    }
    return out;
}

}  // namespace commentsim::testing
