#include "commentsim/metrics/metrics.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/util/rng.hpp"
#include "commentsim/util/text.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include <fmt/format.h>

namespace commentsim::metrics {
using nlohmann::json;

namespace {

// ---- tokenizer ------------------------------------------------------------

constexpr char32_t kInvalid = 0xFFFD;

std::vector<char32_t> decode_utf8(std::string_view s) {
    std::vector<char32_t> out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        int extra = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            extra = 1;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            extra = 2;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            extra = 3;
            cp = b0 & 0x07;
        } else {
            out.push_back(kInvalid);
            ++i;
            continue;
        }
        if (i + static_cast<std::size_t>(extra) >= s.size()) {
            out.push_back(kInvalid);
            ++i;
            continue;
        }
        bool ok = true;
        for (int k = 1; k <= extra; ++k) {
            const auto b = static_cast<unsigned char>(s[i + static_cast<std::size_t>(k)]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        if (!ok) {
            out.push_back(kInvalid);
            ++i;
            continue;
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(extra) + 1;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

bool is_cjk(char32_t c) {
    return (c >= 0x3040 && c <= 0x30FF) || (c >= 0x3400 && c <= 0x4DBF) ||
           (c >= 0x4E00 && c <= 0x9FFF) || (c >= 0xF900 && c <= 0xFAFF);
}

bool is_word(char32_t c) {
    if (c < 0x80) return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
    if (c >= 0xC0 && c <= 0x24F) return c != 0xD7 && c != 0xF7;
    if (c == 0xAA || c == 0xB5 || c == 0xBA) return true;
    if (c >= 0x300 && c <= 0x36F) return true;              // combining marks
    if (c >= 0x370 && c <= 0x3FF) return c != 0x37E && c != 0x387;
    if (c >= 0x400 && c <= 0x52F) return c < 0x482 || c > 0x489;
    if (c >= 0x1E00 && c <= 0x1FFF) return true;            // Latin/Greek extended
    if (c >= 0xAC00 && c <= 0xD7AF) return true;            // Hangul syllables
    return false;
}

char32_t to_lower(char32_t c) {
    if (c >= 'A' && c <= 'Z') return c + 0x20;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
    if (c >= 0x100 && c <= 0x137) return c | 1;
    if ((c >= 0x139 && c <= 0x148) || (c >= 0x179 && c <= 0x17E)) return (c & 1) ? c + 1 : c;
    if (c >= 0x14A && c <= 0x177) return c | 1;
    if (c >= 0x391 && c <= 0x3AB && c != 0x3A2) return c + 0x20;
    if (c >= 0x410 && c <= 0x42F) return c + 0x20;
    if (c >= 0x400 && c <= 0x40F) return c + 0x50;
    return c;
}

std::string ngram_key(const Tokens& tokens, std::size_t start, int n) {
    std::string key;
    for (int k = 0; k < n; ++k) {
        if (k) key.push_back('\x1f');
        key += tokens[start + static_cast<std::size_t>(k)];
    }
    return key;
}

std::unordered_map<std::string, std::size_t> ngram_counts(const Tokens& tokens, int n) {
    std::unordered_map<std::string, std::size_t> counts;
    if (tokens.size() < static_cast<std::size_t>(n)) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        ++counts[ngram_key(tokens, i, n)];
    }
    return counts;
}

void check_order(int n, int max) {
    if (n < 1 || n > max) {
        throw Error(ErrorKind::input, fmt::format("n-gram order must be in 1..{} (got {})", max, n));
    }
}

std::size_t ngram_total(std::size_t length, int n) {
    return length >= static_cast<std::size_t>(n) ? length - static_cast<std::size_t>(n) + 1 : 0;
}

/// BLEU from per-order clipped counts, shared by the direct and fast paths.
double combine_bleu(const std::vector<std::size_t>& clipped, std::size_t hyp_len, std::size_t ref_len,
                    int max_n) {
    const int orders = std::min<int>(max_n, static_cast<int>(hyp_len));
    if (clipped[0] == 0) return 0.0;
    double log_sum = 0.0;
    for (int n = 1; n <= orders; ++n) {
        const double total = static_cast<double>(ngram_total(hyp_len, n));
        const auto c = clipped[static_cast<std::size_t>(n - 1)];
        const double p = c == 0 ? kBleuEpsilon / total : static_cast<double>(c) / total;
        log_sum += std::log(p);
    }
    const double bp = hyp_len > ref_len
                          ? 1.0
                          : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
    return std::clamp(bp * std::exp(log_sum / orders), 0.0, 1.0);
}

std::size_t closest_length(std::size_t hyp_len, std::span<const std::size_t> lengths) {
    std::size_t best = lengths.front();
    for (auto len : lengths) {
        const auto d = len > hyp_len ? len - hyp_len : hyp_len - len;
        const auto bd = best > hyp_len ? best - hyp_len : hyp_len - best;
        if (d < bd || (d == bd && len < best)) best = len;
    }
    return best;
}

}  // namespace

Tokens tokenize(std::string_view text) {
    const auto cps = decode_utf8(text);
    Tokens tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) tokens.push_back(std::move(current));
        current.clear();
    };
    for (std::size_t i = 0; i < cps.size(); ++i) {
        const char32_t c = cps[i];
        if (is_cjk(c)) {
            flush();
            append_utf8(current, c);
            flush();
        } else if (is_word(c)) {
            append_utf8(current, to_lower(c));
        } else if ((c == U'\'' || c == 0x2019) && !current.empty() && i + 1 < cps.size() &&
                   is_word(cps[i + 1]) && !is_cjk(cps[i + 1])) {
            current.push_back('\'');
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

void validate_corpus(const CommentCorpus& corpus) {
    if (util::is_blank(corpus.label)) {
        throw Error(ErrorKind::input, "corpus label must not be empty");
    }
    if (corpus.comments.empty()) {
        throw Error(ErrorKind::input, fmt::format("corpus '{}' has no comments", corpus.label));
    }
    for (std::size_t i = 0; i < corpus.comments.size(); ++i) {
        if (util::is_blank(corpus.comments[i])) {
            throw Error(ErrorKind::input,
                        fmt::format("corpus '{}' comment {} is empty", corpus.label, i + 1));
        }
    }
}

CommentCorpus load_corpus(std::string label, const std::filesystem::path& path) {
    CommentCorpus corpus{std::move(label), {}};
    std::size_t line_number = 0;
    for (const auto& raw : util::split(util::read_text(path), '\n')) {
        ++line_number;
        const auto line = util::trim(raw);
        if (line.empty()) continue;
        if (line.front() == '{') {
            try {
                const auto doc = json::parse(line);
                corpus.comments.push_back(doc.at("body").get<std::string>());
            } catch (const json::exception& e) {
                throw Error(ErrorKind::input, fmt::format("{} line {}: expected {{\"body\": ...}} ({})",
                                                          path.string(), line_number, e.what()));
            }
        } else {
            corpus.comments.emplace_back(line);
        }
    }
    validate_corpus(corpus);
    return corpus;
}

double average_length(const CommentCorpus& corpus) {
    validate_corpus(corpus);
    double total = 0.0;
    for (const auto& c : corpus.comments) total += static_cast<double>(util::utf8_length(c));
    return total / static_cast<double>(corpus.comments.size());
}

DistinctResult distinct_ngrams(std::span<const std::string> comments, int n) {
    check_order(n, 4);
    if (comments.empty()) return {};
    double distinct = 0.0;
    double normalized = 0.0;
    for (const auto& c : comments) {
        const auto tokens = tokenize(c);
        const auto counts = ngram_counts(tokens, n);
        const auto total = ngram_total(tokens.size(), n);
        distinct += static_cast<double>(counts.size());
        if (total > 0) normalized += static_cast<double>(counts.size()) / static_cast<double>(total);
    }
    const auto size = static_cast<double>(comments.size());
    return {distinct / size, normalized / size};
}

double sentence_bleu(const Tokens& candidate, std::span<const Tokens> references, int max_n) {
    check_order(max_n, 8);
    if (references.empty()) {
        throw Error(ErrorKind::input, "BLEU needs at least one reference");
    }
    if (candidate.empty()) {
        return std::any_of(references.begin(), references.end(), [](const Tokens& r) { return r.empty(); })
                   ? 1.0
                   : 0.0;
    }
    std::vector<std::size_t> clipped(static_cast<std::size_t>(max_n), 0);
    for (int n = 1; n <= max_n; ++n) {
        const auto cand = ngram_counts(candidate, n);
        std::unordered_map<std::string, std::size_t> best;
        for (const auto& ref : references) {
            for (const auto& [g, c] : ngram_counts(ref, n)) {
                auto& b = best[g];
                b = std::max(b, c);
            }
        }
        std::size_t total = 0;
        for (const auto& [g, c] : cand) {
            const auto it = best.find(g);
            if (it != best.end()) total += std::min(c, it->second);
        }
        clipped[static_cast<std::size_t>(n - 1)] = total;
    }
    std::vector<std::size_t> lengths;
    for (const auto& r : references) lengths.push_back(r.size());
    return combine_bleu(clipped, candidate.size(), closest_length(candidate.size(), lengths), max_n);
}

double self_bleu_tokens(std::span<const Tokens> docs, int max_n) {
    check_order(max_n, 8);
    if (docs.size() < 2) {
        throw Error(ErrorKind::input, "Self-BLEU needs at least two comments");
    }
    // Per n-gram, the largest and second-largest per-document counts and who
    // holds the largest: the best count among "all other documents" is then
    // one lookup.
    struct Top2 {
        std::size_t first = 0;
        std::size_t second = 0;
        std::size_t holder = SIZE_MAX;
    };
    std::vector<std::vector<std::unordered_map<std::string, std::size_t>>> counts(docs.size());
    std::vector<std::unordered_map<std::string, Top2>> tops(static_cast<std::size_t>(max_n));
    for (std::size_t i = 0; i < docs.size(); ++i) {
        counts[i].resize(static_cast<std::size_t>(max_n));
        for (int n = 1; n <= max_n; ++n) {
            auto& local = counts[i][static_cast<std::size_t>(n - 1)];
            local = ngram_counts(docs[i], n);
            auto& table = tops[static_cast<std::size_t>(n - 1)];
            for (const auto& [g, c] : local) {
                auto& t = table[g];
                if (c > t.first) {
                    t.second = t.first;
                    t.first = c;
                    t.holder = i;
                } else if (c > t.second) {
                    t.second = c;
                }
            }
        }
    }
    std::map<std::size_t, std::size_t> length_hist;
    for (const auto& d : docs) {
        ++length_hist[d.size()];
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        const auto len = docs[i].size();
        auto available = [&](std::map<std::size_t, std::size_t>::const_iterator it) {
            return it->first != len || it->second > 1;
        };
        if (len == 0) {
            sum += length_hist.at(0) > 1 ? 1.0 : 0.0;
            continue;
        }
        std::vector<std::size_t> clipped(static_cast<std::size_t>(max_n), 0);
        for (int n = 1; n <= max_n; ++n) {
            const auto& table = tops[static_cast<std::size_t>(n - 1)];
            std::size_t total = 0;
            for (const auto& [g, c] : counts[i][static_cast<std::size_t>(n - 1)]) {
                const auto& t = table.at(g);
                const auto other = t.holder == i ? t.second : t.first;
                total += std::min(c, other);
            }
            clipped[static_cast<std::size_t>(n - 1)] = total;
        }
        // Closest other length: nearest available entry at or above, and
        // nearest available entry below.
        std::optional<std::size_t> up;
        std::optional<std::size_t> down;
        for (auto it = length_hist.lower_bound(len); it != length_hist.end(); ++it) {
            if (available(it)) {
                up = it->first;
                break;
            }
        }
        for (auto it = length_hist.lower_bound(len); it != length_hist.begin();) {
            --it;
            if (available(it)) {
                down = it->first;
                break;
            }
        }
        std::size_t ref_len = 0;
        if (up && down) {
            ref_len = (*up - len) < (len - *down) ? *up : *down;
        } else {
            ref_len = up ? *up : *down;
        }
        sum += combine_bleu(clipped, len, ref_len, max_n);
    }
    return sum / static_cast<double>(docs.size());
}

std::vector<std::string> canonical_order(std::span<const std::string> comments) {
    std::vector<std::string> sorted(comments.begin(), comments.end());
    std::sort(sorted.begin(), sorted.end());
    return sorted;
}

double self_bleu(std::span<const std::string> comments, const SelfBleuOptions& options) {
    if (comments.size() < 2) {
        throw Error(ErrorKind::input, "Self-BLEU needs at least two comments");
    }
    const auto sorted = canonical_order(comments);
    std::vector<Tokens> docs;
    if (options.subsample && *options.subsample < sorted.size()) {
        if (*options.subsample < 2) {
            throw Error(ErrorKind::input, "Self-BLEU subsample must hold at least two comments");
        }
        auto rng = util::DeterministicRng::from_key(fmt::format("self-bleu:{}", options.seed));
        auto picks = rng.sample_without_replacement(sorted.size(), *options.subsample);
        std::sort(picks.begin(), picks.end());
        for (auto i : picks) docs.push_back(tokenize(sorted[i]));
    } else {
        for (const auto& c : sorted) docs.push_back(tokenize(c));
    }
    return self_bleu_tokens(docs, options.max_n);
}

const gateway::EmbeddingVector& TokenEmbeddingCache::get(const std::string& token) {
    auto it = cache_.find(token);
    if (it == cache_.end()) {
        it = cache_.emplace(token, embedder_.embed(token)).first;
    }
    return it->second;
}

namespace {

double cosine(const gateway::EmbeddingVector& a, const gateway::EmbeddingVector& b) {
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double mean_best(const Tokens& from, const Tokens& to, TokenEmbeddingCache& cache) {
    double sum = 0.0;
    for (const auto& a : from) {
        double best = -1.0;
        const auto& va = cache.get(a);
        for (const auto& b : to) best = std::max(best, a == b ? 1.0 : cosine(va, cache.get(b)));
        sum += best;
    }
    return sum / static_cast<double>(from.size());
}

}  // namespace

GreedyMatch greedy_match(const Tokens& candidate, const Tokens& reference, TokenEmbeddingCache& cache) {
    if (candidate.empty() || reference.empty()) return {};
    GreedyMatch m;
    m.precision = mean_best(candidate, reference, cache);
    m.recall = mean_best(reference, candidate, cache);
    m.f1 = (m.precision > 0.0 && m.recall > 0.0)
               ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
               : 0.0;
    return m;
}

GroupScore embedding_group_score(std::span<const std::string> comments, gateway::Embedder& embedder,
                                 const PairSamplingOptions& options) {
    if (comments.size() < 2) {
        throw Error(ErrorKind::input, "embedding group score needs at least two comments");
    }
    if (options.max_pairs == 0) {
        throw Error(ErrorKind::input, "max_pairs must be positive");
    }
    const auto sorted = canonical_order(comments);
    std::vector<Tokens> docs;
    for (const auto& c : sorted) docs.push_back(tokenize(c));
    const std::size_t n = docs.size();
    const std::size_t all_pairs = n * (n - 1) / 2;
    std::vector<std::size_t> pair_ids;
    if (all_pairs <= options.max_pairs) {
        pair_ids.resize(all_pairs);
        std::iota(pair_ids.begin(), pair_ids.end(), std::size_t{0});
    } else {
        auto rng = util::DeterministicRng::from_key(fmt::format("pairs:{}", options.seed));
        pair_ids = rng.sample_without_replacement(all_pairs, options.max_pairs);
        std::sort(pair_ids.begin(), pair_ids.end());
    }
    TokenEmbeddingCache cache(embedder);
    double sum = 0.0;
    std::size_t i = 0;
    std::size_t base = 0;  // pair ids enumerate (i, j), i < j, row by row
    for (auto p : pair_ids) {
        while (p >= base + (n - 1 - i)) {
            base += n - 1 - i;
            ++i;
        }
        const std::size_t j = i + 1 + (p - base);
        sum += greedy_match(docs[i], docs[j], cache).f1;
    }
    return {sum / static_cast<double>(pair_ids.size()), pair_ids.size()};
}

double embedding_relevance(std::span<const std::string> comments, std::string_view summary,
                           gateway::Embedder& embedder) {
    if (comments.empty()) {
        throw Error(ErrorKind::input, "embedding relevance needs at least one comment");
    }
    TokenEmbeddingCache cache(embedder);
    const auto ref = tokenize(summary);
    double sum = 0.0;
    for (const auto& c : comments) sum += greedy_match(tokenize(c), ref, cache).f1;
    return sum / static_cast<double>(comments.size());
}

double rouge_n_precision_tokens(const Tokens& comment, const Tokens& reference, int n) {
    check_order(n, 4);
    const auto total = ngram_total(comment.size(), n);
    if (total == 0) return 0.0;
    const auto ref = ngram_counts(reference, n);
    std::size_t overlap = 0;
    for (const auto& [g, c] : ngram_counts(comment, n)) {
        const auto it = ref.find(g);
        if (it != ref.end()) overlap += std::min(c, it->second);
    }
    return static_cast<double>(overlap) / static_cast<double>(total);
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
    std::vector<std::size_t> prev(b.size() + 1, 0);
    std::vector<std::size_t> cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_precision_tokens(const Tokens& comment, const Tokens& reference) {
    if (comment.empty()) return 0.0;
    return static_cast<double>(lcs_length(comment, reference)) / static_cast<double>(comment.size());
}

double rouge_n_precision(std::string_view comment, std::string_view reference, int n) {
    return rouge_n_precision_tokens(tokenize(comment), tokenize(reference), n);
}

double rouge_l_precision(std::string_view comment, std::string_view reference) {
    return rouge_l_precision_tokens(tokenize(comment), tokenize(reference));
}

gateway::ChatExchange build_judge_prompt(std::string_view comment, std::string_view summary) {
    gateway::ChatExchange exchange;
    exchange.system_instruction =
        "You rate how relevant a viewer comment is to a video. Relevant comments are on-topic and "
        "pertinent to the video's content.";
    exchange.messages.push_back(
        {gateway::Role::user,
         fmt::format("[JUDGE]\nVideo summary:\n{}\n\nComment:\n{}\n\nRate the relevance of the "
                     "comment to the video on a scale from 0 to 100, where a higher score means "
                     "more relevant. Answer with a single integer and nothing else.",
                     summary, comment)});
    exchange.temperature = 0.0;
    return exchange;
}

std::optional<int> parse_judge_score(std::string_view reply) {
    auto text = util::trim(reply);
    if (!text.empty() && text.back() == '.') text.remove_suffix(1);
    if (text.empty() || text.size() > 3) return std::nullopt;
    int value = 0;
    for (char c : text) {
        if (c < '0' || c > '9') return std::nullopt;
        value = value * 10 + (c - '0');
    }
    if (value > 100) return std::nullopt;
    return value;
}

int llm_relevance(std::string_view comment, std::string_view summary, gateway::ChatModel& judge) {
    auto exchange = build_judge_prompt(comment, summary);
    std::string reply = judge.complete(exchange);
    if (auto score = parse_judge_score(reply)) return *score;
    spdlog::warn("judge reply '{}' is not an integer in 0..100; retrying once",
                 util::utf8_truncate(reply, 40));
    exchange.messages.push_back({gateway::Role::assistant, reply});
    exchange.messages.push_back(
        {gateway::Role::user, "[JUDGE] Reply with only one integer from 0 to 100."});
    reply = judge.complete(exchange);
    if (auto score = parse_judge_score(reply)) return *score;
    throw Error(ErrorKind::scoring,
                fmt::format("judge {} gave no usable score after a retry (last reply '{}')",
                            judge.model_name(), util::utf8_truncate(reply, 40)));
}

std::vector<MetricReport> evaluate(std::span<const CommentCorpus> corpora, std::string_view summary,
                                   const EvalConfig& config, const EvalBackends& backends) {
    if (corpora.empty()) {
        throw Error(ErrorKind::input, "evaluate needs at least one corpus");
    }
    const bool relevance = !util::is_blank(summary);
    if (!relevance) {
        spdlog::warn("no reference summary given; reporting diversity metrics only");
    }
    std::size_t smallest = SIZE_MAX;
    for (const auto& c : corpora) {
        validate_corpus(c);
        smallest = std::min(smallest, c.comments.size());
    }
    const std::size_t equalized = config.equalized_size.value_or(smallest);
    const auto summary_tokens = tokenize(summary);

    std::vector<MetricReport> out;
    for (const auto& corpus : corpora) {
        const auto& comments = corpus.comments;
        const std::size_t size = comments.size();
        auto add = [&](std::string name, double value, std::size_t sample, json params,
                       std::optional<double> normalized = std::nullopt) {
            out.push_back({corpus.label, std::move(name), value, normalized, sample, std::move(params)});
        };

        add("average_length", average_length(corpus), size, {{"unit", "characters"}});
        for (int n : config.distinct_orders) {
            const auto d = distinct_ngrams(comments, n);
            add(fmt::format("distinct_{}", n), d.distinct, size,
                {{"n", n}, {"normalization", "distinct/total per comment"}}, d.normalized);
        }

        const json bleu_params = {{"max_n", config.bleu_max_n},
                                  {"smoothing", "epsilon"},
                                  {"epsilon", kBleuEpsilon}};
        {
            json p = bleu_params;
            p["subsample"] = size;
            add("self_bleu", self_bleu(comments, {config.bleu_max_n, std::nullopt, config.seed}), size, p);
        }
        {
            const std::size_t m = std::min(equalized, size);
            json p = bleu_params;
            p["subsample"] = m;
            p["seed"] = config.seed;
            add("self_bleu_equalized", self_bleu(comments, {config.bleu_max_n, m, config.seed}), m, p);
        }
        if (backends.embedder) {
            const auto g = embedding_group_score(comments, *backends.embedder,
                                                 {config.max_pairs, config.seed});
            add("embedding_group_score", g.value, g.pairs,
                {{"embedder", backends.embedder->model_name()},
                 {"pairs", g.pairs},
                 {"max_pairs", config.max_pairs},
                 {"seed", config.seed}});
        }

        if (!relevance) continue;
        double r1 = 0.0;
        double r2 = 0.0;
        double rl = 0.0;
        for (const auto& c : comments) {
            const auto t = tokenize(c);
            r1 += rouge_n_precision_tokens(t, summary_tokens, 1);
            r2 += rouge_n_precision_tokens(t, summary_tokens, 2);
            rl += rouge_l_precision_tokens(t, summary_tokens);
        }
        const double count = static_cast<double>(size);
        add("rouge_1_precision", r1 / count, size, {{"n", 1}, {"orientation", "precision"}});
        add("rouge_2_precision", r2 / count, size, {{"n", 2}, {"orientation", "precision"}});
        add("rouge_l_precision", rl / count, size, {{"orientation", "precision"}});
        if (backends.embedder) {
            add("embedding_relevance", embedding_relevance(comments, summary, *backends.embedder), size,
                {{"embedder", backends.embedder->model_name()}});
        }

        if (!backends.judges.empty()) {
            const auto sorted = canonical_order(comments);
            const std::size_t m = std::min(config.judge_sample, size);
            auto rng = util::DeterministicRng::from_key(fmt::format("judge-sample:{}", config.seed));
            auto picks = rng.sample_without_replacement(size, m);
            std::sort(picks.begin(), picks.end());
            for (std::size_t j = 0; j < backends.judges.size(); ++j) {
                auto& judge = *backends.judges[j];
                double total = 0.0;
                for (auto i : picks) total += llm_relevance(sorted[i], summary, judge);
                const auto name = backends.judges.size() == 1 ? std::string("llm_relevance")
                                                              : fmt::format("llm_relevance_judge{}", j + 1);
                add(name, total / static_cast<double>(m), m,
                    {{"judge_model", judge.model_name()}, {"sample", m}, {"seed", config.seed},
                     {"scale", "0-100"}});
            }
        }
    }
    for (const auto& r : out) {
        if (!std::isfinite(r.value) || (r.normalized_value && !std::isfinite(*r.normalized_value))) {
            throw Error(ErrorKind::internal,
                        fmt::format("metric {} for '{}' is not finite", r.metric_name, r.corpus_label));
        }
    }
    return out;
}

namespace {

struct PivotRow {
    std::string name;
    std::map<std::string, double> values;  // by label
    std::map<std::string, json> params;    // by label
};

std::vector<std::string> labels_in_order(std::span<const MetricReport> reports) {
    std::vector<std::string> labels;
    for (const auto& r : reports) {
        if (std::find(labels.begin(), labels.end(), r.corpus_label) == labels.end()) {
            labels.push_back(r.corpus_label);
        }
    }
    return labels;
}

std::vector<PivotRow> pivot(std::span<const MetricReport> reports) {
    std::vector<PivotRow> rows;
    auto row_for = [&](const std::string& name) -> PivotRow& {
        for (auto& r : rows) {
            if (r.name == name) return r;
        }
        rows.push_back({name, {}, {}});
        return rows.back();
    };
    row_for("Average Length");
    for (const auto& r : reports) {
        const std::string name = r.metric_name == "average_length" ? "Average Length" : r.metric_name;
        auto& row = row_for(name);
        row.values[r.corpus_label] = r.value;
        row.params[r.corpus_label] = r.params;
        if (r.normalized_value) {
            auto& nrow = row_for(r.metric_name + " (normalized)");
            nrow.values[r.corpus_label] = *r.normalized_value;
            nrow.params[r.corpus_label] = r.params;
        }
    }
    auto& sizes = row_for("Sample Size");
    for (const auto& r : reports) {
        if (r.metric_name == "average_length") {
            sizes.values[r.corpus_label] = static_cast<double>(r.sample_size);
        }
    }
    if (rows.front().values.empty()) rows.erase(rows.begin());
    return rows;
}

std::string param_value(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string merge_params(const PivotRow& row, const std::vector<std::string>& labels) {
    std::map<std::string, std::vector<std::string>> by_key;
    for (const auto& [label, p] : row.params) {
        for (const auto& [k, v] : p.items()) by_key[k];
    }
    std::vector<std::string> parts;
    for (auto& [key, _] : by_key) {
        std::vector<std::string> values;
        for (const auto& label : labels) {
            const auto it = row.params.find(label);
            if (it == row.params.end() || !it->second.contains(key)) {
                values.emplace_back("-");
            } else {
                values.push_back(param_value(it->second.at(key)));
            }
        }
        const bool same = std::all_of(values.begin(), values.end(),
                                      [&](const std::string& v) { return v == values.front(); });
        parts.push_back(key + "=" + (same ? values.front() : util::join(values, "|")));
    }
    return util::join(parts, "; ");
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

}  // namespace

json report_to_json(std::span<const MetricReport> reports) {
    json rows = json::array();
    for (const auto& r : reports) {
        rows.push_back({{"corpus_label", r.corpus_label},
                        {"metric_name", r.metric_name},
                        {"value", r.value},
                        {"normalized_value", r.normalized_value ? json(*r.normalized_value) : json()},
                        {"sample_size", r.sample_size},
                        {"params", r.params}});
    }
    const auto labels = labels_in_order(reports);
    json columns = json::array({"Group"});
    for (const auto& l : labels) columns.push_back(l);
    columns.push_back("params");
    json table_rows = json::array();
    for (const auto& row : pivot(reports)) {
        json cells = json::array({row.name});
        for (const auto& l : labels) {
            const auto it = row.values.find(l);
            cells.push_back(it == row.values.end() ? json() : json(it->second));
        }
        cells.push_back(merge_params(row, labels));
        table_rows.push_back(std::move(cells));
    }
    return {{"rows", std::move(rows)}, {"table", {{"columns", std::move(columns)}, {"rows", std::move(table_rows)}}}};
}

std::string report_to_csv(std::span<const MetricReport> reports) {
    const auto labels = labels_in_order(reports);
    std::string out = "Group";
    for (const auto& l : labels) out += "," + csv_field(l);
    out += ",params\n";
    for (const auto& row : pivot(reports)) {
        out += csv_field(row.name);
        for (const auto& l : labels) {
            out += ",";
            const auto it = row.values.find(l);
            if (it != row.values.end()) out += fmt::format("{}", it->second);
        }
        out += "," + csv_field(merge_params(row, labels)) + "\n";
    }
    return out;
}

void write_report(const std::filesystem::path& path, std::span<const MetricReport> reports) {
    const auto ext = util::to_lower_ascii(path.extension().string());
    if (ext == ".csv") {
        util::write_atomic(path, report_to_csv(reports));
    } else if (ext == ".json") {
        util::write_atomic(path, report_to_json(reports).dump(2) + "\n");
    } else {
        throw Error(ErrorKind::input, "report path must end in .json or .csv: " + path.string());
    }
}

namespace {

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw Error(ErrorKind::input, "paired samples must have the same length");
    }
    if (x.empty()) {
        throw Error(ErrorKind::input, "paired samples must not be empty");
    }
    const std::size_t original = x.size();
    std::vector<double> d;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double diff = x[i] - y[i];
        if (!std::isfinite(diff)) throw Error(ErrorKind::input, "paired samples must be finite");
        if (diff != 0.0) d.push_back(diff);
    }
    const bool has_zeros = d.size() != original;
    WilcoxonResult result;
    result.n = d.size();
    if (d.empty()) {
        throw Error(ErrorKind::input, "all paired differences are zero");
    }

    // Average ranks of |d|.
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
    std::vector<double> rank(d.size());
    bool has_ties = false;
    double tie_term = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        const double t = static_cast<double>(j - i + 1);
        if (t > 1) has_ties = true;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    double r_plus = 0.0;
    double r_minus = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) (d[i] > 0 ? r_plus : r_minus) += rank[i];
    result.statistic = std::min(r_plus, r_minus);
    const auto n = d.size();

    if (original <= 50 && !has_ties && !has_zeros) {
        // Exact null distribution of W+ over 2^n sign assignments.
        const std::size_t max_sum = n * (n + 1) / 2;
        std::vector<double> ways(max_sum + 1, 0.0);
        ways[0] = 1.0;
        for (std::size_t k = 1; k <= n; ++k) {
            for (std::size_t s = max_sum; s >= k; --s) ways[s] += ways[s - k];
        }
        const double total = std::ldexp(1.0, static_cast<int>(n));
        const auto w = static_cast<std::size_t>(std::llround(r_plus));
        double cdf = 0.0;
        for (std::size_t s = 0; s <= w; ++s) cdf += ways[s];
        double sf = 0.0;
        for (std::size_t s = w; s <= max_sum; ++s) sf += ways[s];
        result.p_value = std::min(1.0, 2.0 * std::min(cdf, sf) / total);
        result.exact = true;
    } else if (original <= 13) {
        // Ties or zeros with few samples: enumerate every sign flip.
        const std::size_t total = std::size_t{1} << n;
        std::size_t less = 0;
        std::size_t greater = 0;
        const double tol = 1e-12 * std::max(1.0, r_plus);
        for (std::size_t mask = 0; mask < total; ++mask) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (mask & (std::size_t{1} << i)) s += rank[i];
            }
            if (s <= r_plus + tol) ++less;
            if (s >= r_plus - tol) ++greater;
        }
        const double p_less = static_cast<double>(less) / static_cast<double>(total);
        const double p_greater = static_cast<double>(greater) / static_cast<double>(total);
        result.p_value = std::min(1.0, 2.0 * std::min(p_less, p_greater));
        result.exact = true;
    } else {
        const double nn = static_cast<double>(n);
        const double mean = nn * (nn + 1.0) / 4.0;
        const double se = std::sqrt((nn * (nn + 1.0) * (2.0 * nn + 1.0) - tie_term / 2.0) / 24.0);
        const double z = (r_plus - mean) / se;
        result.p_value = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
    }
    return result;
}

std::vector<PairwiseComparison> compare_paired(const std::map<std::string, std::vector<double>>& columns,
                                               double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw Error(ErrorKind::input, "alpha must be in (0, 1)");
    }
    std::vector<PairwiseComparison> out;
    for (auto a = columns.begin(); a != columns.end(); ++a) {
        for (auto b = std::next(a); b != columns.end(); ++b) {
            out.push_back({a->first, b->first, wilcoxon_signed_rank(a->second, b->second), 1.0, false});
        }
    }
    const double m = static_cast<double>(out.size());
    for (auto& c : out) {
        c.adjusted_p = std::min(1.0, c.test.p_value * m);
        c.significant = c.adjusted_p < alpha;
    }
    return out;
}

}  // namespace commentsim::metrics
