#include "commentsim/cli/cli.hpp"
#include "commentsim/comments/comments.hpp"
#include "commentsim/error.hpp"
#include "commentsim/gateway/gateway.hpp"
#include "commentsim/gateway/mock.hpp"
#include "commentsim/metrics/metrics.hpp"
#include "commentsim/persona/persona.hpp"
#include "commentsim/pipeline/config.hpp"
#include "commentsim/pipeline/pipeline.hpp"
#include "commentsim/pipeline/serialize.hpp"
#include "commentsim/util/fs.hpp"
#include "commentsim/video/video.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace commentsim;
using json = nlohmann::json;

namespace {

struct ConfigArgs {
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;
    bool mock = false;
    std::optional<std::filesystem::path> work_dir;
    std::optional<std::filesystem::path> personas;
};

pipeline::AppConfig resolve(const ConfigArgs& a) {
    auto c = a.config ? pipeline::load_config(*a.config) : pipeline::AppConfig{};
    if (a.mock) c.gateways = gateway::as_mock(c.gateways);
    if (a.seed) c.seed = *a.seed;
    if (a.work_dir) c.paths.work_dir = *a.work_dir;
    if (a.personas) c.paths.persona_file = *a.personas;
    c.validate();
    return c;
}

ConfigArgs config_args(std::optional<std::filesystem::path> config, std::optional<std::uint64_t> seed, bool mock,
                       std::optional<std::filesystem::path> work_dir,
                       std::optional<std::filesystem::path> personas) {
    return {std::move(config), seed, mock, std::move(work_dir), std::move(personas)};
}

std::string run_pipeline(const std::filesystem::path& video, const std::string& title,
                         const std::string& description, const std::string& author,
                         std::optional<std::filesystem::path> thumbnail, std::optional<std::string> video_id,
                         std::optional<std::size_t> count, bool no_persona, const ConfigArgs& args) {
    const auto config = resolve(args);
    pipeline::Pipeline pipe(config, gateway::make_gateways(config.gateways));
    std::vector<std::uint8_t> thumb;
    if (thumbnail) thumb = util::read_bytes(*thumbnail);
    const auto asset = video::load_asset(video, title, description, author, std::move(thumb), video_id.value_or(""));
    pipeline::RunOptions options;
    options.no_persona = no_persona;
    options.count = count;
    return pipe.run(asset, options).to_json().dump();
}

std::string generate(const std::string& video_id, std::optional<std::size_t> count, std::optional<std::size_t> batch,
                     bool no_persona, const ConfigArgs& args) {
    const auto config = resolve(args);
    pipeline::Pipeline pipe(config, gateway::make_gateways(config.gateways));
    const auto index = batch.value_or(pipe.workspace(video_id).batch_count());
    const auto comments = pipe.generate(video_id, index, count.value_or(config.pipeline.batch_size), no_persona);
    json out = json::array();
    for (const auto& c : comments) out.push_back(pipeline::to_json(c));
    return out.dump();
}

std::string rank(const std::vector<std::string>& keywords, std::size_t k, const ConfigArgs& args) {
    const auto config = resolve(args);
    pipeline::Pipeline pipe(config, gateway::make_gateways(config.gateways));
    const auto& index = pipe.persona_index();
    const auto ranked = persona::rank_personas(index, keywords, *pipe.gateways().embedder,
                                               {.k = k, .min_score = config.pipeline.min_score});
    json out = json::array();
    for (const auto& r : ranked) {
        out.push_back({{"persona_id", r.persona_id}, {"score", r.score}, {"text", pipe.persona_by_id(r.persona_id).text}});
    }
    return out.dump();
}

std::string evaluate(const std::vector<std::pair<std::string, std::vector<std::string>>>& corpora_in,
                     const std::string& summary, std::optional<std::size_t> equalized_size, bool judge,
                     const ConfigArgs& args) {
    const auto config = resolve(args);
    std::vector<metrics::CommentCorpus> corpora;
    for (const auto& [label, comments] : corpora_in) corpora.push_back({label, comments});
    auto gateways = gateway::make_gateways(config.gateways);
    metrics::EvalConfig ec;
    ec.bleu_max_n = config.eval.bleu_max_n;
    ec.max_pairs = config.eval.max_pairs;
    ec.judge_sample = config.eval.judge_sample;
    ec.seed = config.seed;
    ec.equalized_size = equalized_size;
    metrics::EvalBackends backends;
    backends.embedder = gateways.embedder.get();
    if (judge) {
        for (auto& j : gateways.judges) backends.judges.push_back(j.get());
        if (backends.judges.empty()) backends.judges.push_back(gateways.chat.get());
    }
    return metrics::report_to_json(metrics::evaluate(corpora, summary, ec, backends)).dump();
}

}  // namespace

PYBIND11_MODULE(_commentsim, m) {
    m.doc() = "Native core of the commentsim package";
    m.attr("__version__") = pipeline::tool_version();

    static py::exception<Error> error(m, "Error");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetObject(error.ptr(), py::make_tuple(std::string(to_string(e.kind())), e.what()).ptr());
        }
    });

    m.def("tokenize", &metrics::tokenize, py::arg("text"));
    m.def(
        "distinct",
        [](const std::vector<std::string>& comments, int n) {
            const auto d = metrics::distinct_ngrams(comments, n);
            return std::make_pair(d.distinct, d.normalized);
        },
        py::arg("comments"), py::arg("n"));
    m.def(
        "average_length",
        [](const std::vector<std::string>& comments) { return metrics::average_length({"corpus", comments}); },
        py::arg("comments"));
    m.def(
        "sentence_bleu",
        [](const metrics::Tokens& candidate, const std::vector<metrics::Tokens>& refs, int max_n) {
            return metrics::sentence_bleu(candidate, refs, max_n);
        },
        py::arg("candidate"), py::arg("references"), py::arg("max_n") = 4);
    m.def(
        "self_bleu",
        [](const std::vector<std::string>& comments, int max_n, std::optional<std::size_t> subsample,
           std::uint64_t seed) { return metrics::self_bleu(comments, {max_n, subsample, seed}); },
        py::arg("comments"), py::arg("max_n") = 4, py::arg("subsample") = py::none(), py::arg("seed") = 0);
    m.def(
        "rouge_n_precision",
        [](const std::string& c, const std::string& r, int n) { return metrics::rouge_n_precision(c, r, n); },
        py::arg("comment"), py::arg("reference"), py::arg("n"));
    m.def(
        "rouge_l_precision",
        [](const std::string& c, const std::string& r) { return metrics::rouge_l_precision(c, r); },
        py::arg("comment"), py::arg("reference"));
    m.def(
        "embedding_group_score",
        [](const std::vector<std::string>& comments, std::size_t max_pairs, std::uint64_t seed) {
            gateway::MockEmbedder embedder(gateway::GatewayConfig{});
            const auto g = metrics::embedding_group_score(comments, embedder, {max_pairs, seed});
            return std::make_pair(g.value, g.pairs);
        },
        py::arg("comments"), py::arg("max_pairs") = 1000, py::arg("seed") = 0,
        "Group score with the deterministic mock embedder.");
    m.def(
        "wilcoxon",
        [](const std::vector<double>& x, const std::vector<double>& y) {
            const auto r = metrics::wilcoxon_signed_rank(x, y);
            py::dict d;
            d["statistic"] = r.statistic;
            d["n"] = r.n;
            d["p_value"] = r.p_value;
            d["exact"] = r.exact;
            return d;
        },
        py::arg("x"), py::arg("y"));
    m.def(
        "cosine_similarity",
        [](std::vector<double> a, std::vector<double> b) {
            return persona::cosine_similarity({std::move(a)}, {std::move(b)});
        },
        py::arg("a"), py::arg("b"));
    m.def(
        "plan_batch",
        [](std::size_t total) {
            const auto p = comments::plan_batch(total);
            return std::make_pair(p.primary_count, p.thread_count);
        },
        py::arg("total"));

    m.def(
        "run_pipeline",
        [](const std::filesystem::path& video, const std::string& title, const std::string& description,
           const std::string& author, std::optional<std::filesystem::path> thumbnail,
           std::optional<std::string> video_id, std::optional<std::size_t> count, bool no_persona,
           std::optional<std::filesystem::path> config, std::optional<std::uint64_t> seed, bool mock,
           std::optional<std::filesystem::path> work_dir, std::optional<std::filesystem::path> personas) {
            const auto args = config_args(config, seed, mock, work_dir, personas);
            py::gil_scoped_release release;
            return run_pipeline(video, title, description, author, thumbnail, video_id, count, no_persona, args);
        },
        py::arg("video"), py::arg("title"), py::arg("description") = "", py::arg("author") = "", py::kw_only(),
        py::arg("thumbnail") = py::none(), py::arg("video_id") = py::none(), py::arg("count") = py::none(),
        py::arg("no_persona") = false, py::arg("config") = py::none(), py::arg("seed") = py::none(),
        py::arg("mock") = false, py::arg("work_dir") = py::none(), py::arg("personas") = py::none());
    m.def(
        "generate",
        [](const std::string& video_id, std::optional<std::size_t> count, std::optional<std::size_t> batch,
           bool no_persona, std::optional<std::filesystem::path> config, std::optional<std::uint64_t> seed,
           bool mock, std::optional<std::filesystem::path> work_dir, std::optional<std::filesystem::path> personas) {
            const auto args = config_args(config, seed, mock, work_dir, personas);
            py::gil_scoped_release release;
            return generate(video_id, count, batch, no_persona, args);
        },
        py::arg("video_id"), py::kw_only(), py::arg("count") = py::none(), py::arg("batch") = py::none(),
        py::arg("no_persona") = false, py::arg("config") = py::none(), py::arg("seed") = py::none(),
        py::arg("mock") = false, py::arg("work_dir") = py::none(), py::arg("personas") = py::none());
    m.def(
        "rank_personas",
        [](const std::vector<std::string>& keywords, std::size_t k, std::optional<std::filesystem::path> config,
           std::optional<std::uint64_t> seed, bool mock, std::optional<std::filesystem::path> work_dir,
           std::optional<std::filesystem::path> personas) {
            const auto args = config_args(config, seed, mock, work_dir, personas);
            py::gil_scoped_release release;
            return rank(keywords, k, args);
        },
        py::arg("keywords"), py::arg("k") = persona::kDefaultTopK, py::kw_only(), py::arg("config") = py::none(),
        py::arg("seed") = py::none(), py::arg("mock") = false, py::arg("work_dir") = py::none(),
        py::arg("personas") = py::none());
    m.def(
        "evaluate",
        [](const std::vector<std::pair<std::string, std::vector<std::string>>>& corpora, const std::string& summary,
           std::optional<std::size_t> equalized_size, bool judge, std::optional<std::filesystem::path> config,
           std::optional<std::uint64_t> seed, bool mock) {
            const auto args = config_args(config, seed, mock, std::nullopt, std::nullopt);
            py::gil_scoped_release release;
            return evaluate(corpora, summary, equalized_size, judge, args);
        },
        py::arg("corpora"), py::arg("summary") = "", py::kw_only(), py::arg("equalized_size") = py::none(),
        py::arg("judge") = true, py::arg("config") = py::none(), py::arg("seed") = py::none(),
        py::arg("mock") = false);
    m.def(
        "cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out;
            std::ostringstream err;
            int code = 0;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs the command-line driver in-process; returns (exit_code, stdout, stderr).");
}
