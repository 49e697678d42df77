#include "commentsim/pipeline/config.hpp"

#include "commentsim/error.hpp"
#include "commentsim/util/fs.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <set>

#include <fmt/format.h>

namespace commentsim::pipeline {
using nlohmann::json;

namespace {

void reject_unknown(const YAML::Node& node, const std::string& where, std::set<std::string> allowed) {
    if (!node.IsMap()) {
        throw Error(ErrorKind::config, fmt::format("'{}' must be a mapping", where));
    }
    for (const auto& kv : node) {
        const auto key = kv.first.as<std::string>();
        if (!allowed.contains(key)) {
            throw Error(ErrorKind::config, fmt::format("unknown key '{}' in '{}'", key, where));
        }
    }
}

template <class T>
void read(const YAML::Node& node, const char* key, T& out, const std::string& where) {
    const auto child = node[key];
    if (!child || child.IsNull()) return;
    try {
        out = child.as<T>();
    } catch (const YAML::Exception& e) {
        throw Error(ErrorKind::config, fmt::format("'{}.{}' has the wrong type", where, key));
    }
}

void read_path(const YAML::Node& node, const char* key, std::optional<std::filesystem::path>& out,
               const std::string& where) {
    std::string value;
    read(node, key, value, where);
    if (!value.empty()) out = value;
}

gateway::GatewayConfig read_gateway(const YAML::Node& node, const std::string& where) {
    gateway::GatewayConfig g;
    if (!node) return g;
    reject_unknown(node, where,
                   {"backend", "endpoint_url", "api_key_ref", "model_name", "timeout_seconds",
                    "max_retries", "backoff_ms", "context_budget", "embedding_dimension",
                    "max_image_bytes"});
    std::string backend = "mock";
    read(node, "backend", backend, where);
    g.backend = gateway::backend_kind_from_string(backend);
    read(node, "endpoint_url", g.endpoint_url, where);
    read(node, "api_key_ref", g.api_key_ref, where);
    read(node, "model_name", g.model_name, where);
    read(node, "timeout_seconds", g.timeout_seconds, where);
    read(node, "max_retries", g.max_retries, where);
    read(node, "backoff_ms", g.backoff_ms, where);
    read(node, "context_budget", g.context_budget, where);
    read(node, "embedding_dimension", g.embedding_dimension, where);
    read(node, "max_image_bytes", g.max_image_bytes, where);
    return g;
}

json gateway_json(const gateway::GatewayConfig& g) {
    return {{"backend", gateway::to_string(g.backend)},
            {"endpoint_url", g.endpoint_url},
            {"api_key_ref", g.api_key_ref},
            {"model_name", g.model_name},
            {"timeout_seconds", g.timeout_seconds},
            {"max_retries", g.max_retries},
            {"backoff_ms", g.backoff_ms},
            {"context_budget", g.context_budget},
            {"embedding_dimension", g.embedding_dimension},
            {"max_image_bytes", g.max_image_bytes}};
}

}  // namespace

void AppConfig::validate() const {
    gateways.transcription.validate(false);
    gateways.captioning.validate(false);
    gateways.chat.validate(true);
    gateways.embedding.validate(false);
    for (const auto& j : gateways.judges) j.validate(true);
    const auto& p = pipeline;
    if (!(p.sample_rate > 0.0) || !(p.window_seconds > 0.0) || !(p.max_duration_seconds > 0.0)) {
        throw Error(ErrorKind::config, "sample_rate, window_seconds and max_duration_seconds must be positive");
    }
    if (p.caption_parallelism == 0 || p.generation_parallelism == 0) {
        throw Error(ErrorKind::config, "parallelism must be at least 1");
    }
    if (p.summary_temperature < 0.0 || p.summary_temperature > 2.0 || p.comment_temperature < 0.0 ||
        p.comment_temperature > 2.0) {
        throw Error(ErrorKind::config, "temperatures must be in [0, 2]");
    }
    if (p.batch_size == 0 || p.top_k == 0) {
        throw Error(ErrorKind::config, "batch_size and top_k must be positive");
    }
    if (p.min_score < -1.0 || p.min_score > 1.0) {
        throw Error(ErrorKind::config, "min_score must be in [-1, 1]");
    }
    const auto& w = service.progress;
    const double total = w.transcribing + w.captioning + w.summarizing + w.ranking_personas +
                         w.generating_comments;
    if (w.transcribing < 0 || w.captioning < 0 || w.summarizing < 0 || w.ranking_personas < 0 ||
        w.generating_comments < 0 || std::abs(total - 1.0) > 1e-9) {
        throw Error(ErrorKind::config, "progress weights must be nonnegative and sum to 1");
    }
    if (service.port < 0 || service.port > 65535 || service.workers == 0) {
        throw Error(ErrorKind::config, "service port must be 0..65535 and workers at least 1");
    }
    if (eval.bleu_max_n < 1 || eval.bleu_max_n > 8 || eval.max_pairs == 0 || eval.judge_sample == 0) {
        throw Error(ErrorKind::config, "invalid eval settings");
    }
}

bool AppConfig::all_mock() const {
    using gateway::BackendKind;
    bool mock = gateways.transcription.backend == BackendKind::mock &&
                gateways.captioning.backend == BackendKind::mock &&
                gateways.chat.backend == BackendKind::mock &&
                gateways.embedding.backend == BackendKind::mock;
    for (const auto& j : gateways.judges) mock = mock && j.backend == BackendKind::mock;
    return mock;
}

std::filesystem::path AppConfig::persona_index_path() const {
    return paths.persona_index.value_or(paths.work_dir / "persona_index.json");
}

AppConfig parse_config(std::string_view yaml_text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(yaml_text));
    } catch (const YAML::Exception& e) {
        throw Error(ErrorKind::config, std::string("config is not valid YAML: ") + e.what());
    }
    AppConfig c;
    if (!root || root.IsNull()) return c;
    reject_unknown(root, "<root>", {"seed", "deterministic", "gateways", "pipeline", "paths", "service", "eval"});
    read(root, "seed", c.seed, "<root>");
    if (root["deterministic"] && !root["deterministic"].IsNull()) {
        bool d = false;
        read(root, "deterministic", d, "<root>");
        c.deterministic = d;
    }
    if (const auto g = root["gateways"]) {
        reject_unknown(g, "gateways", {"transcription", "captioning", "chat", "embedding", "judges"});
        c.gateways.transcription = read_gateway(g["transcription"], "gateways.transcription");
        c.gateways.captioning = read_gateway(g["captioning"], "gateways.captioning");
        c.gateways.chat = read_gateway(g["chat"], "gateways.chat");
        c.gateways.embedding = read_gateway(g["embedding"], "gateways.embedding");
        if (const auto judges = g["judges"]) {
            if (!judges.IsSequence()) {
                throw Error(ErrorKind::config, "'gateways.judges' must be a list");
            }
            for (std::size_t i = 0; i < judges.size(); ++i) {
                c.gateways.judges.push_back(read_gateway(judges[i], fmt::format("gateways.judges[{}]", i)));
            }
        }
    }
    if (const auto p = root["pipeline"]) {
        const std::string w = "pipeline";
        reject_unknown(p, w, {"sample_rate", "window_seconds", "max_duration_seconds", "caption_parallelism",
                              "generation_parallelism", "summary_temperature", "comment_temperature",
                              "batch_size", "top_k", "min_score", "fewshot_file", "names_file"});
        auto& s = c.pipeline;
        read(p, "sample_rate", s.sample_rate, w);
        read(p, "window_seconds", s.window_seconds, w);
        read(p, "max_duration_seconds", s.max_duration_seconds, w);
        read(p, "caption_parallelism", s.caption_parallelism, w);
        read(p, "generation_parallelism", s.generation_parallelism, w);
        read(p, "summary_temperature", s.summary_temperature, w);
        read(p, "comment_temperature", s.comment_temperature, w);
        read(p, "batch_size", s.batch_size, w);
        read(p, "top_k", s.top_k, w);
        read(p, "min_score", s.min_score, w);
        read_path(p, "fewshot_file", s.fewshot_file, w);
        read_path(p, "names_file", s.names_file, w);
    }
    if (const auto p = root["paths"]) {
        const std::string w = "paths";
        reject_unknown(p, w, {"work_dir", "persona_file", "persona_index", "database"});
        std::string work = c.paths.work_dir.string();
        read(p, "work_dir", work, w);
        c.paths.work_dir = work;
        read_path(p, "persona_file", c.paths.persona_file, w);
        read_path(p, "persona_index", c.paths.persona_index, w);
        std::string db = c.paths.database.string();
        read(p, "database", db, w);
        c.paths.database = db;
    }
    if (const auto s = root["service"]) {
        const std::string w = "service";
        reject_unknown(s, w, {"host", "port", "workers", "api_token_ref", "static_dir", "max_upload_bytes",
                              "progress_weights"});
        read(s, "host", c.service.host, w);
        read(s, "port", c.service.port, w);
        read(s, "workers", c.service.workers, w);
        read(s, "api_token_ref", c.service.api_token_ref, w);
        read_path(s, "static_dir", c.service.static_dir, w);
        read(s, "max_upload_bytes", c.service.max_upload_bytes, w);
        if (const auto pw = s["progress_weights"]) {
            const std::string ww = "service.progress_weights";
            reject_unknown(pw, ww, {"transcribing", "captioning", "summarizing", "ranking_personas",
                                    "generating_comments"});
            auto& x = c.service.progress;
            read(pw, "transcribing", x.transcribing, ww);
            read(pw, "captioning", x.captioning, ww);
            read(pw, "summarizing", x.summarizing, ww);
            read(pw, "ranking_personas", x.ranking_personas, ww);
            read(pw, "generating_comments", x.generating_comments, ww);
        }
    }
    if (const auto e = root["eval"]) {
        const std::string w = "eval";
        reject_unknown(e, w, {"bleu_max_n", "max_pairs", "judge_sample"});
        read(e, "bleu_max_n", c.eval.bleu_max_n, w);
        read(e, "max_pairs", c.eval.max_pairs, w);
        read(e, "judge_sample", c.eval.judge_sample, w);
    }
    c.validate();
    return c;
}

AppConfig load_config(const std::filesystem::path& path) {
    return parse_config(util::read_text(path));
}

json config_snapshot(const AppConfig& c) {
    json judges = json::array();
    for (const auto& j : c.gateways.judges) judges.push_back(gateway_json(j));
    const auto& p = c.pipeline;
    return {{"seed", c.seed},
            {"deterministic", c.use_logical_clock()},
            {"gateways",
             {{"transcription", gateway_json(c.gateways.transcription)},
              {"captioning", gateway_json(c.gateways.captioning)},
              {"chat", gateway_json(c.gateways.chat)},
              {"embedding", gateway_json(c.gateways.embedding)},
              {"judges", judges}}},
            {"pipeline",
             {{"sample_rate", p.sample_rate},
              {"window_seconds", p.window_seconds},
              {"max_duration_seconds", p.max_duration_seconds},
              {"caption_parallelism", p.caption_parallelism},
              {"generation_parallelism", p.generation_parallelism},
              {"summary_temperature", p.summary_temperature},
              {"comment_temperature", p.comment_temperature},
              {"batch_size", p.batch_size},
              {"top_k", p.top_k},
              {"min_score", p.min_score},
              {"fewshot_file", p.fewshot_file ? json(p.fewshot_file->filename().string()) : json()},
              {"names_file", p.names_file ? json(p.names_file->filename().string()) : json()}}}};
}

}  // namespace commentsim::pipeline
