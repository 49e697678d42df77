#pragma once

#include "commentsim/gateway/gateway.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>

namespace commentsim::pipeline {

struct PipelineSettings {
    double sample_rate = 1.0;
    double window_seconds = 4.0;
    double max_duration_seconds = 25.0 * 60.0;
    std::size_t caption_parallelism = 4;
    std::size_t generation_parallelism = 4;
    double summary_temperature = 0.0;
    double comment_temperature = 1.0;
    std::size_t batch_size = 30;
    std::size_t top_k = 30;
    double min_score = 0.0;
    std::optional<std::filesystem::path> fewshot_file;
    std::optional<std::filesystem::path> names_file;
};

struct PathSettings {
    std::filesystem::path work_dir = "work";
    std::optional<std::filesystem::path> persona_file;
    /// Defaults to <work_dir>/persona_index.json.
    std::optional<std::filesystem::path> persona_index;
    std::filesystem::path database = "commentsim.db";
};

/// Share of the job's progress bar given to each stage; they sum to 1.
struct ProgressWeights {
    double transcribing = 0.10;
    double captioning = 0.50;
    double summarizing = 0.10;
    double ranking_personas = 0.05;
    double generating_comments = 0.25;
};

struct ServiceSettings {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::size_t workers = 2;
    /// Environment variable holding the shared token for mutating routes.
    std::string api_token_ref;
    std::optional<std::filesystem::path> static_dir;
    std::size_t max_upload_bytes = 2ull * 1024 * 1024 * 1024;
    ProgressWeights progress;
};

struct EvalSettings {
    int bleu_max_n = 4;
    std::size_t max_pairs = 1000;
    std::size_t judge_sample = 100;
};

struct AppConfig {
    gateway::GatewaysConfig gateways;
    PipelineSettings pipeline;
    PathSettings paths;
    ServiceSettings service;
    EvalSettings eval;
    std::uint64_t seed = 0;
    /// Logical clock instead of wall time. Defaults to on when every backend
    /// is a mock.
    std::optional<bool> deterministic;

    void validate() const;
    bool all_mock() const;
    bool use_logical_clock() const { return deterministic.value_or(all_mock()); }
    std::filesystem::path persona_index_path() const;
};

/// Missing keys keep their defaults; unknown keys are a config error.
AppConfig parse_config(std::string_view yaml_text);
AppConfig load_config(const std::filesystem::path& path);

/// Everything that influences outputs, without paths or secrets (secrets are
/// never in the config to begin with; only the names of their variables).
nlohmann::json config_snapshot(const AppConfig& config);

}  // namespace commentsim::pipeline
