#include "commentsim/service/service.hpp"

#include "commentsim/error.hpp"
#include "commentsim/pipeline/serialize.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdlib>

namespace commentsim::service {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view kind, std::string_view message) {
    send_json(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        auto j = json::parse(req.body);
        if (!j.is_object()) throw Error(ErrorKind::input, "request body must be a JSON object");
        return j;
    } catch (const json::exception&) {
        throw Error(ErrorKind::input, "request body is not valid JSON");
    }
}

std::string string_field(const json& body, const char* name) {
    const auto it = body.find(name);
    if (it == body.end() || !it->is_string()) {
        throw Error(ErrorKind::validation, fmt::format("field '{}' must be a string", name));
    }
    return it->get<std::string>();
}

std::optional<std::size_t> parse_count(std::string_view text) {
    if (text.empty()) return std::nullopt;
    std::size_t value = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || value == 0) {
        throw Error(ErrorKind::validation, "count must be a positive integer");
    }
    return value;
}

bool parse_flag(std::string_view text) {
    return text == "1" || text == "true" || text == "on" || text == "yes";
}

std::string form_value(const httplib::Request& req, const char* name) {
    if (req.has_file(name)) return req.get_file_value(name).content;
    if (req.has_param(name)) return req.get_param_value(name);
    return {};
}

json forest_json(const std::vector<CommentNode>& forest) {
    json out = json::array();
    for (const auto& node : forest) out.push_back(to_json(node));
    return out;
}

json summary_json(const pipeline::SummaryRecord& record) {
    return {{"summary", record.summary.summary_text},
            {"keywords", record.summary.keywords},
            {"model_name", record.model_name},
            {"created_at", record.created_at}};
}

}  // namespace

HttpServer::HttpServer(Service& service) : service_(service), server_(std::make_unique<httplib::Server>()) {
    const auto& settings = service_.pipeline().config().service;
    if (!settings.api_token_ref.empty()) {
        if (const char* token = std::getenv(settings.api_token_ref.c_str()); token && *token) {
            api_token_ = token;
        } else {
            spdlog::warn("api token variable {} is not set; mutating routes are unauthenticated",
                         settings.api_token_ref);
        }
    }
    server_->set_payload_max_length(settings.max_upload_bytes);
    if (settings.static_dir) {
        if (!server_->set_mount_point("/", settings.static_dir->string())) {
            spdlog::warn("static directory {} does not exist", settings.static_dir->string());
        }
    }
    install_routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    if (port == 0) {
        const int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw Error(ErrorKind::config, fmt::format("cannot bind {}", host));
        return bound;
    }
    if (!server_->bind_to_port(host, port)) {
        throw Error(ErrorKind::config, fmt::format("cannot bind {}:{}", host, port));
    }
    return port;
}

void HttpServer::listen() { server_->listen_after_bind(); }

void HttpServer::stop() {
    if (server_ && server_->is_running()) server_->stop();
}

void HttpServer::install_routes() {
    auto& srv = *server_;

    srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, http_status_for(e.kind()), to_string(e.kind()), e.what());
        } catch (const std::exception& e) {
            spdlog::error("unhandled error: {}", e.what());
            send_error(res, 500, "internal", "internal error");
        }
    });

    srv.set_pre_routing_handler([this](const httplib::Request& req, httplib::Response& res) {
        if (api_token_.empty() || req.method == "GET" || req.method == "HEAD") {
            return httplib::Server::HandlerResponse::Unhandled;
        }
        if (req.get_header_value("X-Api-Token") != api_token_) {
            send_error(res, 401, "unauthorized", "missing or invalid API token");
            return httplib::Server::HandlerResponse::Handled;
        }
        return httplib::Server::HandlerResponse::Unhandled;
    });

    srv.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"version", pipeline::tool_version()}});
    });

    srv.Post("/api/videos", [this](const httplib::Request& req, httplib::Response& res) {
        if (!req.is_multipart_form_data() || !req.has_file("file")) {
            throw Error(ErrorKind::validation, "expected a multipart upload with a 'file' part");
        }
        const auto file = req.get_file_value("file");
        UploadRequest upload;
        upload.filename = file.filename;
        upload.file_bytes = file.content;
        upload.title = form_value(req, "title");
        upload.description = form_value(req, "description");
        upload.author = form_value(req, "author");
        upload.thumbnail_bytes = form_value(req, "thumbnail");
        upload.owner = req.get_header_value("X-Owner");
        upload.no_persona = parse_flag(form_value(req, "no_persona"));
        upload.count = parse_count(form_value(req, "count"));
        const auto created = service_.create_video(upload);
        send_json(res, 201, {{"video", to_json(created.video)}, {"job", to_json(created.job)}});
    });

    srv.Get("/api/videos", [this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& v : service_.list_videos()) out.push_back(to_json(v));
        send_json(res, 200, out);
    });

    srv.Get(R"(/api/videos/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        const auto video = service_.get_video(req.matches[1]);
        json body = to_json(video);
        if (video.latest_job_id) body["latest_job"] = to_json(service_.get_job(*video.latest_job_id));
        send_json(res, 200, body);
    });

    srv.Get(R"(/api/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, to_json(service_.get_job(req.matches[1])));
    });

    srv.Get(R"(/api/videos/([^/]+)/comments)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto video = service_.get_video(req.matches[1]);
        json body = {{"video_id", video.video_id}, {"comments", forest_json(service_.list_comments(video.video_id))}};
        body["latest_job"] = video.latest_job_id ? to_json(service_.get_job(*video.latest_job_id)) : json();
        send_json(res, 200, body);
    });

    srv.Get(R"(/api/videos/([^/]+)/summary)", [this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, summary_json(service_.get_summary(req.matches[1])));
    });

    srv.Post(R"(/api/comments/([^/]+)/replies)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto result = service_.post_reply(req.matches[1], string_field(body, "body"));
        send_json(res, 201,
                  {{"user_comment", pipeline::to_json(result.user_node)}, {"reply", pipeline::to_json(result.reply)}});
    });

    srv.Post(R"(/api/videos/([^/]+)/custom-persona)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto comment = service_.post_custom_persona(req.matches[1], string_field(body, "persona_text"));
        send_json(res, 201, pipeline::to_json(comment));
    });

    srv.Post(R"(/api/videos/([^/]+)/generate-more)", [this](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        std::size_t count = service_.pipeline().config().pipeline.batch_size;
        if (const auto it = body.find("count"); it != body.end()) {
            if (!it->is_number_integer() || it->get<long long>() < 1) {
                throw Error(ErrorKind::validation, "count must be a positive integer");
            }
            count = it->get<std::size_t>();
        }
        const auto job = service_.request_more_comments(req.matches[1], count);
        send_json(res, 202, to_json(job));
    });
}

}  // namespace commentsim::service
