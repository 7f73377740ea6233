#include <chrono>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "memjack/backends.hpp"
#include "memjack/errors.hpp"
#include "memjack/text.hpp"

namespace memjack {

namespace {

using nlohmann::json;

struct ParsedUrl {
    bool tls = false;
    std::string host;
    int port = 80;
    std::string base_path;
};

ParsedUrl parse_url(const std::string& url) {
    ParsedUrl out;
    std::string rest = url;
    if (rest.rfind("https://", 0) == 0) {
        out.tls = true;
        out.port = 443;
        rest = rest.substr(8);
    } else if (rest.rfind("http://", 0) == 0) {
        rest = rest.substr(7);
    } else {
        throw ConfigError("endpoint url must start with http:// or https://: " + url,
                          "endpointUrl");
    }
    size_t slash = rest.find('/');
    std::string hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    out.base_path = slash == std::string::npos ? "" : rest.substr(slash);
    if (!out.base_path.empty() && out.base_path.back() == '/') out.base_path.pop_back();
    size_t colon = hostport.find(':');
    if (colon != std::string::npos) {
        out.host = hostport.substr(0, colon);
        out.port = std::stoi(hostport.substr(colon + 1));
    } else {
        out.host = hostport;
    }
    return out;
}

httplib::Headers auth_headers(const BackendConfig& config) {
    httplib::Headers headers;
    if (!config.api_key_env_var.empty()) {
        if (const char* key = std::getenv(config.api_key_env_var.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    return headers;
}

// POST with exponential backoff on transport failure, 5xx and 429.
json post_json(const BackendConfig& config, const std::string& path_suffix, const json& body) {
    ParsedUrl url = parse_url(config.endpoint_url);
    std::string path = url.base_path + path_suffix;
    std::string payload = body.dump();
    httplib::Headers headers = auth_headers(config);

    httplib::Result result;
    int attempts = config.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            int delay_ms = config.backoff_base_ms << (attempt - 1);
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        }
#ifdef CPPHTTPLIB_OPENSSL_SUPPORT
        if (url.tls) {
            httplib::SSLClient cli(url.host, url.port);
            cli.set_connection_timeout(static_cast<time_t>(config.timeout_s), 0);
            cli.set_read_timeout(static_cast<time_t>(config.timeout_s), 0);
            result = cli.Post(path, headers, payload, "application/json");
        } else
#endif
        {
            if (url.tls)
                throw ConfigError("https endpoint requires a TLS-enabled build", "endpointUrl");
            httplib::Client cli(url.host, url.port);
            cli.set_connection_timeout(static_cast<time_t>(config.timeout_s), 0);
            cli.set_read_timeout(static_cast<time_t>(config.timeout_s), 0);
            result = cli.Post(path, headers, payload, "application/json");
        }
        if (result && result->status < 500 && result->status != 429) break;
    }

    if (!result) throw TransportError("transport failure after retries: " + path);
    if (result->status < 200 || result->status >= 300)
        throw TransportError("endpoint returned status " + std::to_string(result->status) +
                             " after retries: " + path);
    json parsed = json::parse(result->body, nullptr, false);
    if (parsed.is_discarded())
        throw MalformedResponseError("endpoint returned unparseable JSON: " + path);
    return parsed;
}

}  // namespace

HttpChatBackend::HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
    if (config_.endpoint_url.empty())
        throw ConfigError("http backend requires endpointUrl", "endpointUrl");
}

std::string HttpChatBackend::chat(std::span<const ChatTurn> turns, double temperature) {
    if (turns.empty()) throw BackendError("chat requires at least one turn");
    json messages = json::array();
    for (const auto& t : turns) {
        const char* role = t.role == TurnRole::system ? "system"
                           : t.role == TurnRole::user ? "user"
                                                      : "assistant";
        json msg{{"role", role}};
        if (t.image_ref.empty()) {
            msg["content"] = t.text;
        } else {
            msg["content"] = json::array(
                {json{{"type", "text"}, {"text", t.text}},
                 json{{"type", "image_url"}, {"image_url", json{{"url", t.image_ref}}}}});
        }
        messages.push_back(std::move(msg));
    }
    json body{{"model", config_.model_name}, {"temperature", temperature},
              {"messages", std::move(messages)}};

    json reply = post_json(config_, "/chat/completions", body);
    if (!reply.contains("choices") || !reply["choices"].is_array() || reply["choices"].empty())
        throw MalformedResponseError("payload lacks choices array");
    const json& msg = reply["choices"][0];
    if (!msg.contains("message") || !msg["message"].contains("content") ||
        !msg["message"]["content"].is_string())
        throw MalformedResponseError("payload lacks a message body");
    return msg["message"]["content"].get<std::string>();
}

HttpEmbedBackend::HttpEmbedBackend(BackendConfig config, int expected_dim)
    : config_(std::move(config)), expected_dim_(expected_dim) {
    if (config_.endpoint_url.empty())
        throw ConfigError("http backend requires endpointUrl", "endpointUrl");
}

EmbeddingVector HttpEmbedBackend::embed(std::string_view text, std::string_view image_ref) {
    std::string input(text);
    if (!image_ref.empty()) input += " " + std::string(image_ref);
    json body{{"model", config_.model_name}, {"input", input}};
    json reply = post_json(config_, "/embeddings", body);
    if (!reply.contains("data") || !reply["data"].is_array() || reply["data"].empty() ||
        !reply["data"][0].contains("embedding"))
        throw MalformedResponseError("payload lacks an embedding body");
    const json& arr = reply["data"][0]["embedding"];
    if (!arr.is_array()) throw MalformedResponseError("embedding is not an array");
    EmbeddingVector v;
    v.values.reserve(arr.size());
    for (const auto& x : arr) v.values.push_back(x.get<double>());
    if (v.dim() != expected_dim_)
        throw DimMismatchError("endpoint returned dim " + std::to_string(v.dim()) +
                               ", campaign dim is " + std::to_string(expected_dim_));
    return v;
}

}  // namespace memjack
