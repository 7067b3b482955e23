#include "ehrrag/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

#include <httplib.h>
#include <json.hpp>

#include "ehrrag/errors.hpp"
#include "ehrrag/hash.hpp"

namespace ehrrag {

std::vector<float> HashedBagEmbedder::embed(std::string_view text) {
    std::vector<float> vec(dimension_, 0.0f);
    std::size_t i = 0;
    const std::size_t n = text.size();
    std::string token;
    double sum_sq = 0.0;

    auto flush = [&]() {
        // Strip surrounding non-alphanumerics so "marker," and "marker" agree.
        std::size_t b = 0, e = token.size();
        while (b < e && !std::isalnum(static_cast<unsigned char>(token[b]))) ++b;
        while (e > b && !std::isalnum(static_cast<unsigned char>(token[e - 1]))) --e;
        if (e > b) {
            const std::size_t dim = fnv1a64(std::string_view(token).substr(b, e - b)) % dimension_;
            vec[dim] += 1.0f;
        }
        token.clear();
    };

    while (i < n) {
        const char c = text[i++];
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!token.empty()) flush();
        } else {
            token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    if (!token.empty()) flush();

    for (float v : vec) sum_sq += static_cast<double>(v) * v;
    if (sum_sq > 0.0) {
        const float inv = static_cast<float>(1.0 / std::sqrt(sum_sq));
        for (auto& v : vec) v *= inv;
    }
    return vec;
}

std::vector<float> CachingEmbedder::embed(std::string_view text) {
    const std::string key(text);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(key);
        if (it != cache_.end()) return it->second;
    }
    auto vec = inner_->embed(text);
    std::lock_guard<std::mutex> lock(mutex_);
    auto [it, inserted] = cache_.emplace(key, std::move(vec));
    return it->second;
}

namespace {

struct SplitUrl {
    std::string base;  // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint URL missing scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingConfig config)
    : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("http embedding provider needs an endpoint");
}

std::vector<float> HttpEmbeddingProvider::embed(std::string_view text) {
    const auto url = split_url(config_.endpoint);
    httplib::Client client(url.base);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(config_.timeout_seconds, 0);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    nlohmann::json body;
    body["model"] = config_.model;
    body["input"] = std::string(text);

    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("embedding endpoint unreachable: " + config_.endpoint);
    if (res->status < 200 || res->status >= 300)
        throw TransportError("embedding endpoint returned status " + std::to_string(res->status));

    try {
        auto doc = nlohmann::json::parse(res->body);
        auto vec = doc.at("data").at(0).at("embedding").get<std::vector<float>>();
        if (vec.size() != config_.dimension)
            throw TransportError("embedding dimension " + std::to_string(vec.size()) +
                                 " does not match declared " + std::to_string(config_.dimension));
        return vec;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("malformed embedding response: ") + e.what());
    }
}

}  // namespace ehrrag
