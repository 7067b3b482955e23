#pragma once

#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ehrrag {

/// Text-in, vector-out abstraction with a declared dimension. Providers
/// must be deterministic or declare otherwise, in which case callers wrap
/// them in CachingEmbedder so repeated embeddings of one text agree.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<float> embed(std::string_view text) = 0;
    virtual std::string fingerprint() const = 0;
    virtual bool deterministic() const { return true; }
};

/// Deterministic test/desk-scale embedder: each whitespace token (lowercased,
/// stripped of surrounding punctuation) is hashed into one of `dimension`
/// buckets; the count vector is L2-normalized. Token overlap between query
/// and chunk translates directly into cosine similarity, which lets tests
/// plant high-similarity evidence.
class HashedBagEmbedder : public EmbeddingProvider {
public:
    explicit HashedBagEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}

    std::size_t dimension() const override { return dimension_; }
    std::vector<float> embed(std::string_view text) override;
    std::string fingerprint() const override {
        return "hashed-bag-v1:dim=" + std::to_string(dimension_);
    }

private:
    std::size_t dimension_;
};

/// Memoizing decorator for providers that do not guarantee determinism.
class CachingEmbedder : public EmbeddingProvider {
public:
    explicit CachingEmbedder(std::shared_ptr<EmbeddingProvider> inner)
        : inner_(std::move(inner)) {}

    std::size_t dimension() const override { return inner_->dimension(); }
    std::string fingerprint() const override { return inner_->fingerprint(); }
    bool deterministic() const override { return true; }
    std::vector<float> embed(std::string_view text) override;

private:
    std::shared_ptr<EmbeddingProvider> inner_;
    std::mutex mutex_;
    std::unordered_map<std::string, std::vector<float>> cache_;
};

struct HttpEmbeddingConfig {
    std::string endpoint;  // e.g. http://host:port/v1/embeddings
    std::string model;
    std::string api_key_env;
    std::size_t dimension = 1536;
    int timeout_seconds = 60;
};

/// Client for the common embeddings wire convention:
/// POST {"model": ..., "input": text} -> {"data": [{"embedding": [...]}]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(HttpEmbeddingConfig config);

    std::size_t dimension() const override { return config_.dimension; }
    std::vector<float> embed(std::string_view text) override;
    std::string fingerprint() const override {
        return "http:" + config_.model + ":dim=" + std::to_string(config_.dimension);
    }
    bool deterministic() const override { return false; }

private:
    HttpEmbeddingConfig config_;
};

}  // namespace ehrrag
