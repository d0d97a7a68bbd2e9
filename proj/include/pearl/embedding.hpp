#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace pearl::metrics {

struct EmbeddingVector {
    std::vector<double> values;
    std::string source;
};

/// Throws LengthMismatch or ZeroNorm.
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

/// Sentence-embedding backend. Implementations must be thread-safe.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual EmbeddingVector embed(const std::string& text) = 0;
};

/// Hand-built vectors from {"dim": n, "vectors": {"word": [..]}}. Lookups use
/// the normalized label; unknown words raise MalformedInput.
class FixtureEmbeddings final : public EmbeddingProvider {
public:
    explicit FixtureEmbeddings(std::map<std::string, std::vector<double>> vectors);
    static FixtureEmbeddings parse_json(std::string_view text);
    static FixtureEmbeddings load(const std::string& path);

    EmbeddingVector embed(const std::string& text) override;
    std::size_t dim() const noexcept { return dim_; }

private:
    std::size_t dim_ = 0;
    std::map<std::string, std::vector<double>> vectors_;
};

/// Per-session memoization in front of any provider.
class MemoizedEmbeddings final : public EmbeddingProvider {
public:
    explicit MemoizedEmbeddings(EmbeddingProvider& inner) : inner_(inner) {}
    EmbeddingVector embed(const std::string& text) override;
    std::size_t cached() const;

private:
    EmbeddingProvider& inner_;
    mutable std::mutex mutex_;
    std::map<std::string, EmbeddingVector> cache_;
    std::size_t dim_ = 0;
};

}  // namespace pearl::metrics
