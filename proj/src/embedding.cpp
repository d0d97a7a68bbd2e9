#include "pearl/embedding.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "pearl/error.hpp"
#include "pearl/image_io.hpp"
#include "pearl/text.hpp"

namespace pearl::metrics {

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.values.size() != b.values.size()) {
        throw Error(ErrorKind::LengthMismatch, "embedding lengths differ: " + std::to_string(a.values.size()) + " vs " +
                                                   std::to_string(b.values.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        dot += a.values[i] * b.values[i];
        na += a.values[i] * a.values[i];
        nb += b.values[i] * b.values[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorKind::ZeroNorm, "zero-norm embedding");
    const double c = dot / (std::sqrt(na) * std::sqrt(nb));
    return std::clamp(c, -1.0, 1.0);
}

FixtureEmbeddings::FixtureEmbeddings(std::map<std::string, std::vector<double>> vectors) {
    for (auto& [word, values] : vectors) {
        if (values.empty()) throw Error(ErrorKind::MalformedInput, "empty embedding for '" + word + "'");
        if (dim_ == 0) dim_ = values.size();
        if (values.size() != dim_) throw Error(ErrorKind::LengthMismatch, "embedding for '" + word + "' has wrong length");
        for (double v : values) {
            if (!std::isfinite(v)) throw Error(ErrorKind::MalformedInput, "non-finite embedding for '" + word + "'");
        }
        vectors_[text::normalize_label(word)] = std::move(values);
    }
}

FixtureEmbeddings FixtureEmbeddings::parse_json(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("embedding fixture: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("vectors") || !doc["vectors"].is_object()) {
        throw Error(ErrorKind::MalformedInput, "embedding fixture: expected {\"dim\": n, \"vectors\": {...}}");
    }
    std::map<std::string, std::vector<double>> vectors;
    try {
        for (const auto& [word, values] : doc["vectors"].items()) vectors[word] = values.get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::MalformedInput, std::string("embedding fixture: ") + e.what());
    }
    FixtureEmbeddings out(std::move(vectors));
    if (doc.contains("dim") && doc["dim"].get<std::size_t>() != out.dim_) {
        throw Error(ErrorKind::LengthMismatch, "embedding fixture: declared dim does not match vectors");
    }
    return out;
}

FixtureEmbeddings FixtureEmbeddings::load(const std::string& path) {
    return parse_json(io::read_text(path));
}

EmbeddingVector FixtureEmbeddings::embed(const std::string& text) {
    const auto key = text::normalize_label(text);
    const auto it = vectors_.find(key);
    if (it == vectors_.end()) throw Error(ErrorKind::MalformedInput, "no fixture embedding for '" + key + "'");
    return {it->second, "fixture"};
}

EmbeddingVector MemoizedEmbeddings::embed(const std::string& text) {
    const auto key = text::normalize_label(text);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) return it->second;
    }
    auto v = inner_.embed(key);
    std::lock_guard lock(mutex_);
    if (dim_ == 0) dim_ = v.values.size();
    if (v.values.size() != dim_) {
        throw Error(ErrorKind::LengthMismatch, "provider changed embedding length within a session");
    }
    return cache_.emplace(key, std::move(v)).first->second;
}

std::size_t MemoizedEmbeddings::cached() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

}  // namespace pearl::metrics
