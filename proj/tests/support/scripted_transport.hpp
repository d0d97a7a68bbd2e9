#pragma once

// Test double answering each endpoint from a handler and logging the calls.

#include <functional>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "pearl/backend.hpp"
#include "pearl/codec.hpp"
#include "pearl/error.hpp"
#include "pearl/image_io.hpp"

namespace pearl::testing {

class ScriptedTransport final : public backend::Transport {
public:
    using Handler = std::function<backend::Json(const backend::BackendRequest&)>;

    ScriptedTransport& on(const std::string& endpoint, Handler h) {
        handlers_[endpoint] = std::move(h);
        return *this;
    }
    ScriptedTransport& on(const std::string& endpoint, backend::Json fixed) {
        return on(endpoint, [fixed](const backend::BackendRequest&) { return fixed; });
    }

    backend::Json call(const backend::BackendRequest& request) override {
        {
            std::lock_guard lock(mutex_);
            calls_.push_back(request.endpoint);
            hashes_.push_back(request.hash());
        }
        const auto it = handlers_.find(request.endpoint);
        if (it == handlers_.end()) throw Error(ErrorKind::BackendUnavailable, "no handler for " + request.endpoint);
        return it->second(request);
    }
    std::string mode() const override { return "fixture"; }

    const std::vector<std::string>& calls() const { return calls_; }
    const std::vector<std::string>& hashes() const { return hashes_; }

private:
    std::map<std::string, Handler> handlers_;
    std::mutex mutex_;
    std::vector<std::string> calls_;
    std::vector<std::string> hashes_;
};

inline std::string mask_b64(const geom::BinaryMask& m) { return codec::base64_encode(io::encode_mask_png(m)); }

inline backend::Json box_json(double x0, double y0, double x1, double y1, const std::string& phrase, double score) {
    return backend::to_json(backend::BBox{x0, y0, x1, y1, phrase, score});
}

inline io::RgbImage gray_image(int w, int h, std::uint8_t v = 128) {
    return io::RgbImage{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * h * 3, v)};
}

}  // namespace pearl::testing
