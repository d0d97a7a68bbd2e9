#include <httplib.h>

#include "pearl/backend.hpp"
#include "pearl/error.hpp"

namespace pearl::backend {

namespace {

// Splits "http://host:port/prefix" into the origin and the path prefix.
std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = scheme_end == std::string::npos ? url.find('/') : url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    auto prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

}  // namespace

HttpTransport::HttpTransport(std::string base_url, int timeout_seconds)
    : base_url_(std::move(base_url)), timeout_seconds_(timeout_seconds) {
    while (!base_url_.empty() && base_url_.back() == '/') base_url_.pop_back();
}

Json HttpTransport::call(const BackendRequest& request) {
    const auto [origin, prefix] = split_url(base_url_);
    std::string path = prefix + "/v1/" + request.endpoint;
    if (!request.variant.empty()) path += "?variant=" + request.variant;
    const auto where = base_url_ + " (/v1/" + request.endpoint + ")";

    httplib::Client client(origin);
    if (!client.is_valid()) throw Error(ErrorKind::BackendUnavailable, "unsupported bridge URL " + base_url_);
    client.set_connection_timeout(10);
    client.set_read_timeout(timeout_seconds_);
    client.set_write_timeout(timeout_seconds_);

    const auto result = client.Post(path, to_wire(request).dump(), "application/json");
    if (!result) {
        throw Error(ErrorKind::BackendUnavailable, "cannot reach " + where + ": " + httplib::to_string(result.error()));
    }
    if (result->status != 200) {
        throw Error(ErrorKind::BackendUnavailable,
                    where + " answered HTTP " + std::to_string(result->status) + ": " + result->body.substr(0, 200));
    }
    try {
        return Json::parse(result->body);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::MalformedResponse, where + " returned invalid JSON: " + e.what());
    }
}

}  // namespace pearl::backend
