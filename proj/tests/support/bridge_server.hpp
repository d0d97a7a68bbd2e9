#pragma once

// Serves a Transport over the bridge's HTTP contract on a loopback port.

#include <httplib.h>

#include <string>
#include <thread>

#include "pearl/backend.hpp"
#include "pearl/error.hpp"

namespace pearl::testing {

class BridgeServer {
public:
    explicit BridgeServer(backend::Transport& transport) : transport_(transport) {
        server_.Post(R"(/v1/(\w+))", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string endpoint = req.matches[1];
            const std::string variant = req.has_param("variant") ? req.get_param_value("variant") : "";
            try {
                const auto wire = backend::Json::parse(req.body);
                res.set_content(backend::dispatch_wire(transport_, endpoint, variant, wire).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(backend::Json{{"error", e.what()}}.dump(), "application/json");
            }
        });
        server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(R"({"ready":true})", "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~BridgeServer() {
        server_.stop();
        thread_.join();
    }

    BridgeServer(const BridgeServer&) = delete;
    BridgeServer& operator=(const BridgeServer&) = delete;

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    backend::Transport& transport_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace pearl::testing
