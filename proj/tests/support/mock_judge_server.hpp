#pragma once

// Scripted chat-completion server on 127.0.0.1 for judge tests.

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

namespace testing_support {

struct MockReply {
    int status = 200;
    std::string content;  // reply text (wrapped in a chat-completion body when status == 200)
    std::string raw;      // if non-empty, sent verbatim instead
};

inline MockReply choice(const std::string& text) { return {200, text, ""}; }

/// Replies follow `script` in request order; once exhausted, `fallback` is
/// used for every further request.
class MockJudgeServer {
public:
    MockJudgeServer(std::vector<MockReply> script, MockReply fallback)
        : script_(std::move(script)), fallback_(std::move(fallback)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            MockReply reply;
            {
                std::lock_guard<std::mutex> lock(mu_);
                bodies_.push_back(req.body);
                auth_.push_back(req.get_header_value("Authorization"));
                reply = next_ < script_.size() ? script_[next_] : fallback_;
                ++next_;
            }
            res.status = reply.status;
            if (!reply.raw.empty()) {
                res.set_content(reply.raw, "application/json");
            } else if (reply.status == 200) {
                nlohmann::json body = {{"choices", {{{"index", 0}, {"message", {{"role", "assistant"}, {"content", reply.content}}}}}}};
                res.set_content(body.dump(), "application/json");
            } else {
                res.set_content(reply.content, "text/plain");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockJudgeServer() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    MockJudgeServer(const MockJudgeServer&) = delete;
    MockJudgeServer& operator=(const MockJudgeServer&) = delete;

    [[nodiscard]] std::string url() const {
        return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
    }
    [[nodiscard]] std::size_t requests() const {
        std::lock_guard<std::mutex> lock(mu_);
        return next_;
    }
    [[nodiscard]] std::vector<std::string> bodies() const {
        std::lock_guard<std::mutex> lock(mu_);
        return bodies_;
    }
    [[nodiscard]] std::vector<std::string> auth_headers() const {
        std::lock_guard<std::mutex> lock(mu_);
        return auth_;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    mutable std::mutex mu_;
    std::vector<MockReply> script_;
    MockReply fallback_;
    std::size_t next_ = 0;
    std::vector<std::string> bodies_;
    std::vector<std::string> auth_;
};

}  // namespace testing_support
