// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <httplib.h>

#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tim::testing
{

/// Local chat-completions endpoint whose reply is scripted per hit.
class StubServer
{
  public:
    using Reply = std::function<void(int hit, httplib::Response&)>;

    explicit StubServer(Reply reply): _reply(std::move(reply))
    {
        _server.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            auto hit = 0;
            {
                auto lock = std::lock_guard(_mutex);
                _bodies.push_back(req.body);
                _auth.push_back(req.get_header_value("Authorization"));
                hit = static_cast<int>(_bodies.size());
            }
            _reply(hit, res);
        });
        _port = _server.bind_to_any_port("127.0.0.1");
        _thread = std::thread([this] { _server.listen_after_bind(); });
        _server.wait_until_ready();
    }

    ~StubServer()
    {
        _server.stop();
        _thread.join();
    }

    [[nodiscard]] auto base_url() const -> std::string { return "http://127.0.0.1:" + std::to_string(_port) + "/v1"; }
    auto bodies() -> std::vector<std::string>
    {
        auto lock = std::lock_guard(_mutex);
        return _bodies;
    }
    auto auth() -> std::vector<std::string>
    {
        auto lock = std::lock_guard(_mutex);
        return _auth;
    }

  private:
    Reply _reply;
    httplib::Server _server;
    int _port = 0;
    std::thread _thread;
    std::mutex _mutex;
    std::vector<std::string> _bodies;
    std::vector<std::string> _auth;
};

} // namespace tim::testing
