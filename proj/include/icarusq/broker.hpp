#ifndef ICARUSQ_BROKER_HPP
#define ICARUSQ_BROKER_HPP

#include <memory>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "icarusq/job.hpp"
#include "icarusq/job_store.hpp"

namespace icarusq {

namespace detail {

inline std::string b64_encode(const std::string& in) {
    static const char tbl[] =
        "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 3 <= in.size()) {
        const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                           (static_cast<unsigned char>(in[i + 1]) << 8) |
                           static_cast<unsigned char>(in[i + 2]);
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out.push_back(tbl[v & 63]);
        i += 3;
    }
    if (i + 1 == in.size()) {
        const unsigned v = static_cast<unsigned char>(in[i]) << 16;
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out += "==";
    } else if (i + 2 == in.size()) {
        const unsigned v = (static_cast<unsigned char>(in[i]) << 16) |
                           (static_cast<unsigned char>(in[i + 1]) << 8);
        out.push_back(tbl[(v >> 18) & 63]);
        out.push_back(tbl[(v >> 12) & 63]);
        out.push_back(tbl[(v >> 6) & 63]);
        out += "=";
    }
    return out;
}

inline std::string b64_decode(const std::string& in) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::string out;
    int buf = 0, bits = 0;
    for (char c : in) {
        const int v = val(c);
        if (v < 0)
            continue;
        buf = (buf << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<char>((buf >> bits) & 0xFF));
        }
    }
    return out;
}

} // namespace detail

/// The cloud-side half of the experiment service: an HTTP API over a
/// persistent job store. Users submit and fetch; workers poll and upload.
/// Neither party ever addresses the other directly.
class Broker {
public:
    Broker(std::shared_ptr<JobStore> store, std::string worker_token,
           double min_retrigger_interval_s = 30e-6)
        : store_(std::move(store)), worker_token_(std::move(worker_token)),
          min_retrigger_s_(min_retrigger_interval_s) {
        setup_routes();
    }

    httplib::Server& server() { return server_; }

    /// Serve until stop() is called. Blocks.
    bool listen(const std::string& host, int port) {
        return server_.listen(host, port);
    }

    /// Bind to an OS-assigned port and serve on a background thread.
    int start_async(const std::string& host = "127.0.0.1") {
        const int port = server_.bind_to_any_port(host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void stop() {
        server_.stop();
        if (thread_.joinable())
            thread_.join();
    }

    ~Broker() { stop(); }

private:
    bool worker_authorized(const httplib::Request& req) const {
        return req.get_header_value("Authorization") == "Bearer " + worker_token_;
    }

    void setup_routes() {
        server_.Post("/jobs", [this](const httplib::Request& req, httplib::Response& res) {
            json body;
            try {
                body = json::parse(req.body);
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(json{{"error", "invalid JSON"}}.dump(), "application/json");
                return;
            }
            try {
                Job job = job_from_request(body, min_retrigger_s_);
                const std::string id = store_->submit(std::move(job));
                res.status = 201;
                res.set_content(json{{"id", id}}.dump(), "application/json");
            } catch (const JobValidationError& e) {
                res.status = 400;
                json err{{"error", e.what()}, {"field", e.field}};
                if (!e.indices.empty())
                    err["indices"] = e.indices;
                res.set_content(err.dump(), "application/json");
            }
        });

        server_.Get(R"(/jobs/([0-9a-f]+))", [this](const httplib::Request& req,
                                                   httplib::Response& res) {
            auto job = store_->get(req.matches[1]);
            if (!job) {
                res.status = 404;
                res.set_content(json{{"error", "unknown job"}}.dump(), "application/json");
                return;
            }
            res.set_content(job_to_json(*job).dump(), "application/json");
        });

        server_.Get(R"(/jobs/([0-9a-f]+)/result)", [this](const httplib::Request& req,
                                                          httplib::Response& res) {
            auto job = store_->get(req.matches[1]);
            if (!job) {
                res.status = 404;
                res.set_content(json{{"error", "unknown job"}}.dump(), "application/json");
                return;
            }
            if (job->status != JobStatus::done) {
                res.status = 409;
                res.set_content(json{{"status", to_string(job->status)},
                                     {"failure_reason", job->failure_reason}}
                                    .dump(),
                                "application/json");
                return;
            }
            const std::string bytes = store_->result_bytes(job->id);
            if (req.get_header_value("Accept") == "application/json")
                res.set_content(json{{"id", job->id},
                                     {"payload_b64", detail::b64_encode(bytes)}}
                                    .dump(),
                                "application/json");
            else
                res.set_content(bytes, "application/octet-stream");
        });

        server_.Post("/worker/poll", [this](const httplib::Request& req,
                                            httplib::Response& res) {
            if (!worker_authorized(req)) {
                res.status = 401;
                return;
            }
            auto job = store_->poll_next();
            if (!job) {
                res.status = 204;
                return;
            }
            json j = job_to_json(*job);
            j["claim_token"] = job->claim_token;
            res.set_content(j.dump(), "application/json");
        });

        server_.Post(R"(/worker/result/([0-9a-f]+))", [this](const httplib::Request& req,
                                                             httplib::Response& res) {
            if (!worker_authorized(req)) {
                res.status = 401;
                return;
            }
            try {
                const json body = json::parse(req.body);
                const std::string status = body.at("status");
                store_->store_result(
                    req.matches[1], body.at("claim_token"),
                    job_status_from_string(status),
                    detail::b64_decode(body.value("payload_b64", std::string{})),
                    body.value("reason", std::string{}));
                res.set_content(json{{"ok", true}}.dump(), "application/json");
            } catch (const std::out_of_range&) {
                res.status = 404;
                res.set_content(json{{"error", "unknown job"}}.dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 409;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
            }
        });
    }

    std::shared_ptr<JobStore> store_;
    std::string worker_token_;
    double min_retrigger_s_;
    httplib::Server server_;
    std::thread thread_;
};

} // namespace icarusq

#endif
