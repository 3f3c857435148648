#ifndef ICARUSQ_WORKER_HPP
#define ICARUSQ_WORKER_HPP

#include <atomic>
#include <chrono>
#include <string>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "icarusq/broker.hpp"
#include "icarusq/job.hpp"

namespace icarusq {

/// The instrument-side half of the service: polls the broker for queued
/// jobs, executes them against the virtual devices, uploads the result.
/// Executes one job at a time; several workers may run concurrently under
/// the claim/lease protocol.
class Worker {
public:
    Worker(std::string broker_host, int broker_port, std::string token,
           Config device_config = {})
        : host_(std::move(broker_host)), port_(broker_port),
          token_(std::move(token)), config_(std::move(device_config)) {}

    /// Poll once. Returns true when a job was claimed and completed
    /// (successfully or as failed).
    bool poll_once() {
        httplib::Client client(host_, port_);
        client.set_read_timeout(std::chrono::seconds(120));
        httplib::Headers auth{{"Authorization", "Bearer " + token_}};
        auto res = client.Post("/worker/poll", auth, "", "application/json");
        if (!res || res->status != 200)
            return false;

        const json j = json::parse(res->body);
        Job job = job_from_request(j, 0.0);
        job.id = j.at("id");
        const std::string claim_token = j.at("claim_token");

        json upload{{"claim_token", claim_token}};
        try {
            const std::string payload = execute_job(job, config_);
            upload["status"] = "done";
            upload["payload_b64"] = detail::b64_encode(payload);
        } catch (const std::exception& e) {
            upload["status"] = "failed";
            upload["reason"] = failure_reason_for(e);
        }
        auto up = client.Post("/worker/result/" + job.id, auth, upload.dump(),
                              "application/json");
        return up && up->status == 200;
    }

    /// Poll until stopped, sleeping between empty polls.
    void run(const std::atomic<bool>& stop, double idle_sleep_s = 0.2) {
        while (!stop.load()) {
            if (!poll_once())
                std::this_thread::sleep_for(
                    std::chrono::duration<double>(idle_sleep_s));
        }
    }

private:
    std::string host_;
    int port_;
    std::string token_;
    Config config_;
};

} // namespace icarusq

#endif
