#ifndef ICARUSQ_JOB_STORE_HPP
#define ICARUSQ_JOB_STORE_HPP

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "icarusq/capture_io.hpp"
#include "icarusq/job.hpp"

namespace icarusq {

/// Durable FIFO job store backed by an append-only record log. Every
/// mutation is one JSON line fsync'd to <dir>/log.jsonl; result payloads
/// live in <dir>/results/. Reopening the directory replays the log, so a
/// broker restart loses nothing.
class JobStore {
public:
    explicit JobStore(std::filesystem::path dir, double lease_timeout_s = 300.0)
        : dir_(std::move(dir)), lease_timeout_s_(lease_timeout_s) {
        std::filesystem::create_directories(dir_ / "results");
        replay();
        log_.open(dir_ / "log.jsonl", std::ios::app);
        if (!log_)
            throw std::runtime_error("JobStore: cannot open log in " + dir_.string());
    }

    static double now() {
        return std::chrono::duration<double>(
                   std::chrono::system_clock::now().time_since_epoch())
            .count();
    }

    /// Persist a new job. Resubmission with a previously seen idempotency
    /// key returns the original id without creating a duplicate.
    std::string submit(Job job) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!job.idempotency_key.empty()) {
            auto it = idempotency_.find(job.idempotency_key);
            if (it != idempotency_.end())
                return it->second;
        }
        job.id = make_id();
        job.status = JobStatus::queued;
        job.submitted_at = now();
        append({{"op", "submit"}, {"job", job_to_json(job)}});
        order_.push_back(job.id);
        if (!job.idempotency_key.empty())
            idempotency_[job.idempotency_key] = job.id;
        jobs_[job.id] = std::move(job);
        return order_.back();
    }

    /// Claim the oldest queued job: it transitions to running and carries a
    /// fresh claim token. Jobs stuck in running past the lease timeout are
    /// requeued first.
    std::optional<Job> poll_next() {
        std::lock_guard<std::mutex> lock(mu_);
        const double t = now();
        for (auto& [id, job] : jobs_) {
            if (job.status == JobStatus::running &&
                t > job.claimed_at + lease_timeout_s_) {
                job.status = JobStatus::queued;
                job.claim_token.clear();
                append({{"op", "requeue"}, {"id", id}});
            }
        }
        for (const auto& id : order_) {
            auto& job = jobs_[id];
            if (job.status != JobStatus::queued)
                continue;
            job.status = JobStatus::running;
            job.claim_token = make_id();
            job.claimed_at = t;
            append({{"op", "claim"},
                    {"id", id},
                    {"token", job.claim_token},
                    {"at", t}});
            return job;
        }
        return std::nullopt;
    }

    /// Store a result for a claimed job. The claim token must match the
    /// live claim; a stale claimant (superseded after lease expiry) is
    /// rejected, and a job never completes twice.
    void store_result(const std::string& id, const std::string& claim_token,
                      JobStatus final_status, const std::string& payload,
                      const std::string& reason = "") {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end())
            throw std::out_of_range("store_result: unknown job " + id);
        Job& job = it->second;
        if (job.status == JobStatus::done || job.status == JobStatus::failed)
            throw InvalidStateError("store_result: job " + id + " already finished");
        if (job.status != JobStatus::running || job.claim_token != claim_token)
            throw InvalidStateError("store_result: claim token mismatch for " + id);
        if (final_status != JobStatus::done && final_status != JobStatus::failed)
            throw std::invalid_argument("store_result: final status must be done/failed");

        std::string file;
        if (final_status == JobStatus::done) {
            file = "results/" + id + ".bin";
            write_file((dir_ / file).string(), payload);
        }
        job.status = final_status;
        job.failure_reason = reason;
        job.has_result = final_status == JobStatus::done;
        job.finished_at = now();
        job.claim_token.clear();
        append({{"op", "finish"},
                {"id", id},
                {"status", to_string(final_status)},
                {"reason", reason},
                {"file", file},
                {"at", job.finished_at}});
    }

    std::optional<Job> get(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end())
            return std::nullopt;
        return it->second;
    }

    std::string result_bytes(const std::string& id) const {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = jobs_.find(id);
        if (it == jobs_.end())
            throw std::out_of_range("result_bytes: unknown job " + id);
        if (!it->second.has_result)
            throw InvalidStateError("result_bytes: job " + id + " has no result");
        return read_file((dir_ / ("results/" + id + ".bin")).string());
    }

    std::size_t queued_count() const {
        std::lock_guard<std::mutex> lock(mu_);
        std::size_t n = 0;
        for (const auto& [id, job] : jobs_)
            n += job.status == JobStatus::queued;
        return n;
    }

    /// Rewrite the log as one snapshot line per job, dropping superseded
    /// claim/requeue records.
    void compact() {
        std::lock_guard<std::mutex> lock(mu_);
        const auto tmp = dir_ / "log.jsonl.tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            for (const auto& id : order_) {
                json j{{"op", "snapshot"}, {"job", job_to_json(jobs_[id])}};
                out << j.dump() << "\n";
            }
        }
        log_.close();
        std::filesystem::rename(tmp, dir_ / "log.jsonl");
        log_.open(dir_ / "log.jsonl", std::ios::app);
    }

    double lease_timeout_s() const { return lease_timeout_s_; }

private:
    void append(const json& record) {
        log_ << record.dump() << "\n";
        log_.flush();
    }

    void replay() {
        std::ifstream in(dir_ / "log.jsonl");
        if (!in)
            return;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty())
                continue;
            json j = json::parse(line);
            const std::string op = j["op"];
            if (op == "submit" || op == "snapshot") {
                Job job = job_from_log(j["job"]);
                if (!jobs_.count(job.id))
                    order_.push_back(job.id);
                if (!job.idempotency_key.empty())
                    idempotency_[job.idempotency_key] = job.id;
                jobs_[job.id] = std::move(job);
            } else if (op == "claim") {
                auto& job = jobs_.at(j["id"]);
                job.status = JobStatus::running;
                job.claim_token = j["token"];
                job.claimed_at = j["at"];
            } else if (op == "requeue") {
                auto& job = jobs_.at(j["id"]);
                job.status = JobStatus::queued;
                job.claim_token.clear();
            } else if (op == "finish") {
                auto& job = jobs_.at(j["id"]);
                job.status = job_status_from_string(j["status"]);
                job.failure_reason = j["reason"];
                job.has_result = job.status == JobStatus::done;
                job.finished_at = j["at"];
                job.claim_token.clear();
            }
        }
    }

    static Job job_from_log(const json& j) {
        Job job = job_from_request(j, 0.0); // log records were validated at submission
        job.id = j["id"];
        job.status = job_status_from_string(j["status"]);
        job.failure_reason = j["failure_reason"];
        job.has_result = j["has_result"];
        job.submitted_at = j["submitted_at"];
        job.finished_at = j["finished_at"];
        return job;
    }

    std::string make_id() {
        std::uniform_int_distribution<std::uint64_t> dist;
        std::ostringstream os;
        os << std::hex << dist(rng_) << dist(rng_);
        return os.str();
    }

    std::filesystem::path dir_;
    double lease_timeout_s_;
    mutable std::mutex mu_;
    std::ofstream log_;
    std::map<std::string, Job> jobs_;
    std::vector<std::string> order_; // submission order, FIFO dispatch
    std::map<std::string, std::string> idempotency_;
    std::mt19937_64 rng_{std::random_device{}()};
};

} // namespace icarusq

#endif
