#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "idedit/adaptation.hpp"
#include "idedit/editing.hpp"
#include "idedit/inversion.hpp"
#include "idedit/model.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace idedit {

struct ServiceConfig {
    std::size_t cache_capacity = 8;          // adapted decoders kept in memory
    std::filesystem::path spill_dir;         // evicted decoders; empty = temp directory
    std::size_t max_upload_bytes = 4u << 20;
    std::string cors_origin = "*";
    AdaptationConfig adaptation;             // defaults for POST .../adapt
    LatentOptConfig latent_opt;              // defaults for method=latent_opt
};

enum class JobKind { latent_opt, adapt };
enum class JobStatus { queued, running, done, failed };

std::string to_string(JobKind k);
std::string to_string(JobStatus s);

struct JobSnapshot {
    std::string job_id;
    std::string session_id;
    JobKind kind = JobKind::adapt;
    JobStatus status = JobStatus::queued;
    double progress = 0.0;
    std::vector<double> loss_curve;
    std::string error;
    nlohmann::json result = nlohmann::json::object();
};

// LRU of adapted models keyed by session. Evicted entries are written as
// checkpoints and transparently reloaded on the next access.
class AdaptedModelCache {
public:
    AdaptedModelCache(std::size_t capacity, std::filesystem::path spill_dir);

    void put(const std::string& key, std::shared_ptr<const GenerativeAutoencoder> model);
    std::shared_ptr<const GenerativeAutoencoder> get(const std::string& key);
    void erase(const std::string& key);
    bool resident(const std::string& key) const;
    std::size_t resident_count() const;

private:
    std::filesystem::path spill_path(const std::string& key) const;

    std::size_t capacity_;
    std::filesystem::path spill_dir_;
    mutable std::mutex mu_;
    std::list<std::pair<std::string, std::shared_ptr<const GenerativeAutoencoder>>> lru_;
    std::map<std::string, std::filesystem::path> spilled_;
};

// HTTP JSON API over the invert / adapt / edit pipeline.
class EditService {
public:
    EditService(std::shared_ptr<const GenerativeAutoencoder> model,
                std::map<std::string, AttributeDirection> directions, ServiceConfig config = {});
    ~EditService();

    EditService(const EditService&) = delete;
    EditService& operator=(const EditService&) = delete;

    // Binds to host:port (port 0 picks a free port) and returns the bound port.
    int bind(const std::string& host, int port);
    // Blocks serving requests until stop().
    void serve();
    // bind + serve on a background thread; returns the bound port.
    int start(const std::string& host, int port);
    void stop();

    std::optional<JobSnapshot> job(const std::string& id) const;
    // Blocks until the job finishes or the timeout elapses.
    std::optional<JobSnapshot> wait_job(const std::string& id, std::chrono::milliseconds timeout) const;

private:
    struct Session;
    struct Job;

    void install_routes();
    std::shared_ptr<Session> find_session(const std::string& id) const;
    std::shared_ptr<Job> find_job(const std::string& id) const;
    std::shared_ptr<Job> new_job(JobKind kind, const std::string& session_id);
    std::string store_image(const ImageTensor& image);
    void launch(std::function<void()> work);

    std::shared_ptr<const GenerativeAutoencoder> model_;
    std::map<std::string, AttributeDirection> directions_;
    ServiceConfig config_;
    std::unique_ptr<httplib::Server> server_;
    AdaptedModelCache adapted_;

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::map<std::string, std::shared_ptr<const std::vector<std::uint8_t>>> images_;
    std::uint64_t counter_ = 0;

    std::mutex workers_mu_;
    std::vector<std::thread> workers_;
    std::atomic<bool> shutting_down_{false};
    std::thread server_thread_;
};

// Content hash of a latent, used as its public identifier.
std::string latent_id(const LatentCode& w);

}  // namespace idedit
