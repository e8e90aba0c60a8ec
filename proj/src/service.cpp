#include "idedit/service.hpp"

#include <condition_variable>
#include <cstdio>
#include <ctime>
#include <random>

#include "httplib.h"
#include "idedit/checkpoint.hpp"
#include "idedit/errors.hpp"
#include "json.hpp"

namespace idedit {

using nlohmann::json;

std::string to_string(JobKind k) { return k == JobKind::adapt ? "adapt" : "latent_opt"; }

std::string to_string(JobStatus s) {
    switch (s) {
        case JobStatus::queued: return "queued";
        case JobStatus::running: return "running";
        case JobStatus::done: return "done";
        case JobStatus::failed: return "failed";
    }
    return "unknown";
}

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex(std::uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string now_iso() {
    const std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

struct HttpError {
    int status;
    std::string message;
};

struct Cancelled {};

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        json j = json::parse(req.body);
        if (!j.is_object()) throw HttpError{422, "request body must be a JSON object"};
        return j;
    } catch (const json::exception& e) {
        throw HttpError{422, std::string("malformed JSON body: ") + e.what()};
    }
}

template <class T>
std::optional<T> field(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw HttpError{422, std::string("field '") + key + "' has the wrong type"};
    }
}

std::string image_url(const std::string& id) { return "/api/v1/images/" + id; }

}  // namespace

std::string latent_id(const LatentCode& w) {
    return hex(fnv1a(w.w.data(), w.w.size() * sizeof(double)));
}

// ---------------------------------------------------------------- cache

AdaptedModelCache::AdaptedModelCache(std::size_t capacity, std::filesystem::path spill_dir)
    : capacity_(std::max<std::size_t>(1, capacity)), spill_dir_(std::move(spill_dir)) {}

std::filesystem::path AdaptedModelCache::spill_path(const std::string& key) const {
    return spill_dir_ / (key + ".ckpt");
}

void AdaptedModelCache::put(const std::string& key, std::shared_ptr<const GenerativeAutoencoder> model) {
    std::lock_guard lock(mu_);
    lru_.remove_if([&](const auto& e) { return e.first == key; });
    if (auto it = spilled_.find(key); it != spilled_.end()) {
        std::filesystem::remove(it->second);
        spilled_.erase(it);
    }
    lru_.emplace_front(key, std::move(model));
    while (lru_.size() > capacity_) {
        auto& victim = lru_.back();
        const auto path = spill_path(victim.first);
        save_checkpoint(*victim.second, path);
        spilled_[victim.first] = path;
        lru_.pop_back();
    }
}

std::shared_ptr<const GenerativeAutoencoder> AdaptedModelCache::get(const std::string& key) {
    std::shared_ptr<const GenerativeAutoencoder> model;
    {
        std::lock_guard lock(mu_);
        for (auto it = lru_.begin(); it != lru_.end(); ++it) {
            if (it->first == key) {
                lru_.splice(lru_.begin(), lru_, it);
                return lru_.front().second;
            }
        }
        auto it = spilled_.find(key);
        if (it == spilled_.end()) return nullptr;
        auto loaded = std::make_shared<GenerativeAutoencoder>(load_checkpoint(it->second));
        loaded->set_mode(Mode::eval);
        model = std::move(loaded);
    }
    put(key, model);
    return model;
}

void AdaptedModelCache::erase(const std::string& key) {
    std::lock_guard lock(mu_);
    lru_.remove_if([&](const auto& e) { return e.first == key; });
    if (auto it = spilled_.find(key); it != spilled_.end()) {
        std::filesystem::remove(it->second);
        spilled_.erase(it);
    }
}

bool AdaptedModelCache::resident(const std::string& key) const {
    std::lock_guard lock(mu_);
    for (const auto& e : lru_) {
        if (e.first == key) return true;
    }
    return false;
}

std::size_t AdaptedModelCache::resident_count() const {
    std::lock_guard lock(mu_);
    return lru_.size();
}

// ---------------------------------------------------------------- service

struct EditService::Session {
    std::mutex mu;
    std::string id;
    std::string created_at;
    std::optional<ImageTensor> image;
    std::optional<LatentCode> latent;
    std::string recon_url;
    bool adapted = false;
    std::string adapted_recon_url;
    bool job_running = false;
    std::uint64_t generation = 0;  // bumped whenever the image or latent changes
};

struct EditService::Job {
    mutable std::mutex mu;
    mutable std::condition_variable cv;
    JobSnapshot snap;

    void update(const std::function<void(JobSnapshot&)>& fn) {
        {
            std::lock_guard lock(mu);
            fn(snap);
        }
        cv.notify_all();
    }
};

EditService::EditService(std::shared_ptr<const GenerativeAutoencoder> model,
                         std::map<std::string, AttributeDirection> directions, ServiceConfig config)
    : model_(std::move(model)),
      directions_(std::move(directions)),
      config_(std::move(config)),
      server_(std::make_unique<httplib::Server>()),
      adapted_(config_.cache_capacity,
               config_.spill_dir.empty()
                   ? std::filesystem::temp_directory_path() /
                         ("idedit-spill-" + hex(std::random_device{}() ^ reinterpret_cast<std::uintptr_t>(this)))
                   : config_.spill_dir) {
    if (!model_) throw ValidationError("service needs a model");
    if (model_->mode() != Mode::eval) throw ValidationError("service model must be in eval mode");
    for (const auto& [name, d] : directions_) {
        if (d.d_w() != model_->d_w()) throw ValidationError("direction " + name + " has wrong d_w");
    }
    install_routes();
}

EditService::~EditService() {
    stop();
    shutting_down_ = true;
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(workers_mu_);
        workers.swap(workers_);
    }
    for (auto& t : workers) {
        if (t.joinable()) t.join();
    }
}

int EditService::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void EditService::serve() { server_->listen_after_bind(); }

int EditService::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    if (bound < 0) throw IoError("cannot bind " + host);
    server_thread_ = std::thread([this] { serve(); });
    server_->wait_until_ready();
    return bound;
}

void EditService::stop() {
    if (server_) server_->stop();
    if (server_thread_.joinable()) server_thread_.join();
}

std::shared_ptr<EditService::Session> EditService::find_session(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HttpError{404, "unknown session " + id};
    return it->second;
}

std::shared_ptr<EditService::Job> EditService::find_job(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = jobs_.find(id);
    return it == jobs_.end() ? nullptr : it->second;
}

std::shared_ptr<EditService::Job> EditService::new_job(JobKind kind, const std::string& session_id) {
    auto job = std::make_shared<Job>();
    std::lock_guard lock(mu_);
    job->snap.job_id = "job-" + hex(fnv1a(&counter_, sizeof counter_, std::random_device{}()));
    ++counter_;
    job->snap.session_id = session_id;
    job->snap.kind = kind;
    jobs_[job->snap.job_id] = job;
    return job;
}

std::optional<JobSnapshot> EditService::job(const std::string& id) const {
    auto j = find_job(id);
    if (!j) return std::nullopt;
    std::lock_guard lock(j->mu);
    return j->snap;
}

std::optional<JobSnapshot> EditService::wait_job(const std::string& id, std::chrono::milliseconds timeout) const {
    auto j = find_job(id);
    if (!j) return std::nullopt;
    std::unique_lock lock(j->mu);
    j->cv.wait_for(lock, timeout, [&] {
        return j->snap.status == JobStatus::done || j->snap.status == JobStatus::failed;
    });
    return j->snap;
}

std::string EditService::store_image(const ImageTensor& image) {
    auto bytes = std::make_shared<const std::vector<std::uint8_t>>(encode_png(image));
    const std::string id = hex(fnv1a(bytes->data(), bytes->size()));
    std::lock_guard lock(mu_);
    images_.emplace(id, std::move(bytes));
    return id;
}

void EditService::launch(std::function<void()> work) {
    std::lock_guard lock(workers_mu_);
    workers_.emplace_back(std::move(work));
}

void EditService::install_routes() {
    auto& s = *server_;
    s.set_payload_max_length(config_.max_upload_bytes);
    s.set_default_headers({{"Access-Control-Allow-Origin", config_.cors_origin},
                           {"Access-Control-Allow-Methods", "GET, POST, PUT, OPTIONS"},
                           {"Access-Control-Allow-Headers", "Content-Type"}});

    auto reply = [](httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(body.dump(), "application/json");
    };
    // Wraps a handler so HttpError and library errors map to JSON error bodies.
    auto guarded = [reply](auto fn) {
        return [fn, reply](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const HttpError& e) {
                reply(res, e.status, {{"error", e.message}});
            } catch (const DimensionError& e) {
                reply(res, 422, {{"error", e.what()}});
            } catch (const ValidationError& e) {
                reply(res, 422, {{"error", e.what()}});
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}});
            }
        };
    };

    s.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    s.Get("/api/v1/health", guarded([reply](const httplib::Request&, httplib::Response& res) {
              reply(res, 200, {{"status", "ok"}});
          }));

    s.Post("/api/v1/sessions", guarded([this, reply](const httplib::Request&, httplib::Response& res) {
               auto session = std::make_shared<Session>();
               session->created_at = now_iso();
               {
                   std::lock_guard lock(mu_);
                   std::random_device rd;
                   session->id = "s-" + hex((static_cast<std::uint64_t>(rd()) << 32) ^ rd() ^ counter_++);
                   sessions_[session->id] = session;
               }
               reply(res, 201, {{"session_id", session->id}, {"created_at", session->created_at}});
           }));

    s.Get(R"(/api/v1/sessions/([^/]+))",
          guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
              auto session = find_session(req.matches[1]);
              std::lock_guard lock(session->mu);
              json j = {{"session_id", session->id},
                        {"created_at", session->created_at},
                        {"has_image", session->image.has_value()},
                        {"adapted", session->adapted},
                        {"job_running", session->job_running}};
              j["latent_id"] = session->latent ? json(latent_id(*session->latent)) : json(nullptr);
              j["recon_image_url"] = session->recon_url.empty() ? json(nullptr) : json(session->recon_url);
              j["adapted_recon_image_url"] =
                  session->adapted_recon_url.empty() ? json(nullptr) : json(session->adapted_recon_url);
              reply(res, 200, j);
          }));

    s.Put(R"(/api/v1/sessions/([^/]+)/image)",
          guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
              auto session = find_session(req.matches[1]);
              if (req.body.size() > config_.max_upload_bytes) throw HttpError{413, "upload too large"};
              if (req.body.empty()) throw HttpError{422, "empty image body"};
              ImageTensor img;
              try {
                  img = decode_png(std::vector<std::uint8_t>(req.body.begin(), req.body.end()));
              } catch (const std::exception& e) {
                  throw HttpError{422, std::string("body is not a valid PNG: ") + e.what()};
              }
              img = resize_square(img, model_->image_size());
              validate_model_image(img, model_->image_size());
              const std::string id = store_image(img);
              std::lock_guard lock(session->mu);
              if (session->job_running) throw HttpError{409, "a job is running for this session"};
              session->image = std::move(img);
              session->latent.reset();
              session->recon_url.clear();
              session->adapted = false;
              session->adapted_recon_url.clear();
              ++session->generation;
              adapted_.erase(session->id);
              reply(res, 200,
                    {{"session_id", session->id},
                     {"width", model_->image_size()},
                     {"height", model_->image_size()},
                     {"image_url", image_url(id)}});
          }));

    s.Post(R"(/api/v1/sessions/([^/]+)/invert)",
           guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
               auto session = find_session(req.matches[1]);
               const json body = parse_body(req);
               const auto method = field<std::string>(body, "method").value_or("");
               if (method != "encoder" && method != "latent_opt" && method != "random") {
                   throw HttpError{422, "method must be one of encoder, latent_opt, random"};
               }
               const auto seed = field<std::uint64_t>(body, "seed");
               const auto steps = field<int>(body, "steps");
               if (steps && *steps < 1) throw HttpError{422, "steps must be >= 1"};

               std::unique_lock lock(session->mu);
               if (session->job_running) throw HttpError{409, "a job is running for this session"};
               if (method == "random") {
                   const LatentCode w = project_random(*model_, seed.value_or(0));
                   const std::string recon = image_url(store_image(decode(*model_, w)));
                   session->latent = w;
                   session->recon_url = recon;
                   session->adapted = false;
                   session->adapted_recon_url.clear();
                   ++session->generation;
                   adapted_.erase(session->id);
                   reply(res, 200, {{"latent_id", latent_id(w)}, {"recon_image_url", recon}});
                   return;
               }
               if (!session->image) throw HttpError{409, "upload an image before inverting"};
               if (method == "encoder") {
                   const LatentCode w = project_encoder(*model_, *session->image);
                   const std::string recon = image_url(store_image(decode(*model_, w)));
                   session->latent = w;
                   session->recon_url = recon;
                   session->adapted = false;
                   session->adapted_recon_url.clear();
                   ++session->generation;
                   adapted_.erase(session->id);
                   reply(res, 200, {{"latent_id", latent_id(w)}, {"recon_image_url", recon}});
                   return;
               }

               LatentOptConfig cfg = config_.latent_opt;
               if (steps) cfg.steps = *steps;
               if (seed) cfg.seed = *seed;
               auto job = new_job(JobKind::latent_opt, session->id);
               session->job_running = true;
               const ImageTensor image = *session->image;
               const std::uint64_t generation = ++session->generation;
               session->latent.reset();
               session->recon_url.clear();
               session->adapted = false;
               session->adapted_recon_url.clear();
               adapted_.erase(session->id);
               lock.unlock();

               launch([this, job, session, image, cfg, generation] {
                   job->update([](JobSnapshot& s) { s.status = JobStatus::running; });
                   try {
                       const auto r = project_latent_opt(
                           *model_, image, cfg, *default_extractor(), [&](int step, double loss) {
                               if (shutting_down_) throw Cancelled{};
                               job->update([&](JobSnapshot& s) {
                                   s.loss_curve.push_back(loss);
                                   s.progress = std::max(s.progress, static_cast<double>(step) / cfg.steps);
                               });
                           });
                       const std::string recon = image_url(store_image(decode(*model_, r.latent)));
                       {
                           std::lock_guard l(session->mu);
                           if (session->generation == generation) {
                               session->latent = r.latent;
                               session->recon_url = recon;
                           }
                           session->job_running = false;
                       }
                       job->update([&](JobSnapshot& s) {
                           s.status = JobStatus::done;
                           s.progress = 1.0;
                           s.result = {{"latent_id", latent_id(r.latent)}, {"recon_image_url", recon}};
                       });
                   } catch (const Cancelled&) {
                       { std::lock_guard l(session->mu); session->job_running = false; }
                       job->update([](JobSnapshot& s) { s.status = JobStatus::failed; s.error = "service shutting down"; });
                   } catch (const std::exception& e) {
                       { std::lock_guard l(session->mu); session->job_running = false; }
                       const std::string msg = e.what();
                       job->update([&](JobSnapshot& s) { s.status = JobStatus::failed; s.error = msg; });
                   }
               });
               reply(res, 202, {{"job_id", job->snap.job_id}});
           }));

    s.Post(R"(/api/v1/sessions/([^/]+)/adapt)",
           guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
               auto session = find_session(req.matches[1]);
               const json body = parse_body(req);
               AdaptationConfig cfg = config_.adaptation;
               if (auto v = field<int>(body, "steps")) cfg.steps = *v;
               if (auto v = field<double>(body, "lambda_mse")) cfg.lambda_mse = *v;
               if (auto v = field<double>(body, "lambda_vgg")) cfg.lambda_vgg = *v;
               try {
                   cfg.validate();
               } catch (const ValidationError& e) {
                   throw HttpError{422, e.what()};
               }

               std::unique_lock lock(session->mu);
               if (session->job_running) throw HttpError{409, "a job is already running for this session"};
               if (!session->image) throw HttpError{409, "upload an image before adapting"};
               if (!session->latent) throw HttpError{409, "invert the image before adapting"};
               auto job = new_job(JobKind::adapt, session->id);
               session->job_running = true;
               const ImageTensor image = *session->image;
               const LatentCode w = *session->latent;
               const std::uint64_t generation = session->generation;
               lock.unlock();

               launch([this, job, session, image, w, cfg, generation] {
                   job->update([](JobSnapshot& s) { s.status = JobStatus::running; });
                   try {
                       auto r = adapt_decoder(*model_, w, image, cfg, *default_extractor(), [&](int step, double loss) {
                           if (shutting_down_) throw Cancelled{};
                           job->update([&](JobSnapshot& s) {
                               s.loss_curve.push_back(loss);
                               s.progress = std::max(s.progress, static_cast<double>(step) / cfg.steps);
                           });
                       });
                       auto adapted = std::make_shared<const GenerativeAutoencoder>(std::move(r.adapted_model));
                       const std::string recon = image_url(store_image(decode(*adapted, w)));
                       bool applied = false;
                       {
                           std::lock_guard l(session->mu);
                           if (session->generation == generation) {
                               adapted_.put(session->id, adapted);
                               session->adapted = true;
                               session->adapted_recon_url = recon;
                               applied = true;
                           }
                           session->job_running = false;
                       }
                       job->update([&](JobSnapshot& s) {
                           if (applied) {
                               s.status = JobStatus::done;
                               s.progress = 1.0;
                               s.result = {{"recon_image_url", recon}, {"latent_id", latent_id(w)}};
                           } else {
                               s.status = JobStatus::failed;
                               s.error = "session changed while adapting";
                           }
                       });
                   } catch (const Cancelled&) {
                       { std::lock_guard l(session->mu); session->job_running = false; }
                       job->update([](JobSnapshot& s) { s.status = JobStatus::failed; s.error = "service shutting down"; });
                   } catch (const std::exception& e) {
                       { std::lock_guard l(session->mu); session->job_running = false; }
                       const std::string msg = e.what();
                       job->update([&](JobSnapshot& s) { s.status = JobStatus::failed; s.error = msg; });
                   }
               });
               reply(res, 202, {{"job_id", job->snap.job_id}});
           }));

    s.Get(R"(/api/v1/jobs/([^/]+))", guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
              const auto snap = job(req.matches[1]);
              if (!snap) throw HttpError{404, "unknown job " + std::string(req.matches[1])};
              json j = {{"job_id", snap->job_id},
                        {"session_id", snap->session_id},
                        {"kind", to_string(snap->kind)},
                        {"status", to_string(snap->status)},
                        {"progress", snap->progress},
                        {"loss_curve", snap->loss_curve}};
              if (!snap->error.empty()) j["error"] = snap->error;
              if (!snap->result.empty()) j["result"] = snap->result;
              reply(res, 200, j);
          }));

    s.Get("/api/v1/attributes", guarded([this, reply](const httplib::Request&, httplib::Response& res) {
              json arr = json::array();
              for (const auto& [name, d] : directions_) {
                  arr.push_back({{"name", name}, {"train_accuracy", d.train_accuracy}});
              }
              reply(res, 200, arr);
          }));

    s.Post(R"(/api/v1/sessions/([^/]+)/edit)",
           guarded([this, reply](const httplib::Request& req, httplib::Response& res) {
               auto session = find_session(req.matches[1]);
               const json body = parse_body(req);
               const auto attribute = field<std::string>(body, "attribute");
               const auto alpha = field<double>(body, "alpha");
               const bool use_base = field<bool>(body, "use_base").value_or(false);
               if (!attribute) throw HttpError{422, "attribute is required"};
               if (!alpha || !std::isfinite(*alpha)) throw HttpError{422, "alpha must be a finite number"};
               auto dir = directions_.find(*attribute);
               if (dir == directions_.end()) throw HttpError{422, "unknown attribute " + *attribute};

               std::shared_ptr<const GenerativeAutoencoder> model;
               LatentCode w;
               {
                   std::lock_guard lock(session->mu);
                   if (!session->latent) throw HttpError{409, "invert the image before editing"};
                   w = *session->latent;
                   if (use_base) {
                       model = model_;
                   } else {
                       if (!session->adapted) throw HttpError{409, "adapt before editing or pass use_base=true"};
                       model = adapted_.get(session->id);
                       if (!model) throw HttpError{409, "adapted model is no longer available"};
                   }
               }
               const double raw = *alpha * dir->second.projection_std;
               const ImageTensor out = decode(*model, edit_latent(w, dir->second, raw));
               reply(res, 200,
                     {{"image_url", image_url(store_image(out))}, {"attribute", *attribute}, {"alpha", *alpha}});
           }));

    s.Get(R"(/api/v1/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
              std::shared_ptr<const std::vector<std::uint8_t>> bytes;
              {
                  std::lock_guard lock(mu_);
                  auto it = images_.find(req.matches[1]);
                  if (it == images_.end()) throw HttpError{404, "unknown image " + std::string(req.matches[1])};
                  bytes = it->second;
              }
              res.status = 200;
              res.set_content(std::string(bytes->begin(), bytes->end()), "image/png");
          }));
}

}  // namespace idedit
