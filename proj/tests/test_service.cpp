#include <gtest/gtest.h>

#include "httplib.h"
#include "idedit/checkpoint.hpp"
#include "idedit/errors.hpp"
#include "idedit/faces.hpp"
#include "idedit/service.hpp"
#include "test_util.hpp"

using namespace idedit;
using json = nlohmann::json;

namespace {

AttributeDirection axis_direction(const std::string& name, int axis, int d_w) {
    AttributeDirection d;
    d.name = name;
    d.normal.assign(static_cast<std::size_t>(d_w), 0.0);
    d.normal[static_cast<std::size_t>(axis)] = 1.0;
    d.train_accuracy = 0.75;
    d.projection_std = 0.5;
    return d;
}

std::string png_body(std::uint64_t seed, int size = 16) {
    const auto bytes = encode_png(render(sample_factors(seed, 1).front(), size));
    return {bytes.begin(), bytes.end()};
}

class ServiceTest : public ::testing::Test {
protected:
    void SetUp() override {
        model_ = std::make_shared<const GenerativeAutoencoder>(GenerativeAutoencoder::initialize({16, 16, 2}, 2));
        ServiceConfig cfg;
        cfg.adaptation.steps = 4;
        cfg.adaptation.step_size = 1e-3;
        cfg.latent_opt.steps = 4;
        cfg.max_upload_bytes = 64 * 1024;
        cfg.cache_capacity = 1;
        spill_ = idedit::testing::temp_dir("spill");
        cfg.spill_dir = spill_;
        service_ = std::make_unique<EditService>(
            model_, std::map<std::string, AttributeDirection>{{"smile", axis_direction("smile", 0, 16)},
                                                              {"age", axis_direction("age", 1, 16)}},
            cfg);
        port_ = service_->start("127.0.0.1", 0);
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }
    void TearDown() override {
        client_.reset();
        service_.reset();
        std::filesystem::remove_all(spill_);
    }

    json post(const std::string& path, const json& body, int expect) {
        auto r = client_->Post(path, body.dump(), "application/json");
        EXPECT_TRUE(r) << path;
        if (!r) return {};
        EXPECT_EQ(r->status, expect) << path << " " << r->body;
        return json::parse(r->body, nullptr, false);
    }
    json get(const std::string& path, int expect) {
        auto r = client_->Get(path);
        EXPECT_TRUE(r) << path;
        if (!r) return {};
        EXPECT_EQ(r->status, expect) << path << " " << r->body;
        return json::parse(r->body, nullptr, false);
    }
    std::string new_session() { return post("/api/v1/sessions", json::object(), 201)["session_id"]; }
    void upload(const std::string& sid, std::uint64_t seed) {
        auto r = client_->Put("/api/v1/sessions/" + sid + "/image", png_body(seed), "image/png");
        ASSERT_TRUE(r);
        ASSERT_EQ(r->status, 200) << r->body;
    }
    JobSnapshot finish(const std::string& job_id) {
        auto snap = service_->wait_job(job_id, std::chrono::seconds(60));
        EXPECT_TRUE(snap.has_value());
        return *snap;
    }
    std::string image_bytes(const std::string& url) {
        auto r = client_->Get(url);
        EXPECT_TRUE(r && r->status == 200) << url;
        return r ? r->body : "";
    }
    std::string adapted_session(std::uint64_t seed) {
        const auto sid = new_session();
        upload(sid, seed);
        post("/api/v1/sessions/" + sid + "/invert", {{"method", "encoder"}}, 200);
        const auto job = post("/api/v1/sessions/" + sid + "/adapt", json::object(), 202)["job_id"];
        EXPECT_EQ(finish(job).status, JobStatus::done);
        return sid;
    }

    std::shared_ptr<const GenerativeAutoencoder> model_;
    std::filesystem::path spill_;
    std::unique_ptr<EditService> service_;
    std::unique_ptr<httplib::Client> client_;
    int port_ = 0;
};

}  // namespace

TEST_F(ServiceTest, HealthAttributesAndCors) {
    EXPECT_EQ(get("/api/v1/health", 200)["status"], "ok");
    const auto attrs = get("/api/v1/attributes", 200);
    ASSERT_EQ(attrs.size(), 2u);
    EXPECT_EQ(attrs[0]["name"], "age");
    EXPECT_EQ(attrs[1]["train_accuracy"], 0.75);
    auto r = client_->Options("/api/v1/sessions");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 204);
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
}

TEST_F(ServiceTest, UnknownIdsAre404) {
    get("/api/v1/sessions/nope", 404);
    get("/api/v1/jobs/nope", 404);
    get("/api/v1/images/nope", 404);
    post("/api/v1/sessions/nope/invert", {{"method", "encoder"}}, 404);
}

TEST_F(ServiceTest, UploadValidation) {
    const auto sid = new_session();
    auto r = client_->Put("/api/v1/sessions/" + sid + "/image", "not a png", "image/png");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);
    r = client_->Put("/api/v1/sessions/" + sid + "/image", std::string(100 * 1024, 'x'), "image/png");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 413);
    r = client_->Put("/api/v1/sessions/" + sid + "/image", png_body(1, 40), "image/png");
    ASSERT_TRUE(r);
    ASSERT_EQ(r->status, 200);
    EXPECT_EQ(json::parse(r->body)["width"], 16);
    EXPECT_TRUE(get("/api/v1/sessions/" + sid, 200)["has_image"].get<bool>());
}

TEST_F(ServiceTest, MalformedBodiesAre422) {
    const auto sid = new_session();
    auto r = client_->Post("/api/v1/sessions/" + sid + "/invert", "{oops", "application/json");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 422);
    post("/api/v1/sessions/" + sid + "/invert", {{"method", "magic"}}, 422);
    post("/api/v1/sessions/" + sid + "/invert", {{"method", "random"}, {"seed", "x"}}, 422);
    post("/api/v1/sessions/" + sid + "/adapt", {{"steps", 0}}, 422);
}

TEST_F(ServiceTest, RandomInversionIsSeeded) {
    const auto a = new_session(), b = new_session();
    const auto ra = post("/api/v1/sessions/" + a + "/invert", {{"method", "random"}, {"seed", 5}}, 200);
    const auto rb = post("/api/v1/sessions/" + b + "/invert", {{"method", "random"}, {"seed", 5}}, 200);
    EXPECT_EQ(ra["latent_id"], rb["latent_id"]);
    EXPECT_EQ(ra["latent_id"], latent_id(sample_prior(*model_, 5)));
    const auto rc = post("/api/v1/sessions/" + b + "/invert", {{"method", "random"}, {"seed", 6}}, 200);
    EXPECT_NE(ra["latent_id"], rc["latent_id"]);
}

TEST_F(ServiceTest, PrerequisitesAre409) {
    const auto sid = new_session();
    post("/api/v1/sessions/" + sid + "/invert", {{"method", "encoder"}}, 409);
    post("/api/v1/sessions/" + sid + "/adapt", json::object(), 409);
    post("/api/v1/sessions/" + sid + "/edit", {{"attribute", "smile"}, {"alpha", 1.0}}, 409);
    upload(sid, 3);
    post("/api/v1/sessions/" + sid + "/adapt", json::object(), 409);
    post("/api/v1/sessions/" + sid + "/invert", {{"method", "encoder"}}, 200);
    post("/api/v1/sessions/" + sid + "/edit", {{"attribute", "smile"}, {"alpha", 1.0}}, 409);
    post("/api/v1/sessions/" + sid + "/edit", {{"attribute", "smile"}, {"alpha", 1.0}, {"use_base", true}}, 200);
    post("/api/v1/sessions/" + sid + "/edit", {{"attribute", "beard"}, {"alpha", 1.0}, {"use_base", true}}, 422);
    post("/api/v1/sessions/" + sid + "/edit", {{"attribute", "smile"}, {"use_base", true}}, 422);
}

TEST_F(ServiceTest, EncoderInversionMatchesLibrary) {
    const auto sid = new_session();
    upload(sid, 4);
    const auto r = post("/api/v1/sessions/" + sid + "/invert", {{"method", "encoder"}}, 200);
    const std::string body = png_body(4);
    const auto img = resize_square(decode_png(std::vector<std::uint8_t>(body.begin(), body.end())), 16);
    const auto w = encode(*model_, img);
    EXPECT_EQ(r["latent_id"], latent_id(w));
    const auto bytes = encode_png(decode(*model_, w));
    EXPECT_EQ(image_bytes(r["recon_image_url"]), std::string(bytes.begin(), bytes.end()));
}

TEST_F(ServiceTest, LatentOptJob) {
    const auto sid = new_session();
    upload(sid, 5);
    const auto r = post("/api/v1/sessions/" + sid + "/invert", {{"method", "latent_opt"}, {"steps", 3}}, 202);
    const auto snap = finish(r["job_id"]);
    EXPECT_EQ(snap.status, JobStatus::done);
    EXPECT_EQ(snap.kind, JobKind::latent_opt);
    EXPECT_EQ(snap.loss_curve.size(), 4u);
    EXPECT_EQ(snap.progress, 1.0);
    const auto s = get("/api/v1/sessions/" + sid, 200);
    EXPECT_EQ(s["latent_id"], snap.result["latent_id"]);
    const auto polled = get("/api/v1/jobs/" + r["job_id"].get<std::string>(), 200);
    EXPECT_EQ(polled["status"], "done");
    EXPECT_EQ(polled["kind"], "latent_opt");
}

TEST_F(ServiceTest, AdaptThenEditAtZeroIsAdaptedReconstruction) {
    const auto sid = new_session();
    upload(sid, 6);
    post("/api/v1/sessions/" + sid + "/invert", {{"method", "encoder"}}, 200);
    const std::string job = post("/api/v1/sessions/" + sid + "/adapt", {{"steps", 5}}, 202)["job_id"];
    std::vector<double> progress;
    for (;;) {
        const auto j = get("/api/v1/jobs/" + job, 200);
        progress.push_back(j["progress"]);
        if (j["status"] == "done" || j["status"] == "failed") break;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    EXPECT_TRUE(std::is_sorted(progress.begin(), progress.end()));
    const auto snap = finish(job);
    ASSERT_EQ(snap.status, JobStatus::done);
    ASSERT_EQ(snap.loss_curve.size(), 6u);
    EXPECT_LE(snap.loss_curve.back(), snap.loss_curve.front());

    const auto s = get("/api/v1/sessions/" + sid, 200);
    EXPECT_TRUE(s["adapted"].get<bool>());
    const auto e0 = post("/api/v1/sessions/" + sid + "/edit", {{"attribute", "smile"}, {"alpha", 0.0}}, 200);
    EXPECT_EQ(image_bytes(e0["image_url"]), image_bytes(s["adapted_recon_image_url"]));
    const auto e1 = post("/api/v1/sessions/" + sid + "/edit", {{"attribute", "smile"}, {"alpha", 2.0}}, 200);
    EXPECT_NE(image_bytes(e1["image_url"]), image_bytes(e0["image_url"]));
    EXPECT_EQ(e1["alpha"], 2.0);
}

TEST_F(ServiceTest, AlphaIsInLatentStdUnits) {
    const auto sid = new_session();
    const auto inv = post("/api/v1/sessions/" + sid + "/invert", {{"method", "random"}, {"seed", 9}}, 200);
    const auto e = post("/api/v1/sessions/" + sid + "/edit",
                        {{"attribute", "age"}, {"alpha", 2.0}, {"use_base", true}}, 200);
    const auto w = sample_prior(*model_, 9);
    const auto expected = encode_png(decode(*model_, edit_latent(w, axis_direction("age", 1, 16), 2.0 * 0.5)));
    EXPECT_EQ(image_bytes(e["image_url"]), std::string(expected.begin(), expected.end()));
}

TEST_F(ServiceTest, SessionsAreIsolated) {
    const auto b = new_session();
    upload(b, 7);
    const auto before = post("/api/v1/sessions/" + b + "/invert", {{"method", "encoder"}}, 200);
    const auto before_bytes = image_bytes(before["recon_image_url"]);
    const auto hash = model_->hash();
    adapted_session(8);
    EXPECT_EQ(model_->hash(), hash);
    const auto after = post("/api/v1/sessions/" + b + "/invert", {{"method", "encoder"}}, 200);
    EXPECT_EQ(image_bytes(after["recon_image_url"]), before_bytes);
    post("/api/v1/sessions/" + b + "/edit", {{"attribute", "smile"}, {"alpha", 1.0}}, 409);
}

TEST_F(ServiceTest, EvictedModelsReloadFromSpill) {
    const auto a = adapted_session(10);
    const auto e_before = post("/api/v1/sessions/" + a + "/edit", {{"attribute", "smile"}, {"alpha", 1.0}}, 200);
    const auto bytes_before = image_bytes(e_before["image_url"]);
    adapted_session(11);  // capacity 1: evicts a
    EXPECT_FALSE(std::filesystem::is_empty(spill_));
    const auto e_after = post("/api/v1/sessions/" + a + "/edit", {{"attribute", "smile"}, {"alpha", 1.0}}, 200);
    EXPECT_EQ(image_bytes(e_after["image_url"]), bytes_before);
}

TEST_F(ServiceTest, GetsDoNotMutate) {
    const auto sid = adapted_session(12);
    const auto s1 = get("/api/v1/sessions/" + sid, 200);
    get("/api/v1/attributes", 200);
    get("/api/v1/health", 200);
    EXPECT_EQ(get("/api/v1/sessions/" + sid, 200), s1);
}

TEST(AdaptedModelCache, LruSpillAndReload) {
    const auto dir = idedit::testing::temp_dir("lru");
    AdaptedModelCache cache(2, dir);
    auto make = [](std::uint64_t seed) {
        return std::make_shared<const GenerativeAutoencoder>(GenerativeAutoencoder::initialize({16, 16, 2}, seed));
    };
    const auto m1 = make(1), m2 = make(2), m3 = make(3);
    cache.put("a", m1);
    cache.put("b", m2);
    cache.get("a");
    cache.put("c", m3);
    EXPECT_TRUE(cache.resident("a"));
    EXPECT_FALSE(cache.resident("b"));
    EXPECT_EQ(cache.resident_count(), 2u);
    const auto back = cache.get("b");
    ASSERT_TRUE(back);
    EXPECT_EQ(back->hash(), m2->hash());
    cache.erase("b");
    EXPECT_FALSE(cache.get("b"));
    EXPECT_FALSE(cache.get("zzz"));
    std::filesystem::remove_all(dir);
}

TEST(LatentId, ContentHash) {
    EXPECT_EQ(latent_id(LatentCode{{1.0, 2.0}}), latent_id(LatentCode{{1.0, 2.0}}));
    EXPECT_NE(latent_id(LatentCode{{1.0, 2.0}}), latent_id(LatentCode{{1.0, 2.5}}));
}
