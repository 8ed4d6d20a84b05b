#include <gtest/gtest.h>

#include <memory>

#include "diagmeta/service.hpp"
#include "fixtures.hpp"

using namespace diagmeta;

namespace {

const Json kTelomeraseFit = Json::parse(R"({
  "builtin": "telomerase",
  "model": {"nsample": 2000, "seed": 1},
  "priors": {"var.prior": "PC", "var.par": [3, 0.05], "cor.prior": "Normal", "cor.par": [0, 5]}
})");

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ServiceConfig c;
    c.port = 0;
    c.cors_origin = "http://localhost:5173";
    svc_ = std::make_unique<Service>(c);
    svc_->start_background();
  }
  static void TearDownTestSuite() { svc_.reset(); }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", svc_->port());
    c.set_read_timeout(60, 0);
    return c;
  }

  static Json body(const httplib::Result& r) { return Json::parse(r->body); }

  httplib::Result post(const std::string& path, const Json& j, const httplib::Headers& h = {}) {
    return client().Post(path.c_str(), h, j.dump(), "application/json");
  }

  httplib::Result get(const std::string& path, const httplib::Headers& h = {}) { return client().Get(path.c_str(), h); }

  // submits and waits; returns the fit id
  std::string fit_telomerase(const std::string& session = "") {
    httplib::Headers h;
    if (!session.empty()) h.emplace("X-Session", session);
    auto r = post("/fits", kTelomeraseFit, h);
    EXPECT_EQ(r->status, 202) << r->body;
    const auto id = body(r)["id"].get<std::string>();
    EXPECT_TRUE(svc_->wait_for_fit(session, id, 120));
    return id;
  }

  static std::unique_ptr<Service> svc_;
};

std::unique_ptr<Service> ServiceTest::svc_;

}  // namespace

TEST_F(ServiceTest, Health) {
  auto r = get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(body(r)["status"], "ok");
}

TEST_F(ServiceTest, CorsHeadersAndPreflight) {
  auto r = get("/health");
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  auto o = client().Options("/fits");
  ASSERT_TRUE(o);
  EXPECT_EQ(o->status, 204);
  EXPECT_NE(o->get_header_value("Access-Control-Allow-Headers").find("X-Session"), std::string::npos);
}

TEST_F(ServiceTest, PriorPreview) {
  auto r = post("/priors/preview", Json::parse(R"({"priors": {"var.prior": "PC", "var.par": [1, 0.05]}, "grid": [0, 4, 401]})"));
  ASSERT_EQ(r->status, 200) << r->body;
  const auto j = body(r);
  EXPECT_EQ(j["scale"], "sd");
  ASSERT_EQ(j["points"].size(), 401u);
  for (std::size_t i = 1; i < 401; ++i) EXPECT_LT(j["points"][i][1].get<double>(), j["points"][i - 1][1].get<double>());

  auto c = post("/priors/preview", Json::parse(R"({"cor.prior": "PC", "cor.par": [1, -0.1, 0.5, -0.95, 0.05, null, null]})"));
  ASSERT_EQ(c->status, 200) << c->body;
  EXPECT_EQ(body(c)["scale"], "correlation");
}

TEST_F(ServiceTest, PreviewErrorsAreBadRequests) {
  auto r = post("/priors/preview", Json::parse(R"({"cor.prior": "PC", "cor.par": [1, 0, 0.5, -1e-9, 0.5, null, null]})"));
  EXPECT_EQ(r->status, 400);
  EXPECT_NE(body(r)["error"].get<std::string>().find("infeasible contrast"), std::string::npos);
  EXPECT_EQ(post("/priors/preview", Json::parse(R"({"var.prior": "PC", "var.par": [3]})"))->status, 400);
  EXPECT_EQ(client().Post("/priors/preview", "not json", "application/json")->status, 400);
  EXPECT_EQ(post("/priors/preview", Json::parse(R"({"which": "tau"})"))->status, 400);
}

TEST_F(ServiceTest, UnknownIdsAreNotFound) {
  EXPECT_EQ(get("/fits/f999999")->status, 404);
  EXPECT_EQ(get("/fits/f999999/svg")->status, 404);
  EXPECT_EQ(get("/datasets/d999999")->status, 404);
  EXPECT_EQ(get("/health", {{"X-Session", "s-nope"}})->status, 200);
  EXPECT_EQ(get("/fits/f1", {{"X-Session", "s-nope"}})->status, 404);
  EXPECT_EQ(post("/fits", Json{{"dataset_id", "d999999"}})->status, 404);
}

TEST_F(ServiceTest, BadFitRequestsRejectedUpFront) {
  EXPECT_EQ(post("/fits", Json::object())->status, 400);
  EXPECT_EQ(post("/fits", Json{{"builtin", "nope"}})->status, 400);
  auto j = kTelomeraseFit;
  j["model"]["model_type"] = 9;
  EXPECT_EQ(post("/fits", j)->status, 400);
  j = kTelomeraseFit;
  j["priors"]["var.par"] = Json::array({3});
  EXPECT_EQ(post("/fits", j)->status, 400);
  j = kTelomeraseFit;
  j["options"] = Json{{"latent_strategy", "exact"}};
  EXPECT_EQ(post("/fits", j)->status, 400);
}

TEST_F(ServiceTest, BuiltinDatasets) {
  auto r = get("/datasets/builtin");
  ASSERT_EQ(r->status, 200);
  bool found = false;
  for (auto& e : body(r)) found |= e["name"] == "telomerase";
  EXPECT_TRUE(found);
}

TEST_F(ServiceTest, FitLifecycle) {
  const auto id = fit_telomerase();
  auto r = get("/fits/" + id);
  ASSERT_EQ(r->status, 200);
  const auto j = body(r);
  ASSERT_EQ(j["status"], "done") << j.dump();
  EXPECT_NEAR(j["summary"]["mlik"].get<double>(), -65.05, 1.0);
  EXPECT_NE(j["text"].get<std::string>().find("Marginal log-likelihood"), std::string::npos);

  auto csv = get("/fits/" + id + "/fitted?type=TPR&format=csv");
  ASSERT_EQ(csv->status, 200);
  EXPECT_EQ(csv->body.rfind("studyname,mean,sd,0.025quant,0.5quant,0.975quant", 0), 0u);
  EXPECT_NE(csv->body.find("Ito_1998"), std::string::npos);
  EXPECT_EQ(get("/fits/" + id + "/fitted?type=PPV")->status, 400);

  auto fj = get("/fits/" + id + "/fitted?type=DOR");
  ASSERT_EQ(fj->status, 200);
  EXPECT_EQ(body(fj)["rows"].size(), 10u);

  auto m = get("/fits/" + id + "/marginal?name=rho");
  ASSERT_EQ(m->status, 200);
  EXPECT_GT(body(m)["points"].size(), 10u);
  EXPECT_EQ(get("/fits/" + id + "/marginal?name=mu")->status, 200);
  EXPECT_EQ(get("/fits/" + id + "/marginal?name=tau")->status, 400);
}

TEST_F(ServiceTest, GeometryAndSvgForEveryPlot) {
  const auto id = fit_telomerase();
  for (auto plot : {"sroc", "forest", "crosshair"}) {
    auto g = get("/fits/" + id + "/geometry?plot=" + plot);
    ASSERT_EQ(g->status, 200) << plot << ": " << g->body;
    EXPECT_NO_THROW(body(g));
    auto s = get("/fits/" + id + "/svg?plot=" + plot);
    ASSERT_EQ(s->status, 200) << plot;
    EXPECT_EQ(s->body.rfind("<?xml", 0), 0u);
    EXPECT_EQ(s->get_header_value("Content-Type"), "image/svg+xml");
  }
  EXPECT_EQ(get("/fits/" + id + "/geometry?plot=pie")->status, 400);
  EXPECT_EQ(get("/fits/" + id + "/geometry?plot=forest&intervals=0.1")->status, 400);
  EXPECT_EQ(get("/fits/" + id + "/geometry?plot=forest&intervals=0.125,0.875")->status, 400);
  auto f = get("/fits/" + id + "/geometry?plot=forest");
  EXPECT_EQ(body(f)["partitions"][0]["rows"].size(), 11u);
}

TEST_F(ServiceTest, SvgIsDeterministicAcrossFits) {
  const auto a = fit_telomerase(), b = fit_telomerase();
  EXPECT_EQ(get("/fits/" + a + "/svg?plot=sroc")->body, get("/fits/" + b + "/svg?plot=sroc")->body);
}

TEST_F(ServiceTest, QueuedFitIsConflict) {
  // one worker: the second fit waits behind the first
  auto slow = kTelomeraseFit;
  slow["model"]["nsample"] = 20000;
  slow["options"] = Json{{"latent_strategy", "laplace"}};
  auto a = post("/fits", slow), b = post("/fits", slow);
  ASSERT_EQ(b->status, 202);
  const auto id = body(b)["id"].get<std::string>();
  auto s = get("/fits/" + id);
  const auto status = body(s)["status"].get<std::string>();
  EXPECT_TRUE(status == "queued" || status == "running") << status;
  auto r = get("/fits/" + id + "/fitted");
  EXPECT_EQ(r->status, 409);
  EXPECT_NE(body(r)["error"].get<std::string>().find("still"), std::string::npos);
  EXPECT_TRUE(svc_->wait_for_fit("", body(a)["id"], 300));
  EXPECT_TRUE(svc_->wait_for_fit("", id, 300));
  EXPECT_EQ(get("/fits/" + id + "/fitted")->status, 200);
}

TEST_F(ServiceTest, SessionsAreIsolated) {
  auto s = client().Post("/sessions", "", "application/json");
  ASSERT_EQ(s->status, 201);
  const auto sid = body(s)["id"].get<std::string>();
  ASSERT_NE(sid, "default");

  const std::string csv = "studyname,TP,FP,TN,FN\nA,10,2,30,3\nB,8,4,25,6\nC,12,1,40,2\n";
  auto d = client().Post("/datasets", {{"X-Session", sid}}, csv, "text/csv");
  ASSERT_EQ(d->status, 201) << d->body;
  const auto did = body(d)["id"].get<std::string>();
  EXPECT_TRUE(body(d)["report"]["ok"].get<bool>());
  EXPECT_EQ(get("/datasets/" + did, {{"X-Session", sid}})->status, 200);
  EXPECT_EQ(get("/datasets/" + did)->status, 404);

  auto j = kTelomeraseFit;
  j.erase("builtin");
  j["dataset_id"] = did;
  EXPECT_EQ(post("/fits", j)->status, 404);
  auto r = post("/fits", j, {{"X-Session", sid}});
  ASSERT_EQ(r->status, 202) << r->body;
  const auto fid = body(r)["id"].get<std::string>();
  EXPECT_TRUE(svc_->wait_for_fit(sid, fid, 120));
  EXPECT_EQ(get("/fits/" + fid)->status, 404);
  auto done = get("/fits/" + fid, {{"X-Session", sid}});
  ASSERT_EQ(done->status, 200);
  EXPECT_EQ(body(done)["status"], "done") << done->body;
}

TEST_F(ServiceTest, DatasetUploadReportsFindings) {
  const std::string csv = "studyname,TP,FP,TN,FN\nA,10,2,30,3\nB,0,3,20,0\n";
  auto d = post("/datasets", Json{{"csv", csv}});
  ASSERT_EQ(d->status, 201) << d->body;
  const auto rep = body(d)["report"];
  EXPECT_FALSE(rep["ok"].get<bool>());
  const auto text = rep["findings"].dump();
  EXPECT_NE(text.find("B: no diseased subjects"), std::string::npos) << text;

  auto dup = post("/datasets", Json{{"csv", "studyname,TP,FP,TN,FN\nA,10,2,30,3\nA,8,4,25,6\n"}});
  EXPECT_EQ(dup->status, 400);
  EXPECT_NE(body(dup)["error"].get<std::string>().find("duplicate"), std::string::npos);

  EXPECT_EQ(post("/datasets", Json{{"nocsv", 1}})->status, 400);
  EXPECT_EQ(client().Post("/datasets", "TP,FP\n1,2\n", "text/csv")->status, 400);

  const std::string mod = "studyname,kind,TP,FP,TN,FN\nA,x,10,2,30,3\nB,y,8,4,25,6\n";
  auto m = post("/datasets", Json{{"csv", mod}, {"modality", "kind"}});
  ASSERT_EQ(m->status, 201) << m->body;
  EXPECT_TRUE(body(m)["report"]["ok"].get<bool>());
}
