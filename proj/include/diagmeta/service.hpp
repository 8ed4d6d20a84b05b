#pragma once

// HTTP/JSON service. Fits run on a fixed pool of worker slots; everything
// else answers inline so prior previews never wait behind a fit.
//
// Sessions: clients may create one with POST /sessions and send its id in
// the X-Session header. Requests without the header use a shared default
// session that never expires.

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "diagmeta/builtin.hpp"
#include "diagmeta/json_io.hpp"
#include "diagmeta/report.hpp"
#include "diagmeta/svg.hpp"

// after Eigen: resolv.h defines a macro named _res
#include <httplib.h>

namespace diagmeta {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  int workers = 1;
  int fit_threads = 1;
  double session_ttl = 3600;  // seconds idle
  std::string persist_dir;    // empty: memory only
  std::string cors_origin = "*";
};

enum class FitStatus { queued, running, done, failed };

inline std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::queued: return "queued";
    case FitStatus::running: return "running";
    case FitStatus::done: return "done";
    case FitStatus::failed: return "failed";
  }
  return "";
}

struct FitEntry {
  std::string id;
  FitRequest request;
  FitStatus status = FitStatus::queued;
  std::string error;
  std::shared_ptr<const FitResult> result;
  Json summary;  // fit_to_json, cached once done
};

struct DatasetEntry {
  std::string id;
  Dataset data;
  ValidationReport report;
};

struct Session {
  std::string id;
  std::map<std::string, DatasetEntry> datasets;
  std::map<std::string, std::shared_ptr<FitEntry>> fits;
  std::chrono::steady_clock::time_point created, last_access;
};

namespace service_detail {

struct HttpError : std::runtime_error {
  int status;
  HttpError(int s, const std::string& m) : std::runtime_error(m), status(s) {}
};

inline void send_json(httplib::Response& res, const Json& j, int status = 200) {
  res.status = status;
  res.set_content(j.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& msg) {
  Json j;
  j["error"] = msg;
  send_json(res, j, status);
}

inline Json parse_body(const httplib::Request& req) {
  auto j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw ValidationError("request body must be a JSON object");
  return j;
}

inline std::string param(const httplib::Request& req, const std::string& k, const std::string& def = "") {
  return req.has_param(k) ? req.get_param_value(k) : def;
}

inline double real_param(const httplib::Request& req, const std::string& k, double def) {
  if (!req.has_param(k)) return def;
  const auto v = detail::parse_real(req.get_param_value(k));
  if (!v) throw ValidationError("query parameter " + k + " is not a number");
  return *v;
}

inline std::pair<double, double> pair_param(const httplib::Request& req, const std::string& k, std::pair<double, double> def) {
  if (!req.has_param(k)) return def;
  const auto s = req.get_param_value(k);
  const auto c = s.find(',');
  if (c == std::string::npos) throw ValidationError("query parameter " + k + " needs lo,hi");
  const auto a = detail::parse_real(s.substr(0, c)), b = detail::parse_real(s.substr(c + 1));
  if (!a || !b) throw ValidationError("query parameter " + k + " needs two numbers");
  return {*a, *b};
}

}  // namespace service_detail

class Service {
 public:
  explicit Service(ServiceConfig cfg = {}) : cfg_(std::move(cfg)) {
    default_session_.id = "default";
    default_session_.created = default_session_.last_access = std::chrono::steady_clock::now();
    routes();
    for (int i = 0; i < std::max(1, cfg_.workers); ++i) workers_.emplace_back([this] { work(); });
  }

  ~Service() {
    stop();
    {
      std::lock_guard lk(queue_mutex_);
      shutting_down_ = true;
    }
    queue_cv_.notify_all();
    for (auto& t : workers_) t.join();
  }

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds; returns the port (useful with port 0).
  int bind() {
    port_ = cfg_.port == 0 ? server_.bind_to_any_port(cfg_.host) : (server_.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + cfg_.host + ":" + std::to_string(cfg_.port));
    return port_;
  }

  /// Blocks until stop().
  bool listen() { return server_.listen_after_bind(); }

  void start_background() {
    if (port_ < 0) bind();
    listener_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void stop() {
    if (server_.is_running()) server_.stop();
    if (listener_.joinable()) listener_.join();
  }

  int port() const { return port_; }

  /// Blocks until the fit leaves queued/running; false on timeout.
  bool wait_for_fit(const std::string& session, const std::string& id, double seconds) {
    const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(seconds);
    std::unique_lock lk(done_mutex_);
    return done_cv_.wait_until(lk, until, [&] {
      std::shared_lock rl(registry_mutex_);
      auto* s = find_session(session);
      if (!s) return true;
      auto it = s->fits.find(id);
      return it == s->fits.end() || it->second->status == FitStatus::done || it->second->status == FitStatus::failed;
    });
  }

 private:
  using Req = httplib::Request;
  using Res = httplib::Response;

  ServiceConfig cfg_;
  httplib::Server server_;
  std::thread listener_;
  int port_ = -1;

  mutable std::shared_mutex registry_mutex_;
  Session default_session_;
  std::map<std::string, Session> sessions_;
  std::atomic<long> next_id_{1};

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<std::pair<std::string, std::shared_ptr<FitEntry>>> queue_;
  bool shutting_down_ = false;
  std::vector<std::thread> workers_;

  std::mutex done_mutex_;
  std::condition_variable done_cv_;

  std::string new_id(const char* prefix) { return prefix + std::to_string(next_id_++); }

  Session* find_session(const std::string& id) {
    if (id.empty() || id == "default") return &default_session_;
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : &it->second;
  }

  void expire_sessions() {
    const auto now = std::chrono::steady_clock::now();
    std::unique_lock lk(registry_mutex_);
    for (auto it = sessions_.begin(); it != sessions_.end();) {
      const double idle = std::chrono::duration<double>(now - it->second.last_access).count();
      bool busy = false;
      for (auto& [k, f] : it->second.fits) busy |= f->status == FitStatus::queued || f->status == FitStatus::running;
      if (idle > cfg_.session_ttl && !busy) it = sessions_.erase(it);
      else ++it;
    }
  }

  /// Runs fn(session) under the exclusive registry lock.
  template <class Fn>
  auto with_session(const Req& req, Fn&& fn) {
    std::unique_lock lk(registry_mutex_);
    auto* s = find_session(req.get_header_value("X-Session"));
    if (!s) throw service_detail::HttpError(404, "unknown session");
    s->last_access = std::chrono::steady_clock::now();
    return fn(*s);
  }

  std::shared_ptr<FitEntry> lookup_fit(const Req& req) {
    return with_session(req, [&](Session& s) {
      auto it = s.fits.find(req.path_params.at("id"));
      if (it == s.fits.end()) throw service_detail::HttpError(404, "unknown fit id " + req.path_params.at("id"));
      return it->second;
    });
  }

  /// Snapshot of a finished fit; 409 while queued or running.
  std::shared_ptr<const FitResult> finished(const Req& req) {
    auto e = lookup_fit(req);
    std::shared_lock lk(registry_mutex_);
    if (e->status == FitStatus::failed) throw service_detail::HttpError(409, "fit failed: " + e->error);
    if (e->status != FitStatus::done) throw service_detail::HttpError(409, "fit " + e->id + " is still " + to_string(e->status));
    return e->result;
  }

  void work() {
    for (;;) {
      std::shared_ptr<FitEntry> e;
      {
        std::unique_lock lk(queue_mutex_);
        queue_cv_.wait(lk, [&] { return shutting_down_ || !queue_.empty(); });
        if (shutting_down_) return;
        e = queue_.front().second;
        queue_.pop_front();
      }
      {
        std::unique_lock lk(registry_mutex_);
        e->status = FitStatus::running;
      }
      std::shared_ptr<const FitResult> result;
      Json summary;
      std::string error;
      try {
        auto r = e->request;
        r.options.threads = std::max(1, cfg_.fit_threads);
        result = std::make_shared<const FitResult>(run_fit(r));
        summary = fit_to_json(*result, e->request);
      } catch (const std::exception& ex) {
        error = ex.what();
      }
      {
        std::unique_lock lk(registry_mutex_);
        if (result) {
          e->result = result;
          e->summary = summary;
          e->status = FitStatus::done;
        } else {
          e->error = error;
          e->status = FitStatus::failed;
        }
      }
      if (result && !cfg_.persist_dir.empty()) persist(*e);
      {
        std::lock_guard lk(done_mutex_);
      }
      done_cv_.notify_all();
    }
  }

  void persist(const FitEntry& e) {
    std::error_code ec;
    std::filesystem::create_directories(cfg_.persist_dir, ec);
    std::ofstream out(std::filesystem::path(cfg_.persist_dir) / (e.id + ".json"));
    if (out) out << e.summary.dump(2) << '\n';
  }

  template <class Fn>
  httplib::Server::Handler guarded(Fn fn) {
    return [this, fn](const Req& req, Res& res) {
      using namespace service_detail;
      try {
        expire_sessions();
        fn(req, res);
      } catch (const HttpError& e) {
        send_error(res, e.status, e.what());
      } catch (const ValidationError& e) {
        send_error(res, 400, e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, e.what());
      } catch (const NumericError& e) {
        send_error(res, 422, e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    };
  }

  FitRequest request_from(const Req& req, const Json& body) {
    FitRequest r;
    if (body.contains("dataset_id")) {
      const auto id = body["dataset_id"].get<std::string>();
      r.data = with_session(req, [&](Session& s) {
        auto it = s.datasets.find(id);
        if (it == s.datasets.end()) throw service_detail::HttpError(404, "unknown dataset id " + id);
        return it->second.data;
      });
    } else if (body.contains("builtin")) {
      r.data = builtin::load(body["builtin"].get<std::string>());
    } else if (body.contains("dataset")) {
      r.data = dataset_from_json(body["dataset"]);
    } else {
      throw ValidationError("fit request needs dataset_id, builtin or dataset");
    }
    if (body.contains("model")) r.spec = model_spec_from_json(body["model"]);
    if (body.contains("priors")) r.priors = prior_spec_from_json(body["priors"]);
    if (body.contains("options")) r.options = options_from_json(body["options"]);
    // fail fast on configuration errors instead of in the worker
    r.priors.build();
    build_design(r.data, r.spec);
    return r;
  }

  void routes() {
    using namespace service_detail;
    server_.set_default_headers({{"Access-Control-Allow-Origin", cfg_.cors_origin},
                                 {"Access-Control-Allow-Headers", "Content-Type, X-Session"},
                                 {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server_.Options(".*", [](const Req&, Res& res) { res.status = 204; });

    server_.Get("/health", [](const Req&, Res& res) { send_json(res, Json{{"status", "ok"}}); });

    server_.Post("/sessions", guarded([this](const Req&, Res& res) {
      Session s;
      s.id = new_id("s");
      s.created = s.last_access = std::chrono::steady_clock::now();
      {
        std::unique_lock lk(registry_mutex_);
        sessions_[s.id] = s;
      }
      send_json(res, Json{{"id", s.id}}, 201);
    }));

    server_.Get("/datasets/builtin", guarded([](const Req&, Res& res) {
      Json a = Json::array();
      for (auto& b : builtin::all()) {
        Json e;
        e["name"] = b.name;
        e["description"] = b.description;
        e["dataset"] = to_json(builtin::load(b.name));
        a.push_back(e);
      }
      send_json(res, a);
    }));

    // body: raw CSV (text/csv) or {"csv": "...", "modality": "..."}
    server_.Post("/datasets", guarded([this](const Req& req, Res& res) {
      std::string csv = req.body;
      IngestOptions io;
      ModelSpec spec;
      if (req.get_header_value("Content-Type").find("json") != std::string::npos) {
        const auto j = parse_body(req);
        if (!j.contains("csv")) throw ValidationError("JSON upload needs a 'csv' field");
        csv = j["csv"].get<std::string>();
        if (j.contains("modality") && !j["modality"].is_null()) {
          io.modality_column = j["modality"].get<std::string>();
          spec.modality_column = io.modality_column;
        }
      }
      DatasetEntry e;
      e.data = parse_dataset(csv, io);
      e.report = validate_dataset(e.data, spec);
      e.id = new_id("d");
      Json out;
      out["id"] = e.id;
      out["report"] = Json{{"ok", e.report.ok()}, {"findings", e.report.findings}};
      out["dataset"] = to_json(e.data);
      with_session(req, [&](Session& s) { s.datasets[e.id] = e; return 0; });
      send_json(res, out, 201);
    }));

    server_.Get("/datasets/:id", guarded([this](const Req& req, Res& res) {
      const auto d = with_session(req, [&](Session& s) {
        auto it = s.datasets.find(req.path_params.at("id"));
        if (it == s.datasets.end()) throw HttpError(404, "unknown dataset id " + req.path_params.at("id"));
        return it->second.data;
      });
      send_json(res, to_json(d));
    }));

    // body: {"priors": {...}, "which": "var|var2|cor", "grid": [lo, hi, n]}; prior keys may also sit at top level
    server_.Post("/priors/preview", guarded([](const Req& req, Res& res) {
      const auto j = parse_body(req);
      PreviewRequest r;
      r.priors = prior_spec_from_json(j.contains("priors") ? j["priors"] : j);
      if (j.contains("which")) r.which = j["which"].get<std::string>();
      else if (j.contains("cor.prior") && !j.contains("var.prior")) r.which = "cor";
      if (j.contains("grid")) {
        const auto g = j["grid"].get<std::vector<double>>();
        if (g.size() != 3) throw ValidationError("grid needs [lo, hi, n]");
        r.grid = std::array<double, 3>{g[0], g[1], g[2]};
      }
      send_json(res, prior_preview(r));
    }));

    server_.Post("/fits", guarded([this](const Req& req, Res& res) {
      const auto body = parse_body(req);
      auto e = std::make_shared<FitEntry>();
      e->request = request_from(req, body);
      e->id = new_id("f");
      const auto sid = with_session(req, [&](Session& s) {
        s.fits[e->id] = e;
        return s.id;
      });
      {
        std::lock_guard lk(queue_mutex_);
        queue_.emplace_back(sid, e);
      }
      queue_cv_.notify_one();
      send_json(res, Json{{"id", e->id}, {"status", "queued"}}, 202);
    }));

    server_.Get("/fits/:id", guarded([this](const Req& req, Res& res) {
      auto e = lookup_fit(req);
      Json j;
      std::shared_lock lk(registry_mutex_);
      j["id"] = e->id;
      j["status"] = to_string(e->status);
      if (e->status == FitStatus::failed) j["error"] = e->error;
      if (e->status == FitStatus::done) {
        j["summary"] = e->summary;
        j["text"] = format_summary(*e->result, e->request.options.record_timings);
      }
      lk.unlock();
      send_json(res, j);
    }));

    server_.Get("/fits/:id/fitted", guarded([this](const Req& req, Res& res) {
      const auto f = finished(req);
      const auto t = fitted_study_measures(*f, parse_accuracy_type(param(req, "type", "sens")));
      if (param(req, "format") == "csv") res.set_content(fitted_csv(t), "text/csv");
      else send_json(res, to_json(t));
    }));

    server_.Get("/fits/:id/marginal", guarded([this](const Req& req, Res& res) {
      const auto f = finished(req);
      const auto name = param(req, "name");
      const bool hyper = name == "var1" || name == "var2" || name == "rho";
      const auto m = hyper ? f->hyper_marginal(name) : f->fixed_marginal(name);
      Json j = marginal_to_json(m, f->spec.all_quantiles());
      Json pts = Json::array();
      for (std::size_t i = 0; i < m.x().size(); ++i) pts.push_back(Json::array({jnum(m.x()[i]), jnum(m.density()[i])}));
      j["points"] = pts;
      send_json(res, j);
    }));

    server_.Get("/fits/:id/geometry", guarded([this](const Req& req, Res& res) {
      const auto f = finished(req);
      send_json(res, geometry(req, *f).first);
    }));

    server_.Get("/fits/:id/svg", guarded([this](const Req& req, Res& res) {
      const auto f = finished(req);
      res.set_content(geometry(req, *f).second, "image/svg+xml");
    }));
  }

  /// Geometry JSON and SVG for ?plot=sroc|forest|crosshair.
  std::pair<Json, std::string> geometry(const Req& req, const FitResult& f) {
    using namespace service_detail;
    const auto plot = param(req, "plot", "sroc");
    if (plot == "sroc") {
      SrocPlotOptions o;
      o.sroc_type = static_cast<int>(real_param(req, "sroc_type", 1));
      o.level = real_param(req, "level", 0.95);
      o.show_data = param(req, "data", "1") != "0";
      o.show_credible = param(req, "credible", "1") != "0";
      o.show_prediction = param(req, "prediction", "1") != "0";
      const auto g = sroc_plot(f, o);
      return {to_json(g), render_svg(g)};
    }
    if (plot == "forest") {
      ForestOptions o;
      o.type = parse_accuracy_type(param(req, "type", "sens"));
      o.est_type = param(req, "est_type", "mean");
      std::tie(o.interval_lo, o.interval_hi) = pair_param(req, "intervals", {o.interval_lo, o.interval_hi});
      if (req.has_param("cut")) o.cut = pair_param(req, "cut", {0, 1});
      const auto g = forest_layout(f, o);
      return {to_json(g), render_svg(g)};
    }
    if (plot == "crosshair") {
      CrosshairOptions o;
      o.est_type = param(req, "est_type", "mean");
      std::tie(o.interval_lo, o.interval_hi) = pair_param(req, "intervals", {o.interval_lo, o.interval_hi});
      const auto g = crosshair_layout(f, o);
      return {to_json(g), render_svg(g)};
    }
    throw ValidationError("plot must be sroc, forest or crosshair");
  }
};

}  // namespace diagmeta
