#include "cpmtl/serving.hpp"

#include <cstdlib>
#include <mutex>

#include "cpmtl/evaluation.hpp"
#include "httplib.h"
#include "json.hpp"

namespace cpmtl {

using nlohmann::json;

std::shared_ptr<const Snapshot> Snapshot::from_checkpoint(Checkpoint ckpt) {
  auto s = std::make_shared<Snapshot>();
  s->problem = make_problem(ckpt.problem);
  check_compatible(ckpt, *s->problem);
  s->digest = payload_digest(ckpt);
  s->ckpt = std::move(ckpt);
  return s;
}

std::shared_ptr<const Snapshot> Snapshot::load(const std::string& path) {
  return from_checkpoint(load_checkpoint(path));
}

std::shared_ptr<const std::string> FrontCache::find(std::size_t samples) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(samples);
  return it == entries_.end() ? nullptr : it->second;
}

void FrontCache::store(std::size_t samples, std::shared_ptr<const std::string> body) {
  std::unique_lock lock(mu_);
  entries_[samples] = std::move(body);
}

namespace {

HttpResponse bad_request(const std::string& message, const std::string& field) {
  return {400, json{{"error", message}, {"field", field}}.dump()};
}

}  // namespace

HttpResponse handle_meta(const Snapshot& snap) {
  const auto& c = snap.ckpt;
  json body = {{"problem", to_string(c.problem.kind)},
               {"m", c.problem.m},
               {"mode", to_string(c.preference_mode)},
               {"training_mode", to_string(c.config.mode)},
               {"digest", snap.digest},
               {"step", c.step},
               {"has_oracle", snap.problem->has_oracle()}};
  return {200, body.dump()};
}

HttpResponse handle_infer(const Snapshot& snap, const std::string& body) {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception&) {
    return bad_request("request body is not valid JSON", "body");
  }
  if (!req.is_object() || !req.contains("preference")) return bad_request("missing field", "preference");
  const auto& raw = req.at("preference");
  if (!raw.is_array()) return bad_request("preference must be an array", "preference");
  const std::size_t m = snap.ckpt.problem.m;
  if (raw.size() != m)
    return bad_request("preference has " + std::to_string(raw.size()) + " entries, expected " + std::to_string(m),
                       "preference");
  Vector values;
  for (const auto& x : raw) {
    if (!x.is_number()) return bad_request("preference entries must be numbers", "preference");
    values.push_back(x.get<double>());
  }
  PreferenceVector p;
  try {
    p = PreferenceVector::normalized(values, snap.ckpt.preference_mode);
  } catch (const Error& e) {
    return bad_request(e.what(), "preference");
  }
  const LossVector losses = evaluate_preference(*snap.problem, snap.ckpt.spec, snap.ckpt.params, p);
  json resp = {{"preference_normalized", p.values()},
               {"losses", losses.values},
               {"mode", to_string(snap.ckpt.preference_mode)},
               {"checkpoint_digest", snap.digest}};
  return {200, resp.dump()};
}

HttpResponse handle_front(const Snapshot& snap, FrontCache& cache, const std::optional<std::string>& samples) {
  if (!samples) return bad_request("missing query parameter", "samples");
  std::size_t n = 0;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(*samples, &used);
    if (used != samples->size() || v < 0) throw std::invalid_argument("samples");
    n = static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    return bad_request("samples must be an integer", "samples");
  }
  if (n < kMinFrontSamples || n > kMaxFrontSamples)
    return bad_request("samples must be in [2, 2000]", "samples");
  if (auto hit = cache.find(n)) return {200, *hit};

  const auto front = sweep_front(*snap.problem, snap.ckpt.spec, snap.ckpt.params, snap.ckpt.preference_mode, n);
  json points = json::array();
  for (const auto& s : front) points.push_back({{"preference", s.p.values()}, {"losses", s.losses.values}});
  json body = {{"samples", n},
               {"mode", to_string(snap.ckpt.preference_mode)},
               {"checkpoint_digest", snap.digest},
               {"dominated_count", dominance_filter(losses_of(front)).dominated_count},
               {"points", std::move(points)}};
  auto text = std::make_shared<const std::string>(body.dump());
  cache.store(n, text);
  return {200, *text};
}

int resolve_port(std::optional<int> flag) {
  if (const char* env = std::getenv("CPMTL_PORT"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 0 || v > 65535)
      throw Error(ErrorKind::InvalidArgument, std::string("CPMTL_PORT is not a port: '") + env + "'", "CPMTL_PORT");
    return static_cast<int>(v);
  }
  if (flag) {
    if (*flag < 0 || *flag > 65535) throw Error(ErrorKind::InvalidArgument, "port out of range", "port");
    return *flag;
  }
  return kDefaultPort;
}

struct HttpServer::Impl {
  std::shared_ptr<const Snapshot> snap;
  FrontCache cache;
  httplib::Server server;
};

namespace {

void reply(httplib::Response& res, const HttpResponse& r) {
  res.status = r.status;
  res.set_content(r.body, "application/json");
}

}  // namespace

HttpServer::HttpServer(std::shared_ptr<const Snapshot> snap) : impl_(std::make_unique<Impl>()) {
  impl_->snap = std::move(snap);
  auto* impl = impl_.get();
  auto& srv = impl->server;
  // The explorer is served from another origin.
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                           {"Access-Control-Allow-Headers", "Content-Type"},
                           {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  srv.Get("/meta", [impl](const httplib::Request&, httplib::Response& res) { reply(res, handle_meta(*impl->snap)); });
  srv.Post("/infer", [impl](const httplib::Request& req, httplib::Response& res) {
    reply(res, handle_infer(*impl->snap, req.body));
  });
  srv.Get("/front", [impl](const httplib::Request& req, httplib::Response& res) {
    std::optional<std::string> samples;
    if (req.has_param("samples")) samples = req.get_param_value("samples");
    reply(res, handle_front(*impl->snap, impl->cache, samples));
  });
  srv.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    reply(res, {500, json{{"error", msg}}.dump()});
  });
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  if (port == 0) {
    const int p = srv.bind_to_any_port(host);
    if (p < 0) throw Error(ErrorKind::Io, "cannot bind " + host, "port");
    return p;
  }
  if (!srv.bind_to_port(host, port))
    throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port), "port");
  return port;
}

void HttpServer::serve() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace cpmtl
