#ifndef CPMTL_SERVING_HPP_
#define CPMTL_SERVING_HPP_

#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include "cpmtl/checkpoint.hpp"
#include "cpmtl/objectives.hpp"

namespace cpmtl {

/// Immutable view of one checkpoint shared by every request handler.
struct Snapshot {
  Checkpoint ckpt;
  std::unique_ptr<Problem> problem;
  std::string digest;

  static std::shared_ptr<const Snapshot> from_checkpoint(Checkpoint ckpt);
  static std::shared_ptr<const Snapshot> load(const std::string& path);
};

struct HttpResponse {
  int status = 200;
  std::string body;
};

inline constexpr std::size_t kMinFrontSamples = 2;
inline constexpr std::size_t kMaxFrontSamples = 2000;

/// Rendered /front bodies keyed by sample count. Concurrent fills of the
/// same key store identical bytes, so the last writer wins harmlessly.
class FrontCache {
 public:
  std::shared_ptr<const std::string> find(std::size_t samples) const;
  void store(std::size_t samples, std::shared_ptr<const std::string> body);

 private:
  mutable std::shared_mutex mu_;
  std::map<std::size_t, std::shared_ptr<const std::string>> entries_;
};

HttpResponse handle_meta(const Snapshot& snap);
HttpResponse handle_infer(const Snapshot& snap, const std::string& body);
// `samples` is the raw query value; nullopt when the parameter is absent.
HttpResponse handle_front(const Snapshot& snap, FrontCache& cache, const std::optional<std::string>& samples);

inline constexpr int kDefaultPort = 8080;

/// CPMTL_PORT wins over the flag; the flag over the default.
int resolve_port(std::optional<int> flag);

class HttpServer {
 public:
  explicit HttpServer(std::shared_ptr<const Snapshot> snap);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  // Binds; port 0 picks a free one. Returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace cpmtl

#endif  // CPMTL_SERVING_HPP_
