#pragma once

#include <memory>
#include <set>
#include <string>
#include <thread>

#include "vcfl/annotation.hpp"
#include "vcfl/error.hpp"

namespace httplib {
class Server;
}

namespace vcfl {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 binds any free port
  /// Required as bearer token on the admin endpoints when non-empty.
  std::string admin_token;
  /// Accepted annotator tokens; empty accepts any non-empty token.
  std::set<std::string> annotator_tokens;
  bool cors = true;
};

/// HTTP status used for each error code.
int http_status(ErrorCode code);

/// JSON over HTTP in front of an AnnotationStore:
///   POST /experiments                      (admin) spec -> {id}
///   POST /experiments/{id}/images          (admin) {images: [...]} -> {ids}
///   GET  /experiments/{id}                 spec and counts
///   POST /sessions                         {experiment_id} -> session
///   GET  /sessions/{id}                    session with cursor
///   GET  /sessions/{id}/pages/{k}          {images: [{id, side, pixels_base64}]}
///   POST /sessions/{id}/pages/{k}/labels   {image_id: label} -> ack
///   GET  /experiments/{id}/aggregate       {labels: [...]}
///   POST /experiments/{id}/commit          commit delta
/// Errors come back as {"error": code, "message": text}.
class AnnotationServer {
public:
  AnnotationServer(AnnotationStore& store, ServerConfig config);
  ~AnnotationServer();
  AnnotationServer(const AnnotationServer&) = delete;
  AnnotationServer& operator=(const AnnotationServer&) = delete;

  /// Binds and starts serving on a background thread; returns the bound port.
  int start();
  /// Serves on the calling thread until stop().
  void listen();
  void stop();
  int port() const { return port_; }

private:
  void routes();

  AnnotationStore& store_;
  ServerConfig config_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

/// AnnotationBackend over HTTP, for scripted voters and tools.
class HttpAnnotationClient final : public AnnotationBackend {
public:
  HttpAnnotationClient(std::string host, int port, std::string admin_token = {});

  std::string create_experiment(const ExperimentSpec& spec);
  std::vector<std::string> add_images(const std::string& experiment_id, std::span<const BinaryImage> images) override;
  std::optional<AnnotationSession> open_session(const std::string& experiment_id, const std::string& token) override;
  std::vector<StoredImage> page(const std::string& session_id, std::size_t k, const std::string& token) override;
  SubmitAck submit(const std::string& session_id, std::size_t k, const std::string& token,
                   const std::map<std::string, std::string>& labels) override;
  CommitDelta commit(const std::string& experiment_id) override;
  std::vector<AggregateLabel> aggregate(const std::string& experiment_id);

private:
  nlohmann::json call(const std::string& method, const std::string& path, const std::string& token,
                      const nlohmann::json* body);

  std::string host_;
  int port_;
  std::string admin_token_;
};

}  // namespace vcfl
