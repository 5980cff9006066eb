#include "vcfl/annotation_server.hpp"

#include <httplib.h>

#include <nlohmann/json.hpp>

#include "vcfl/error.hpp"

namespace vcfl {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Unauthorized: return 401;
    case ErrorCode::UnknownExperiment:
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::DuplicateVote:
    case ErrorCode::InsufficientImages:
    case ErrorCode::NoDecidedLabels: return 409;
    case ErrorCode::Io: return 500;
    default: return 400;
  }
}

namespace {

std::string bearer(const httplib::Request& req) {
  const auto h = req.get_header_value("Authorization");
  const std::string prefix = "Bearer ";
  if (h.rfind(prefix, 0) != 0) return {};
  return h.substr(prefix.size());
}

void send_json(httplib::Response& res, const nlohmann::json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& message) {
  send_json(res, {{"error", std::string(to_string(code))}, {"message", message}}, http_status(code));
}

nlohmann::json parse_body(const httplib::Request& req) {
  try {
    return req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, std::string("request body: ") + e.what());
  }
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store, ServerConfig config)
    : store_(store), config_(std::move(config)), server_(std::make_unique<httplib::Server>()) {
  routes();
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::routes() {
  auto& svr = *server_;
  const auto cfg = config_;

  // every handler runs inside this wrapper so library errors become JSON
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  auto guarded = [](Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.what());
      } catch (const nlohmann::json::exception& e) {
        send_error(res, ErrorCode::Parse, e.what());
      } catch (const std::exception& e) {
        send_error(res, ErrorCode::InvalidArgument, e.what());
      }
    };
  };
  auto annotator = [cfg](const httplib::Request& req) {
    const auto token = bearer(req);
    if (token.empty()) throw Error(ErrorCode::Unauthorized, "missing bearer token");
    if (!cfg.annotator_tokens.empty() && !cfg.annotator_tokens.count(token) && token != cfg.admin_token)
      throw Error(ErrorCode::Unauthorized, "unknown annotator token");
    return token;
  };
  auto admin = [cfg](const httplib::Request& req) {
    if (!cfg.admin_token.empty() && bearer(req) != cfg.admin_token)
      throw Error(ErrorCode::Unauthorized, "admin token required");
  };

  if (cfg.cors) {
    svr.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                             {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                             {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    svr.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  }

  svr.Post("/experiments", guarded([this, admin](const httplib::Request& req, httplib::Response& res) {
    admin(req);
    const auto id = store_.create_experiment(parse_body(req).get<ExperimentSpec>());
    send_json(res, {{"id", id}}, 201);
  }));

  svr.Post(R"(/experiments/([^/]+)/images)", guarded([this, admin](const httplib::Request& req, httplib::Response& res) {
    admin(req);
    const auto body = parse_body(req);
    std::vector<BinaryImage> images;
    for (const auto& item : body.at("images")) images.push_back(image_from_json(item).image);
    send_json(res, {{"ids", store_.add_images(req.matches[1], images)}}, 201);
  }));

  svr.Get(R"(/experiments/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    send_json(res, {{"id", id},
                    {"spec", store_.experiment(id)},
                    {"images", store_.image_count(id)},
                    {"votes", store_.vote_count(id)},
                    {"quorum", store_.config().quorum}});
  }));

  svr.Post("/sessions", guarded([this, annotator](const httplib::Request& req, httplib::Response& res) {
    const auto token = annotator(req);
    const auto body = parse_body(req);
    send_json(res, store_.create_session(body.at("experiment_id").get<std::string>(), token), 201);
  }));

  svr.Get(R"(/sessions/([^/]+))", guarded([this, annotator](const httplib::Request& req, httplib::Response& res) {
    send_json(res, store_.session(req.matches[1], annotator(req)));
  }));

  svr.Get(R"(/sessions/([^/]+)/pages/(\d+))", guarded([this, annotator](const httplib::Request& req, httplib::Response& res) {
    const auto token = annotator(req);
    nlohmann::json images = nlohmann::json::array();
    for (const auto& img : store_.page(req.matches[1], std::stoul(req.matches[2]), token))
      images.push_back(image_to_json(img.id, img.image));
    send_json(res, {{"images", images}});
  }));

  svr.Post(R"(/sessions/([^/]+)/pages/(\d+)/labels)",
           guarded([this, annotator](const httplib::Request& req, httplib::Response& res) {
             const auto token = annotator(req);
             const auto labels = parse_body(req).get<std::map<std::string, std::string>>();
             send_json(res, store_.submit_labels(req.matches[1], std::stoul(req.matches[2]), token, labels));
           }));

  svr.Get(R"(/experiments/([^/]+)/aggregate)", guarded([this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, {{"labels", store_.aggregate(req.matches[1])}});
  }));

  svr.Post(R"(/experiments/([^/]+)/commit)", guarded([this, admin](const httplib::Request& req, httplib::Response& res) {
    admin(req);
    send_json(res, store_.commit(req.matches[1]));
  }));
}

int AnnotationServer::start() {
  if (config_.port == 0) {
    port_ = server_->bind_to_any_port(config_.host);
    if (port_ < 0) throw Error(ErrorCode::Io, "cannot bind " + config_.host);
  } else {
    if (!server_->bind_to_port(config_.host, config_.port))
      throw Error(ErrorCode::Io, "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    port_ = config_.port;
  }
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
  return port_;
}

void AnnotationServer::listen() {
  if (!server_->listen(config_.host, config_.port))
    throw Error(ErrorCode::Io, "cannot listen on " + config_.host + ":" + std::to_string(config_.port));
}

void AnnotationServer::stop() {
  if (server_) server_->stop();
  if (thread_.joinable()) thread_.join();
}

HttpAnnotationClient::HttpAnnotationClient(std::string host, int port, std::string admin_token)
    : host_(std::move(host)), port_(port), admin_token_(std::move(admin_token)) {}

nlohmann::json HttpAnnotationClient::call(const std::string& method, const std::string& path,
                                          const std::string& token, const nlohmann::json* body) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(5);
  cli.set_read_timeout(60);
  httplib::Headers headers;
  if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
  httplib::Result r = method == "GET" ? cli.Get(path, headers)
                                      : cli.Post(path, headers, body ? body->dump() : std::string("{}"),
                                                 "application/json");
  if (!r) throw Error(ErrorCode::Io, method + " " + path + ": " + httplib::to_string(r.error()));
  nlohmann::json j;
  try {
    j = r->body.empty() ? nlohmann::json::object() : nlohmann::json::parse(r->body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Parse, method + " " + path + ": " + e.what());
  }
  if (r->status >= 400) {
    const auto name = j.value("error", std::string("Io"));
    auto message = j.value("message", std::string{});
    if (message.rfind(name + ": ", 0) == 0) message = message.substr(name.size() + 2);
    throw Error(parse_error_code(name).value_or(ErrorCode::Io), message);
  }
  return j;
}

std::string HttpAnnotationClient::create_experiment(const ExperimentSpec& spec) {
  const nlohmann::json body = spec;
  return call("POST", "/experiments", admin_token_, &body).at("id").get<std::string>();
}

std::vector<std::string> HttpAnnotationClient::add_images(const std::string& experiment_id,
                                                          std::span<const BinaryImage> images) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& img : images) items.push_back(image_to_json("", img));
  const nlohmann::json body{{"images", items}};
  return call("POST", "/experiments/" + experiment_id + "/images", admin_token_, &body)
      .at("ids")
      .get<std::vector<std::string>>();
}

std::optional<AnnotationSession> HttpAnnotationClient::open_session(const std::string& experiment_id,
                                                                    const std::string& token) {
  const nlohmann::json body{{"experiment_id", experiment_id}};
  try {
    return call("POST", "/sessions", token, &body).get<AnnotationSession>();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InsufficientImages) return std::nullopt;
    throw;
  }
}

std::vector<StoredImage> HttpAnnotationClient::page(const std::string& session_id, std::size_t k,
                                                    const std::string& token) {
  const auto j = call("GET", "/sessions/" + session_id + "/pages/" + std::to_string(k), token, nullptr);
  std::vector<StoredImage> out;
  for (const auto& item : j.at("images")) out.push_back(image_from_json(item));
  return out;
}

SubmitAck HttpAnnotationClient::submit(const std::string& session_id, std::size_t k, const std::string& token,
                                       const std::map<std::string, std::string>& labels) {
  const nlohmann::json body = labels;
  return call("POST", "/sessions/" + session_id + "/pages/" + std::to_string(k) + "/labels", token, &body)
      .get<SubmitAck>();
}

CommitDelta HttpAnnotationClient::commit(const std::string& experiment_id) {
  return call("POST", "/experiments/" + experiment_id + "/commit", admin_token_, nullptr).get<CommitDelta>();
}

std::vector<AggregateLabel> HttpAnnotationClient::aggregate(const std::string& experiment_id) {
  return call("GET", "/experiments/" + experiment_id + "/aggregate", admin_token_, nullptr)
      .at("labels")
      .get<std::vector<AggregateLabel>>();
}

}  // namespace vcfl
