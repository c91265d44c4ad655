#include "nestery/gateway.hpp"

#include <atomic>
#include <charconv>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include "httplib.h"

namespace nestery {

void parse_listen(std::string_view text, GatewayConfig& config) {
  std::string_view host;
  std::string_view port = text;
  if (auto colon = text.rfind(':'); colon != std::string_view::npos) {
    host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  int p = -1;
  auto [end, ec] = std::from_chars(port.data(), port.data() + port.size(), p);
  if (ec != std::errc() || end != port.data() + port.size() || p < 0 || p > 65535) {
    throw Error(ErrorCode::InvalidArgument, "listen address '" + std::string(text) + "'");
  }
  if (!host.empty()) config.host = std::string(host);
  config.port = p;
}

GatewayConfig gateway_config_from_env(GatewayConfig base) {
  if (const char* dir = std::getenv("NESTERY_DATA_DIR"); dir && *dir) base.data_dir = dir;
  if (const char* listen = std::getenv("NESTERY_LISTEN"); listen && *listen) parse_listen(listen, base);
  if (const char* clock = std::getenv("NESTERY_CLOCK"); clock && *clock) {
    std::string_view c = clock;
    if (c == "sim") {
      base.clock_mode = Clock::Mode::Simulated;
    } else if (c == "wall") {
      base.clock_mode = Clock::Mode::Wall;
    } else {
      throw Error(ErrorCode::InvalidArgument, "NESTERY_CLOCK must be sim or wall");
    }
  }
  if (const char* tokens = std::getenv("NESTERY_TOKENS"); tokens && *tokens) {
    std::string_view rest = tokens;
    while (!rest.empty()) {
      auto comma = rest.find(',');
      std::string_view item = rest.substr(0, comma);
      rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      auto eq = item.find('=');
      if (eq == std::string_view::npos || eq == 0 || eq + 1 == item.size()) {
        throw Error(ErrorCode::InvalidArgument, "NESTERY_TOKENS entry '" + std::string(item) + "'");
      }
      base.tokens[std::string(item.substr(0, eq))] = std::string(item.substr(eq + 1));
    }
  }
  return base;
}

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownVm:
    case ErrorCode::UnknownMessage:
    case ErrorCode::UnknownAllocation:
    case ErrorCode::UnknownVolume:
    case ErrorCode::UnknownOffer:
    case ErrorCode::UnknownContract:
    case ErrorCode::UnknownUser:
      return 404;
    case ErrorCode::AdmissionDenied:
    case ErrorCode::DuplicateUuid:
    case ErrorCode::IllegalState:
    case ErrorCode::ShrinkBelowChildUsage:
    case ErrorCode::ShrinkBelowUsed:
    case ErrorCode::VolumeAttached:
    case ErrorCode::InsufficientSpace:
    case ErrorCode::SpecExceedsFreeCapacity:
    case ErrorCode::CapacityGone:
    case ErrorCode::ContractNotActive:
    case ErrorCode::ClockWentBackwards:
      return 409;
    case ErrorCode::Unauthorized:
      return 401;
    case ErrorCode::NotYourContract:
    case ErrorCode::NotAProvider:
      return 403;
    case ErrorCode::StorageFailure:
      return 503;
    case ErrorCode::CorruptJournal:
    case ErrorCode::BindFailure:
      return 500;
    default:
      return 422;
  }
}

namespace {

using nlohmann::json;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, ErrorCode code, const std::string& detail) {
  send_json(res, http_status(code), json{{"error", error_code_name(code)}, {"detail", detail}});
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    json j = json::parse(req.body);
    if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "body must be a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("body: ") + e.what());
  }
}

std::int64_t path_id(const httplib::Request& req, std::size_t index = 1) {
  const std::string& s = req.matches[static_cast<int>(index)];
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw Error(ErrorCode::InvalidArgument, "id");
  return v;
}

std::optional<std::int64_t> query_int(const httplib::Request& req, const char* key) {
  if (!req.has_param(key)) return std::nullopt;
  std::string s = req.get_param_value(key);
  std::int64_t v = 0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) throw Error(ErrorCode::InvalidArgument, key);
  return v;
}

template <class T>
T field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ErrorCode::InvalidArgument, key);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::InvalidArgument, key);
  }
}

}  // namespace

struct Gateway::Impl {
  Node& node;
  market::Market& market;
  GatewayConfig config;
  httplib::Server server;
  std::thread server_thread;
  std::thread worker_thread;
  std::mutex mu;
  std::condition_variable cv;
  bool work = false;
  std::atomic<bool> stopping{false};
  std::atomic<bool> started{false};

  Impl(Node& n, market::Market& m, GatewayConfig c) : node(n), market(m), config(std::move(c)) { routes(); }

  void notify() {
    {
      std::lock_guard lock(mu);
      work = true;
    }
    cv.notify_one();
  }

  void worker_loop() {
    while (!stopping) {
      {
        std::unique_lock lock(mu);
        cv.wait_for(lock, std::chrono::seconds(1), [&] { return work || stopping.load(); });
        work = false;
      }
      if (stopping) break;
      try {
        if (node.options().clock_mode == Clock::Mode::Wall) {
          node.tick();
          market.accrue();
        }
        node.process_pending("gateway-worker");
      } catch (const std::exception& e) {
        std::fprintf(stderr, "nestery: worker: %s\n", e.what());
      }
    }
  }

  // Wraps a handler with authentication and error mapping.
  httplib::Server::Handler guarded(std::function<void(const std::string&, const httplib::Request&, httplib::Response&)> fn) {
    return [this, fn = std::move(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        std::string auth = req.get_header_value("Authorization");
        constexpr std::string_view kBearer = "Bearer ";
        if (auth.compare(0, kBearer.size(), kBearer) != 0) throw Error(ErrorCode::Unauthorized, "missing bearer token");
        auto it = config.tokens.find(auth.substr(kBearer.size()));
        if (it == config.tokens.end()) throw Error(ErrorCode::Unauthorized, "unknown token");
        market.ensure_user(it->second);
        fn(it->second, req, res);
      } catch (const Error& e) {
        send_error(res, e.code(), e.detail());
      } catch (const json::exception& e) {
        send_error(res, ErrorCode::InvalidArgument, e.what());
      } catch (const std::exception& e) {
        send_json(res, 500, json{{"error", "InternalError"}, {"detail", e.what()}});
      }
    };
  }

  static void relay(const CommandResult& r, httplib::Response& res) {
    if (!r.ok) {
      send_error(res, *r.error, r.detail);
      return;
    }
    send_json(res, 200, r.to_json());
  }

  void routes() {
    // httplib's default adds SO_REUSEPORT, which would let a second instance
    // share the port instead of failing to bind.
    server.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Authorization, Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(".*", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/status", guarded([this](const std::string&, const httplib::Request&, httplib::Response& res) {
      send_json(res, 200, node.status());
    }));

    server.Post("/commands", guarded([this](const std::string&, const httplib::Request& req, httplib::Response& res) {
      json body = parse_body(req);
      std::string key = body.value("idempotency_key", std::string());
      Command command = command_from_json(body.contains("command") ? body.at("command") : body);
      MsgId id = node.submit(command, key);
      notify();
      json out = node.message_json(id);
      send_json(res, 202, json{{"msg_id", id}, {"idempotency_key", out.at("idempotency_key")}});
    }));

    server.Get(R"(/commands/(\d+))", guarded([this](const std::string&, const httplib::Request& req,
                                                     httplib::Response& res) {
      send_json(res, 200, node.message_json(static_cast<MsgId>(path_id(req))));
    }));

    server.Post("/clock/tick", guarded([this](const std::string&, const httplib::Request& req, httplib::Response& res) {
      if (node.options().clock_mode != Clock::Mode::Simulated) {
        throw Error(ErrorCode::IllegalState, "clock is wall time");
      }
      json body = parse_body(req);
      std::optional<Seconds> now;
      if (body.contains("now")) now = field<Seconds>(body, "now");
      if (body.contains("advance")) now = node.now() + field<Seconds>(body, "advance");
      auto emitted = node.tick(now);
      market.accrue();
      notify();
      json keys = json::array();
      for (const auto& e : emitted) keys.push_back(e.idempotency_key);
      send_json(res, 200, json{{"now", node.now()}, {"emitted", keys}});
    }));

    server.Get("/users/me", guarded([this](const std::string& user, const httplib::Request&, httplib::Response& res) {
      market::UserAccount u = market.user(user);
      send_json(res, 200, json{{"user_id", u.user_id}, {"provider", u.provider}, {"backing_hosts", u.backing_hosts}});
    }));

    server.Post(R"(/users/([^/]+)/provider)", guarded([this](const std::string& user, const httplib::Request& req,
                                                             httplib::Response& res) {
      std::string target = req.matches[1];
      if (target != user) throw Error(ErrorCode::NotYourContract, "can only change your own role");
      json body = parse_body(req);
      market::ProviderProfile profile = market::profile_from_json(body.contains("profile") ? body.at("profile") : body);
      Uuid backing;
      if (!Uuid::try_parse(field<std::string>(body, "backing_vm"), backing)) {
        throw Error(ErrorCode::InvalidArgument, "backing_vm");
      }
      market.become_provider(user, profile, backing);
      market::UserAccount u = market.user(user);
      send_json(res, 200, json{{"user_id", u.user_id}, {"provider", u.provider}, {"backing_hosts", u.backing_hosts}});
    }));

    server.Get(R"(/users/([^/]+)/ledger)", guarded([this](const std::string&, const httplib::Request& req,
                                                          httplib::Response& res) {
      send_json(res, 200, market::ledger_to_json(market.ledger_report(req.matches[1])));
    }));

    server.Get("/offers", guarded([this](const std::string&, const httplib::Request& req, httplib::Response& res) {
      market::OfferFilter filter;
      if (req.has_param("kind")) filter.kind = market::parse_offer_kind(req.get_param_value("kind"));
      if (req.has_param("max_price")) filter.max_price = market::Money::parse(req.get_param_value("max_price"));
      if (req.has_param("all")) filter.include_delisted = req.get_param_value("all") != "0";
      bool any_min = false;
      ResourceVector min{1, 1, 64, 0, 0};
      if (auto v = query_int(req, "min_cores")) min.cpu_cores = *v, any_min = true;
      if (auto v = query_int(req, "min_ram_mib")) min.ram_mib = *v, any_min = true;
      if (auto v = query_int(req, "min_disk_gib")) min.disk_gib = *v, any_min = true;
      if (auto v = query_int(req, "min_nics")) min.nics = *v, any_min = true;
      if (any_min) filter.min_spec = min;
      json out = json::array();
      for (const auto& o : market.list_offers(filter)) out.push_back(market::offer_to_json(o));
      send_json(res, 200, out);
    }));

    server.Post("/offers", guarded([this](const std::string& user, const httplib::Request& req, httplib::Response& res) {
      market::OfferRequest r = market::offer_request_from_json(parse_body(req));
      send_json(res, 201, market::offer_to_json(market.register_offer(user, r)));
    }));

    server.Get(R"(/offers/(\d+))", guarded([this](const std::string&, const httplib::Request& req,
                                                  httplib::Response& res) {
      market::ServiceOffer o = market.offer(path_id(req));
      json j = market::offer_to_json(o);
      market::UserAccount provider = market.user(o.provider_id);
      if (provider.profile) j["provider"] = {{"company_name", provider.profile->company_name}};
      send_json(res, 200, j);
    }));

    server.Get(R"(/offers/(\d+)/prices)", guarded([this](const std::string&, const httplib::Request& req,
                                                         httplib::Response& res) {
      json out = json::array();
      for (const auto& p : market.price_history(path_id(req), query_int(req, "from"), query_int(req, "to"))) {
        out.push_back(market::price_point_to_json(p));
      }
      send_json(res, 200, out);
    }));

    server.Post(R"(/offers/(\d+)/reprice)", guarded([this](const std::string& user, const httplib::Request& req,
                                                           httplib::Response& res) {
      market::ServiceOffer o = market.offer(path_id(req));
      if (o.provider_id != user && user != market::kOperatorId) throw Error(ErrorCode::NotAProvider, user);
      json body = parse_body(req);
      std::optional<double> u;
      if (body.contains("utilization")) u = field<double>(body, "utilization");
      send_json(res, 200, market::price_point_to_json(market.update_spot_price(o.offer_id, u)));
    }));

    server.Post("/contracts", guarded([this](const std::string& user, const httplib::Request& req,
                                             httplib::Response& res) {
      json body = parse_body(req);
      send_json(res, 201, market::contract_to_json(market.negotiate_contract(user, field<std::int64_t>(body, "offer_id"))));
    }));

    server.Get("/contracts", guarded([this](const std::string& user, const httplib::Request&, httplib::Response& res) {
      json out = json::array();
      for (const auto& c : market.contracts()) {
        if (c.consumer_id == user || market.offer(c.offer_id).provider_id == user) {
          out.push_back(market::contract_to_json(c));
        }
      }
      send_json(res, 200, out);
    }));

    server.Get(R"(/contracts/(\d+))", guarded([this](const std::string& user, const httplib::Request& req,
                                                     httplib::Response& res) {
      market::Contract c = market.contract(path_id(req));
      if (c.consumer_id != user && market.offer(c.offer_id).provider_id != user && user != market::kOperatorId) {
        throw Error(ErrorCode::NotYourContract, std::to_string(c.contract_id));
      }
      json j = market::contract_to_json(c);
      if (c.vm) {
        auto rec = node.find_record(*c.vm);
        j["allocation"] = rec ? record_to_json(*rec) : json();
      } else if (c.volume_id) {
        auto v = node.find_volume(*c.volume_id);
        j["allocation"] = v ? volume_to_json(*v) : json();
      }
      send_json(res, 200, j);
    }));

    server.Post(R"(/contracts/(\d+)/commands)", guarded([this](const std::string& user, const httplib::Request& req,
                                                               httplib::Response& res) {
      json body = parse_body(req);
      market::ControlAction action = market::parse_control_action(field<std::string>(body, "action"));
      std::optional<ResourceVector> resources;
      if (body.contains("resources")) resources = resources_from_json(body.at("resources"));
      relay(market.control_allocation(path_id(req), user, action, resources,
                                      body.value("idempotency_key", std::string())),
            res);
    }));

    server.Post(R"(/contracts/(\d+)/terminate)", guarded([this](const std::string& user, const httplib::Request& req,
                                                                httplib::Response& res) {
      send_json(res, 200, market::contract_to_json(market.terminate_contract(path_id(req), user)));
    }));
  }
};

Gateway::Gateway(Node& node, market::Market& market, GatewayConfig config)
    : impl_(std::make_unique<Impl>(node, market, std::move(config))) {}

Gateway::~Gateway() { stop(); }

const GatewayConfig& Gateway::config() const { return impl_->config; }

int Gateway::start() {
  Impl& s = *impl_;
  int port = s.config.port;
  if (port == 0) {
    port = s.server.bind_to_any_port(s.config.host);
    if (port < 0) throw Error(ErrorCode::BindFailure, s.config.host);
  } else if (!s.server.bind_to_port(s.config.host, port)) {
    throw Error(ErrorCode::BindFailure, s.config.host + ":" + std::to_string(port));
  }
  s.config.port = port;
  s.started = true;
  s.server_thread = std::thread([&s] { s.server.listen_after_bind(); });
  s.worker_thread = std::thread([&s] { s.worker_loop(); });
  s.server.wait_until_ready();
  s.notify();
  return port;
}

void Gateway::stop() {
  Impl& s = *impl_;
  if (!s.started.exchange(false)) return;
  s.stopping = true;
  s.cv.notify_all();
  s.server.stop();
  if (s.server_thread.joinable()) s.server_thread.join();
  if (s.worker_thread.joinable()) s.worker_thread.join();
}

void Gateway::wait() {
  Impl& s = *impl_;
  if (s.server_thread.joinable()) s.server_thread.join();
  stop();
}

}  // namespace nestery
