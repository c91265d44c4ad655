#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "nestery/error.hpp"
#include "nestery/market.hpp"
#include "nestery/node.hpp"

namespace nestery {

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path data_dir = "nestery-data";
  Clock::Mode clock_mode = Clock::Mode::Simulated;
  std::map<std::string, std::string> tokens;  // bearer token → user id
};

// NESTERY_DATA_DIR, NESTERY_LISTEN (host:port), NESTERY_CLOCK (sim|wall) and
// NESTERY_TOKENS ("token=user,token=user") over the given defaults.
GatewayConfig gateway_config_from_env(GatewayConfig base = {});

// "host:port" or ":port" or "port". Throws InvalidArgument.
void parse_listen(std::string_view text, GatewayConfig& config);

// 404 unknown ids, 409 conflicts, 422 validation, 401/403 auth, 503 storage.
int http_status(ErrorCode code);

// HTTP JSON API over a node and its market. A background worker drains the
// command queue; in wall-clock mode it also ticks the scheduler every second.
class Gateway {
 public:
  Gateway(Node& node, market::Market& market, GatewayConfig config);
  ~Gateway();
  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  // Binds and starts serving in background threads; returns the bound port.
  // Throws BindFailure.
  int start();
  void stop();
  // Blocks until stop() is called or the server fails.
  void wait();

  const GatewayConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace nestery
