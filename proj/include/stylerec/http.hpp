/**
 * @file http.hpp
 * @brief Mounts Service routes on a cpp-httplib server.
 */
#pragma once

#include <cstdlib>
#include <map>
#include <string>
#include <utility>

#include <httplib.h>

#include "stylerec/service.hpp"

namespace stylerec {

inline void mount_routes(httplib::Server& server, const Service& service) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const HttpResult r = service.dispatch(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  for (const char* path : {"/health", "/slots", "/products"}) server.Get(path, handler);
  for (const char* path : {"/score/pair", "/rank", "/outfits/generate"}) server.Post(path, handler);
  server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    nlohmann::ordered_json j{{"error", {{"code", "not_found"}, {"message", "no route for " + req.method + " " + req.path}}}};
    res.set_content(j.dump(), "application/json");
  });
}

/// Splits "host:port"; the default is 127.0.0.1:8080.
inline std::pair<std::string, int> parse_bind_address(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("bind address must be host:port");
  const std::string host = addr.substr(0, colon);
  const int port = std::atoi(addr.substr(colon + 1).c_str());
  if (host.empty() || port < 0 || port > 65535) throw InvalidArgument("invalid bind address '" + addr + "'");
  return {host, port};
}

inline std::string bind_address_from_env() {
  const char* v = std::getenv("STYLEREC_ADDR");
  return (v && *v) ? std::string(v) : std::string("127.0.0.1:8080");
}

}  // namespace stylerec
