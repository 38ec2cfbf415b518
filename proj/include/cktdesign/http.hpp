#pragma once

#include <string>

// service.hpp pulls in Eigen, which must precede <resolv.h> and its _res macro.
#include "service.hpp"

#include <httplib.h>

namespace cktdesign {

inline void bind_routes(httplib::Server& server, const DesignService& service) {
  auto send = [](httplib::Response& res, const ServiceResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  server.Get("/api/circuits", [&, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.circuits());
  });
  server.Post("/api/design", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.design(req.body));
  });
  server.Post("/api/simulate", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.simulate_request(req.body));
  });
  server.Get(R"(/api/frontier/([A-Za-z0-9_\-]+))", [&, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.frontier(req.matches[1]));
  });
  server.set_error_handler([send](const httplib::Request&, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) send(res, error_response(404, "no such route"));
  });
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      if (ep) std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    }
    send(res, error_response(500, what));
  });
}

}  // namespace cktdesign
