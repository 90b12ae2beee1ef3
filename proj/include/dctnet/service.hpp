#pragma once

// HTTP front end over SessionManager. Errors are JSON {code, message}:
//   invalid_input 400, decode_error 400, not_found 404,
//   protocol_error 409, state_error 409, internal 500.

#include <string>

#include <nlohmann/json.hpp>

#include "dctnet/error.hpp"
#include "dctnet/session.hpp"

// After Eigen: <resolv.h> (pulled in by httplib) defines an `_res` macro.
#include <httplib.h>

namespace dctnet {

struct ApiError {
  int status;
  std::string code;
};

// Maps the library's exception types to stable API error codes.
inline ApiError classify(const std::exception& e) {
  if (dynamic_cast<const NotFound*>(&e)) return {404, "not_found"};
  if (dynamic_cast<const ProtocolError*>(&e)) return {409, "protocol_error"};
  if (dynamic_cast<const StateError*>(&e)) return {409, "state_error"};
  if (dynamic_cast<const DataError*>(&e)) return {400, "decode_error"};
  if (dynamic_cast<const InvalidInput*>(&e)) return {400, "invalid_input"};
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return {400, "invalid_input"};
  return {500, "internal"};
}

inline void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

inline nlohmann::json summary_json(const InteractionSummary& s) {
  nlohmann::json j{{"click_count", s.click_count}};
  j["radius_used"] = s.radius_used ? nlohmann::json(*s.radius_used) : nlohmann::json(nullptr);
  j["mask_url"] = s.mask_url.empty() ? nlohmann::json(nullptr) : nlohmann::json(s.mask_url);
  return j;
}

inline Click parse_click(const std::string& body) {
  const nlohmann::json j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InvalidInput("click body must be a JSON object");
  if (!j.contains("x") || !j.contains("y") || !j.at("x").is_number() || !j.at("y").is_number())
    throw InvalidInput("click needs numeric x and y");
  Click c;
  c.x = j.at("x").get<double>();
  c.y = j.at("y").get<double>();
  const std::string polarity = j.value("polarity", std::string("positive"));
  c.polarity = polarity_from_string(polarity);
  if (j.contains("radius") && !j.at("radius").is_null()) {
    if (!j.at("radius").is_number()) throw InvalidInput("radius must be a number");
    c.radius = j.at("radius").get<double>();
  }
  return c;
}

template <class F>
void guarded(httplib::Response& res, F&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    const ApiError err = classify(e);
    send_error(res, err.status, err.code, e.what());
  }
}

// Registers all routes on `server`. `manager` must outlive the server.
inline void mount_routes(httplib::Server& server, SessionManager& manager) {
  server.Get("/health", [&manager](const httplib::Request&, httplib::Response& res) {
    nlohmann::json models = nlohmann::json::array();
    for (const auto& [id, _] : manager.models()) models.push_back(id);
    send_json(res, 200, {{"status", "ok"}, {"models", models}, {"sessions", manager.size()}});
  });

  // multipart: "image" (PNG file) and optional "model" (defaults to the only
  // loaded model); the model may also be given as ?model=.
  server.Post("/sessions", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.has_file("image")) throw InvalidInput("multipart field 'image' is required");
      std::string model_id;
      if (req.has_file("model"))
        model_id = req.get_file_value("model").content;
      else if (req.has_param("model"))
        model_id = req.get_param_value("model");
      else if (manager.models().size() == 1)
        model_id = manager.models().begin()->first;
      else
        throw InvalidInput("model id is required");
      const SessionInfo info = manager.create(req.get_file_value("image").content, model_id);
      send_json(res, 201,
                {{"id", info.id},
                 {"model", info.model_id},
                 {"width", info.width},
                 {"height", info.height},
                 {"original_width", info.original_width},
                 {"original_height", info.original_height},
                 {"padded", info.padded()}});
    });
  });

  server.Post("/sessions/:id/clicks", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const Click click = parse_click(req.body);
      send_json(res, 200, summary_json(manager.apply(req.path_params.at("id"), click)));
    });
  });

  server.Post("/sessions/:id/undo", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, summary_json(manager.undo(req.path_params.at("id")))); });
  });

  server.Get("/sessions/:id/mask", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "png";
      if (format != "png" && format != "rle") throw InvalidInput("format must be png or rle");
      const BinaryMask m = manager.mask(req.path_params.at("id"));
      if (format == "png") {
        res.status = 200;
        res.set_content(png::encode_mask(m), "image/png");
      } else {
        send_json(res, 200, to_json(rle_encode(m)));
      }
    });
  });

  server.Delete("/sessions/:id", [&manager](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      manager.remove(req.path_params.at("id"));
      res.status = 204;
    });
  });

  server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) send_error(res, 404, "not_found", "no such route");
    else if (res.status == 400) send_error(res, 400, "invalid_input", "malformed request");
    else send_error(res, res.status, "http_error", "request rejected");
  });
}

}  // namespace dctnet
