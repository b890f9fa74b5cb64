#include "uigan/service.hpp"

#include "uigan/datagen.hpp"
#include "uigan/evalkit.hpp"
#include "uigan/io.hpp"
#include "uigan/trainer.hpp"

#include <httplib.h>

#include <cmath>

namespace uigan {

using json = nlohmann::json;

namespace {

struct BadRequest : Error {
  using Error::Error;
};

ServiceResponse error_response(int status, const std::string& message) { return {status, {{"error", message}}}; }

torch::Tensor decode_field(const json& request, const char* key) {
  if (!request.contains(key) || !request.at(key).is_string()) throw BadRequest(std::string("missing field '") + key + "'");
  try {
    return io::decode_png(io::base64_decode(request.at(key).get<std::string>()));
  } catch (const Error& e) {
    throw BadRequest(std::string(key) + ": " + e.what());
  }
}

torch::Tensor decode_lr(const json& request) {
  auto image = decode_field(request, "lr_png_base64");
  if (image.size(1) != kLowRes || image.size(2) != kLowRes) {
    throw BadRequest("resolution error: expected a 16x16 image, got " + std::to_string(image.size(2)) + "x" +
                     std::to_string(image.size(1)));
  }
  if (image.size(0) == 1) image = image.expand({3, kLowRes, kLowRes}).contiguous();
  if (request.contains("mask_png_base64") && !request.at("mask_png_base64").is_null()) {
    const auto mask = decode_field(request, "mask_png_base64");
    if (mask.size(1) != kLowRes || mask.size(2) != kLowRes) throw BadRequest("resolution error: mask must be 16x16");
    // The mask is already at LR scale: fill the occluded pixels, no pooling.
    const auto occluded = (mask.mean(0, true) > 0.5).expand_as(image);
    image = quantize8(torch::where(occluded, torch::full_like(image, kFillValue), image));
  }
  return image;
}

Landmarks parse_landmarks(const json& request, int k) {
  if (!request.contains("landmarks") || !request.at("landmarks").is_array()) throw BadRequest("missing field 'landmarks'");
  Landmarks lm;
  for (const auto& p : request.at("landmarks")) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw BadRequest("landmarks must be [x, y] pairs");
    }
    const Point pt{p[0].get<double>(), p[1].get<double>()};
    if (!std::isfinite(pt.x) || !std::isfinite(pt.y)) throw BadRequest("landmark coordinates must be finite");
    lm.points.push_back(pt);
  }
  if (lm.size() != k) {
    throw BadRequest("expected " + std::to_string(k) + " landmarks, got " + std::to_string(lm.size()));
  }
  return lm;
}

std::set<int> parse_stages(const json& request) {
  if (!request.contains("stages") || request.at("stages").is_null()) return {1, 2, 3};
  if (!request.at("stages").is_array()) throw BadRequest("stages must be an array");
  std::set<int> stages;
  for (const auto& s : request.at("stages")) {
    if (!s.is_number_integer()) throw BadRequest("stages must be integers");
    stages.insert(s.get<int>());
  }
  try {
    validate_stages(stages);
  } catch (const Error& e) {
    throw BadRequest(e.what());
  }
  return stages;
}

std::string png_b64(const torch::Tensor& image) { return io::base64_encode(io::encode_png(image)); }

json landmarks_json(const Landmarks& lm) {
  json out = json::array();
  for (const auto& p : lm.points) out.push_back({p.x, p.y});
  return out;
}

}  // namespace

ModelService::ModelService(Generator generator, std::string checkpoint_id)
    : generator_(std::move(generator)), ckpt_(std::move(checkpoint_id)) {
  if (generator_) {
    generator_->eval();
    for (auto& p : generator_->parameters()) p.set_requires_grad(false);
  }
}

ModelService ModelService::from_checkpoint(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  auto loaded = TrainState::load(path);
  return ModelService(loaded.first.generator, io::short_digest(bytes));
}

StageOutputs ModelService::run(const std::function<StageOutputs()>& fn) const {
  std::lock_guard lock(mutex_);
  torch::NoGradGuard no_grad;
  return fn();
}

namespace {

ServiceResponse respond(const StageOutputs& out, const std::string& ckpt) {
  json stages = json::array();
  for (int s = 0; s < out.stages; ++s) stages.push_back(png_b64(out.images[s][0]));
  const auto lm = heatmap_landmarks(out.heatmaps[out.stages - 1][0]);
  return {200,
          {{"hr_png_base64", png_b64(out.final_image()[0])},
           {"stages", stages},
           {"landmarks", landmarks_json(lm)},
           {"ckpt", ckpt}}};
}

}  // namespace

ServiceResponse ModelService::handle_hallucinate(const json& request) const {
  if (!loaded()) return error_response(503, "no model loaded");
  try {
    const auto lr = decode_lr(request);
    return respond(run([&] { return hallucinate(generator_, lr); }), ckpt_);
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  }
}

ServiceResponse ModelService::handle_edit(const json& request) const {
  if (!loaded()) return error_response(503, "no model loaded");
  try {
    const auto lr = decode_lr(request);
    const int k = generator_->config().landmarks;
    const auto edited = parse_landmarks(request, k);
    const auto stages = parse_stages(request);
    // Only landmarks the user actually moved replace the model's own priors,
    // so submitting the estimates unchanged reproduces the plain result.
    const auto out = run([&] {
      const auto base = hallucinate(generator_, lr);
      const auto estimates = heatmap_landmarks(base.heatmaps[kNumStages - 1][0]);
      auto channels = torch::zeros({k}, torch::kBool);
      bool any = false;
      for (int i = 0; i < k; ++i) {
        if (edited.points[i].x != estimates.points[i].x || edited.points[i].y != estimates.points[i].y) {
          channels[i] = true;
          any = true;
        }
      }
      if (!any) return base;
      return hallucinate_with_prior_override(generator_, lr, edited, stages, channels);
    });
    return respond(out, ckpt_);
  } catch (const BadRequest& e) {
    return error_response(400, e.what());
  }
}

ServiceResponse ModelService::model_info() const {
  return {200,
          {{"K", loaded() ? generator_->config().landmarks : kNumLandmarks},
           {"ckpt", loaded() ? json(ckpt_) : json(nullptr)},
           {"version", kServiceVersion}}};
}

ServiceResponse ModelService::handle(const std::string& method, const std::string& path,
                                     const std::string& body) const {
  if (method == "GET" && path == "/v1/model") return model_info();
  const bool hallucinate_route = path == "/v1/hallucinate", edit_route = path == "/v1/edit";
  if (!hallucinate_route && !edit_route) return error_response(404, "no route " + path);
  if (method != "POST") return error_response(405, "use POST for " + path);
  json request;
  try {
    request = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  }
  if (!request.is_object()) return error_response(400, "request body must be a JSON object");
  try {
    return hallucinate_route ? handle_hallucinate(request) : handle_edit(request);
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

void serve(const ModelService& service, const std::string& host, int port) {
  httplib::Server server;
  auto bind = [&](const httplib::Request& req, httplib::Response& res) {
    const auto r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.dump(), "application/json");
    res.set_header("Access-Control-Allow-Origin", "*");
  };
  server.Get("/v1/model", bind);
  server.Post("/v1/hallucinate", bind);
  server.Post("/v1/edit", bind);
  server.Options(R"(/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Origin", "*");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.status = 204;
  });
  if (!server.listen(host, port)) throw Error("cannot listen on " + host + ":" + std::to_string(port));
}

}  // namespace uigan
