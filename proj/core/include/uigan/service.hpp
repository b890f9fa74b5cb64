#pragma once

#include "uigan/generator.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>

namespace uigan {

inline constexpr const char* kServiceVersion = "0.1.0";

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;

  std::string dump() const { return body.dump(); }
};

/// Read-only wrapper around a loaded generator. Handlers never mutate it, so
/// one instance can serve any number of concurrent requests.
class ModelService {
 public:
  ModelService() = default;  // no model: every inference request is a 503
  ModelService(Generator generator, std::string checkpoint_id);

  /// Loads the generator weights of a training checkpoint; the id is a
  /// digest of the checkpoint file.
  static ModelService from_checkpoint(const std::filesystem::path& path);

  bool loaded() const { return static_cast<bool>(generator_); }
  const std::string& checkpoint_id() const { return ckpt_; }

  ServiceResponse handle_hallucinate(const nlohmann::json& request) const;
  ServiceResponse handle_edit(const nlohmann::json& request) const;
  ServiceResponse model_info() const;

  /// Dispatches a raw request body; malformed JSON yields a 400.
  ServiceResponse handle(const std::string& method, const std::string& path, const std::string& body) const;

 private:
  StageOutputs run(const std::function<StageOutputs()>& fn) const;

  mutable Generator generator_{nullptr};
  std::string ckpt_;
  mutable std::mutex mutex_;  // serialises forward passes
};

/// Blocks serving the JSON API on host:port until the process exits.
void serve(const ModelService& service, const std::string& host, int port);

}  // namespace uigan
