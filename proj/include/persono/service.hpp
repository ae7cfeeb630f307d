#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "persono/backend.hpp"
#include "persono/orchestrator.hpp"

namespace persono {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path backend_config;
  std::filesystem::path profile_store;
  Method default_method = Method::M2;
  PromptVariant default_variant = PromptVariant::P2;
  std::optional<std::filesystem::path> request_log;
  int ensemble_size = kDefaultEnsembleSize;
  unsigned threads = 8;
};

// Checks ports and that the profile store exists and is writable.
void validate(const ServiceConfig& config);
ServiceConfig service_config_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ServiceConfig load_service_config(const std::filesystem::path& path);

// Everything the service knows about one participant.
struct StoreEntry {
  std::string participant_id;
  std::optional<std::string> reported_pattern;  // M1 text
  std::vector<UserProfile> profiles;
  std::optional<std::string> active_profile_id;

  const UserProfile* active() const;
  bool operator==(const StoreEntry&) const = default;
};

nlohmann::json entry_to_json(const StoreEntry& entry);
StoreEntry entry_from_json(const nlohmann::json& doc);

// <dir>/<participant_id>.json, replaced atomically on every write.
class ProfileStore {
 public:
  explicit ProfileStore(std::filesystem::path dir);

  std::optional<StoreEntry> get(const std::string& participant_id) const;
  // Appends (or replaces by profile_id) and optionally activates.
  StoreEntry add_profile(const UserProfile& profile, bool activate = true);
  StoreEntry set_reported_pattern(const std::string& participant_id, const std::string& pattern);
  std::filesystem::path path_for(const std::string& participant_id) const;

 private:
  StoreEntry load_or_new(const std::string& participant_id) const;
  void write(const StoreEntry& entry) const;

  std::filesystem::path dir_;
  mutable std::mutex mutex_;
};

// Participant ids become file names, so they are restricted to [A-Za-z0-9_-].
bool valid_participant_id(std::string_view id);

struct HttpReply {
  int status = 200;
  nlohmann::json body;
};

// Request handling without sockets; the HTTP server is a thin wrapper.
class ClassificationService {
 public:
  ClassificationService(ServiceConfig config, BackendFactory backends,
                        std::function<std::string()> clock = timestamp_now);

  HttpReply handle(const std::string& method, const std::string& path, const std::string& body);

  HttpReply classify(const std::string& body);
  HttpReply get_profiles(const std::string& participant_id);
  HttpReply put_profile(const std::string& participant_id, const std::string& body);
  HttpReply health() const;

  ProfileStore& store() { return store_; }
  const ServiceConfig& config() const { return config_; }

 private:
  void log_request(const std::string& method, const std::string& path, int status,
                   const std::string& participant_id, double latency_ms);

  ServiceConfig config_;
  BackendFactory backends_;
  std::function<std::string()> clock_;
  ProfileStore store_;
  std::mutex log_mutex_;
  std::atomic<std::uint64_t> requests_{0};
};

// Blocks serving HTTP. `on_ready` receives the bound port; `stop` is polled to shut down.
void serve(ClassificationService& service, const std::function<void(int port)>& on_ready = {},
           const std::atomic<bool>* stop = nullptr);

}  // namespace persono
