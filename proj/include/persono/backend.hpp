#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "persono/synthetic_user.hpp"

namespace persono {

// A chat-completion model. Implementations must be safe to call concurrently.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual std::string complete(std::string_view prompt, double temperature) = 0;
  virtual const std::string& model_id() const = 0;
};

struct ModelBackendConfig {
  enum class Kind { remote_chat, mock_rule };

  Kind kind = Kind::mock_rule;
  std::optional<std::string> endpoint_url;  // base URL; "/chat/completions" is appended
  std::string model_id = "mock-rule";
  std::string api_key_env;                  // name of the variable holding the key
  double temperature = 1.0;                 // rater temperature
  double timeout_s = 120.0;
  int max_retries = 3;                      // total attempts per completion
  double retry_backoff_s = 0.5;             // doubled after each failed attempt
  // mock_rule: one spec for every participant, or <dir>/<participant_id>.json.
  std::optional<std::filesystem::path> user_spec;
  std::optional<std::filesystem::path> user_spec_dir;
};

void validate(const ModelBackendConfig& config);
// Relative paths are resolved against `base_dir`.
ModelBackendConfig backend_config_from_json(const nlohmann::json& doc,
                                            const std::filesystem::path& base_dir = {});
ModelBackendConfig load_backend_config(const std::filesystem::path& path);

// OpenAI-style chat completion over HTTP(S).
class RemoteChatBackend final : public ChatBackend {
 public:
  explicit RemoteChatBackend(ModelBackendConfig config);
  std::string complete(std::string_view prompt, double temperature) override;
  const std::string& model_id() const override { return config_.model_id; }

  static nlohmann::json build_request(std::string_view model, double temperature,
                                      std::string_view prompt);
  // Returns choices[0].message.content; throws ProtocolError otherwise.
  static std::string parse_response(std::string_view body, int attempts);

 private:
  ModelBackendConfig config_;
  std::string host_;       // scheme://host[:port]
  std::string base_path_;  // path prefix without trailing slash
};

// Deterministic stand-in for a model: reads the notification block of a rater prompt and
// answers with the attached user's rule label; analyser prompts get the user's pattern text.
class MockRuleBackend final : public ChatBackend {
 public:
  explicit MockRuleBackend(SyntheticUserSpec user, std::string model_id = "mock-rule");
  std::string complete(std::string_view prompt, double temperature) override;
  const std::string& model_id() const override { return model_id_; }
  const SyntheticUserSpec& user() const { return user_; }

 private:
  SyntheticUserSpec user_;
  std::string model_id_;
};

struct PromptFields {
  std::string sender_name;
  SenderRole sender_role = SenderRole::friend_;
  std::string content;
  std::optional<Activity> activity;
};

// Last "Sender:", "Content:" and "Activity:" lines of a rendered rater prompt.
std::optional<PromptFields> extract_prompt_fields(std::string_view prompt);

using BackendFactory = std::function<std::shared_ptr<ChatBackend>(const std::string& participant_id)>;

// Remote: one shared client. Mock: per-participant specs, loaded once.
BackendFactory make_backend_factory(const ModelBackendConfig& config);

}  // namespace persono
