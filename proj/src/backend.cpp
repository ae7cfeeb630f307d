#include "persono/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <thread>

#include <httplib.h>

#include "persono/error.hpp"
#include "persono/prompting.hpp"

namespace persono {
namespace {

using nlohmann::json;

std::string excerpt(std::string_view body, std::size_t limit = 200) {
  std::string out(body.substr(0, limit));
  if (body.size() > limit) out += "...";
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

}  // namespace

void validate(const ModelBackendConfig& config) {
  if (config.model_id.empty()) throw ConfigError("backend config: empty model_id");
  if (config.temperature < 0.0) throw ConfigError("backend config: temperature must be >= 0");
  if (config.timeout_s <= 0.0) throw ConfigError("backend config: timeout_s must be > 0");
  if (config.max_retries < 1) throw ConfigError("backend config: max_retries must be >= 1");
  if (config.kind == ModelBackendConfig::Kind::remote_chat) {
    if (!config.endpoint_url || config.endpoint_url->empty()) {
      throw ConfigError("backend config: remote_chat requires endpoint_url");
    }
  } else if (!config.user_spec && !config.user_spec_dir) {
    throw ConfigError("backend config: mock_rule requires user_spec or user_spec_dir");
  }
}

ModelBackendConfig backend_config_from_json(const json& doc, const std::filesystem::path& base_dir) {
  ModelBackendConfig c;
  try {
    const auto kind = doc.at("kind").get<std::string>();
    if (kind == "remote_chat") {
      c.kind = ModelBackendConfig::Kind::remote_chat;
      c.model_id.clear();
    } else if (kind == "mock_rule") {
      c.kind = ModelBackendConfig::Kind::mock_rule;
    } else {
      throw ConfigError("backend config: kind must be remote_chat or mock_rule, got '" + kind + "'");
    }
    if (doc.contains("endpoint_url") && !doc["endpoint_url"].is_null()) {
      c.endpoint_url = doc["endpoint_url"].get<std::string>();
    }
    c.model_id = doc.value("model_id", c.model_id);
    c.api_key_env = doc.value("api_key_env", c.api_key_env);
    c.temperature = doc.value("temperature", c.temperature);
    c.timeout_s = doc.value("timeout_s", c.timeout_s);
    c.max_retries = doc.value("max_retries", c.max_retries);
    c.retry_backoff_s = doc.value("retry_backoff_s", c.retry_backoff_s);
    if (doc.contains("user_spec") && !doc["user_spec"].is_null()) {
      c.user_spec = resolve(base_dir, doc["user_spec"].get<std::string>());
    }
    if (doc.contains("user_spec_dir") && !doc["user_spec_dir"].is_null()) {
      c.user_spec_dir = resolve(base_dir, doc["user_spec_dir"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed backend config: ") + e.what());
  }
  validate(c);
  return c;
}

ModelBackendConfig load_backend_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DatasetError& e) {
    throw ConfigError(e.what());
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return backend_config_from_json(doc, path.parent_path());
}

RemoteChatBackend::RemoteChatBackend(ModelBackendConfig config) : config_(std::move(config)) {
  validate(config_);
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
  std::smatch m;
  const std::string endpoint = *config_.endpoint_url;
  if (!std::regex_match(endpoint, m, url)) {
    throw ConfigError("endpoint_url must look like http(s)://host[:port][/path], got '" + endpoint + "'");
  }
  host_ = m[1].str();
  base_path_ = m[2].matched ? m[2].str() : std::string();
  while (!base_path_.empty() && base_path_.back() == '/') base_path_.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (host_.rfind("https", 0) == 0 || host_.rfind("HTTPS", 0) == 0) {
    throw ConfigError("this build has no TLS support; use an http:// endpoint");
  }
#endif
}

json RemoteChatBackend::build_request(std::string_view model, double temperature,
                                      std::string_view prompt) {
  return {{"model", model},
          {"temperature", temperature},
          {"messages", json::array({{{"role", "user"}, {"content", prompt}}})}};
}

std::string RemoteChatBackend::parse_response(std::string_view body, int attempts) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception&) {
    throw ProtocolError("response is not JSON: " + excerpt(body), 200, attempts);
  }
  const auto* content = [&]() -> const json* {
    if (!doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) return nullptr;
    const auto& choice = doc["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content")) return nullptr;
    const auto& c = choice["message"]["content"];
    return c.is_string() ? &c : nullptr;
  }();
  if (!content) throw ProtocolError("response lacks choices[0].message.content: " + excerpt(body), 200, attempts);
  return content->get<std::string>();
}

std::string RemoteChatBackend::complete(std::string_view prompt, double temperature) {
  httplib::Client client(host_);
  const auto timeout = std::chrono::duration<double>(config_.timeout_s);
  client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
  client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));

  httplib::Headers headers;
  if (!config_.api_key_env.empty()) {
    if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
      headers.emplace("Authorization", std::string("Bearer ") + key);
    }
  }
  const std::string body = build_request(config_.model_id, temperature, prompt).dump();
  const std::string path = base_path_ + "/chat/completions";

  std::string last_error;
  int last_status = 0;
  double backoff = config_.retry_backoff_s;
  for (int attempt = 1; attempt <= config_.max_retries; ++attempt) {
    if (attempt > 1 && backoff > 0.0) {
      std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
      backoff *= 2.0;
    }
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      last_status = 0;
      continue;
    }
    if (res->status >= 200 && res->status < 300) return parse_response(res->body, attempt);
    last_status = res->status;
    last_error = "HTTP " + std::to_string(res->status) + ": " + excerpt(res->body);
    // Rate limiting and server errors are retried; other statuses are final.
    if (res->status != 429 && res->status < 500) {
      throw ProtocolError(last_error, res->status, attempt);
    }
  }
  if (last_status != 0) throw ProtocolError(last_error, last_status, config_.max_retries);
  throw BackendError("chat completion failed after " + std::to_string(config_.max_retries) +
                         " attempts: " + last_error,
                     config_.max_retries);
}

std::optional<PromptFields> extract_prompt_fields(std::string_view prompt) {
  std::optional<std::string_view> sender, content, activity;
  std::size_t start = 0;
  while (start <= prompt.size()) {
    std::size_t end = prompt.find('\n', start);
    if (end == std::string_view::npos) end = prompt.size();
    const auto line = trim(prompt.substr(start, end - start));
    const auto field = [&line](std::string_view key) -> std::optional<std::string_view> {
      if (line.substr(0, key.size()) == key) return trim(line.substr(key.size()));
      return std::nullopt;
    };
    if (auto v = field("Sender:")) sender = v;
    if (auto v = field("Content:")) content = v;
    if (auto v = field("Activity:")) activity = v;
    if (end == prompt.size()) break;
    start = end + 1;
  }
  if (!sender || !content) return std::nullopt;

  PromptFields f;
  f.content = std::string(*content);
  const auto open = sender->rfind(" (");
  if (open == std::string_view::npos || sender->back() != ')') return std::nullopt;
  f.sender_name = std::string(sender->substr(0, open));
  const auto role = sender->substr(open + 2, sender->size() - open - 3);
  if (role == "group chat") {
    f.sender_role = SenderRole::group;
  } else {
    try {
      f.sender_role = parse_sender_role(role);
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  }
  if (activity && !activity->empty()) {
    try {
      f.activity = parse_activity(*activity);
    } catch (const std::invalid_argument&) {
      return std::nullopt;
    }
  }
  return f;
}

MockRuleBackend::MockRuleBackend(SyntheticUserSpec user, std::string model_id)
    : user_(std::move(user)), model_id_(std::move(model_id)) {}

std::string MockRuleBackend::complete(std::string_view prompt, double /*temperature*/) {
  const auto fields = extract_prompt_fields(prompt);
  if (!fields) {
    // Analyser request: count the numbered example lines and describe the user.
    std::size_t examples = 0;
    static const std::regex numbered(R"(^\d+\. .* -> (urgent|non-urgent)$)");
    std::size_t start = 0;
    while (start < prompt.size()) {
      std::size_t end = prompt.find('\n', start);
      if (end == std::string_view::npos) end = prompt.size();
      const std::string line(prompt.substr(start, end - start));
      if (std::regex_match(line, numbered)) ++examples;
      start = end + 1;
    }
    if (examples == 0) {
      throw BackendError("mock backend: prompt is neither a rater nor an analyser request", 1);
    }
    return "Profile derived from " + std::to_string(examples) + " labelled notifications.\n" +
           render_reported_pattern(user_);
  }

  Notification n;
  n.id = "prompt";
  n.sender_name = fields->sender_name;
  n.sender_role = fields->sender_role;
  n.is_group = fields->sender_role == SenderRole::group;
  n.content = fields->content;
  n.activity = fields->activity;
  const Rule* rule = first_match(user_, n);
  const UrgencyLabel label = rule ? rule->outcome : user_.default_label;

  std::string out = "1. The sender is " + format_sender(n) + ".\n";
  out += fields->activity ? "2. The user is " + std::string(to_string(*fields->activity)) + ".\n"
                          : "2. No activity is given.\n";
  out += rule ? "3. The matching behaviour: " + describe_rule(*rule) + "\n"
              : "3. No specific behaviour applies, so the user's default holds.\n";
  out += std::string(verdict_line(label));
  return out;
}

BackendFactory make_backend_factory(const ModelBackendConfig& config) {
  validate(config);
  if (config.kind == ModelBackendConfig::Kind::remote_chat) {
    auto shared = std::make_shared<RemoteChatBackend>(config);
    return [shared](const std::string&) -> std::shared_ptr<ChatBackend> { return shared; };
  }
  if (config.user_spec) {
    auto shared = std::make_shared<MockRuleBackend>(load_spec(*config.user_spec), config.model_id);
    return [shared](const std::string&) -> std::shared_ptr<ChatBackend> { return shared; };
  }
  struct Cache {
    std::mutex mutex;
    std::map<std::string, std::shared_ptr<ChatBackend>> backends;
  };
  auto cache = std::make_shared<Cache>();
  const auto dir = *config.user_spec_dir;
  const auto model_id = config.model_id;
  return [cache, dir, model_id](const std::string& participant) -> std::shared_ptr<ChatBackend> {
    std::lock_guard lock(cache->mutex);
    auto& slot = cache->backends[participant];
    if (!slot) {
      const auto path = dir / (participant + ".json");
      if (!std::filesystem::exists(path)) {
        cache->backends.erase(participant);
        throw ConfigError("no user spec for participant '" + participant + "' in " + dir.string());
      }
      slot = std::make_shared<MockRuleBackend>(load_spec(path), model_id);
    }
    return slot;
  };
}

}  // namespace persono
