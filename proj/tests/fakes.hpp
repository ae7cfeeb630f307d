#pragma once

#include <deque>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "persono/backend.hpp"
#include "persono/error.hpp"

namespace testing {

// Scripted chat backend; records every call.
class FakeBackend final : public persono::ChatBackend {
 public:
  using Responder = std::function<std::string(std::string_view prompt, int call)>;

  explicit FakeBackend(Responder responder, std::string model = "fake-model")
      : responder_(std::move(responder)), model_(std::move(model)) {}

  // Replies in order, repeating the last one.
  static FakeBackend scripted(std::vector<std::string> replies) {
    auto shared = std::make_shared<std::vector<std::string>>(std::move(replies));
    return FakeBackend([shared](std::string_view, int call) {
      return (*shared)[std::min<std::size_t>(static_cast<std::size_t>(call), shared->size() - 1)];
    });
  }

  std::string complete(std::string_view prompt, double temperature) override {
    int call;
    {
      std::lock_guard lock(mutex_);
      call = static_cast<int>(prompts_.size());
      prompts_.emplace_back(prompt);
      temperatures_.push_back(temperature);
    }
    return responder_(prompt, call);
  }
  const std::string& model_id() const override { return model_; }

  std::size_t calls() const {
    std::lock_guard lock(mutex_);
    return prompts_.size();
  }
  std::vector<double> temperatures() const {
    std::lock_guard lock(mutex_);
    return temperatures_;
  }
  std::vector<std::string> prompts() const {
    std::lock_guard lock(mutex_);
    return prompts_;
  }

 private:
  Responder responder_;
  std::string model_;
  mutable std::mutex mutex_;
  std::vector<std::string> prompts_;
  std::vector<double> temperatures_;
};

}  // namespace testing
