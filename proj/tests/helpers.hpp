#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <sys/wait.h>

#include "persono/dataset.hpp"
#include "persono/random.hpp"
#include "persono/synthetic_user.hpp"

namespace testing {

namespace fs = std::filesystem;

inline fs::path source_dir() { return PERSONO_SOURCE_DIR; }
inline fs::path corpus_path() { return source_dir() / "data" / "corpus.txt"; }
inline fs::path roster_path() { return source_dir() / "data" / "roster.csv"; }

// Removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    std::random_device rd;
    path_ = fs::temp_directory_path() /
            ("persono-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline persono::DatasetBundle fresh_bundle(const std::string& participant, std::uint64_t seed) {
  const auto roster = persono::load_roster(roster_path());
  return persono::build_bundle(corpus_path(), roster, participant, seed);
}

// Preset users with labelled bundles; test labels optionally noise-free.
struct Cohort {
  std::vector<persono::SyntheticUserSpec> users;
  std::vector<persono::DatasetBundle> bundles;
};

inline Cohort make_cohort(std::size_t n, std::uint64_t seed, double noise, bool noise_on_test) {
  Cohort c;
  c.users = persono::preset_population(n, seed);
  for (auto& u : c.users) {
    u.noise_rate = noise;
    auto base = fresh_bundle(u.user_id, persono::derive_seed(seed, {u.user_id}));
    c.bundles.push_back(persono::simulate_participant(base, u, {.noise_on_test = noise_on_test}));
  }
  return c;
}

inline int run_cli(const std::string& args, std::string* output = nullptr, const fs::path& log = {}) {
  const fs::path out = log.empty() ? fs::temp_directory_path() / ("persono-cli-" + std::to_string(std::rand()) + ".log") : log;
  const std::string cmd = std::string("\"") + PERSONO_CLI + "\" " + args + " > \"" + out.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  if (output) *output = slurp(out);
  if (log.empty()) fs::remove(out);
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

}  // namespace testing
