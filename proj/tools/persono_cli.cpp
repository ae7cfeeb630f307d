// persono: dataset construction, simulation, profiling, evaluation and the classification service.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <iostream>

#include "persono/dataset.hpp"
#include "persono/evaluation.hpp"
#include "persono/random.hpp"
#include "persono/service.hpp"
#include "persono/synthetic_user.hpp"

namespace fs = std::filesystem;
using namespace persono;

namespace {

std::atomic<bool> g_stop{false};

void print_summary(const DatasetBundle& b) {
  std::size_t group = 0;
  for (const auto* pool : {&b.self_label_pool, &b.interaction_pool}) {
    for (const auto& n : *pool) group += n.is_group ? 1 : 0;
  }
  std::cout << "participant=" << b.participant_id << " messages="
            << b.self_label_pool.size() + b.interaction_pool.size()
            << " self_label=" << b.self_label_pool.size() << " interaction=" << b.interaction_pool.size()
            << " group=" << group << " sr=" << b.sr.size() << " train=" << b.train.size()
            << " test=" << b.test.size() << "\n";
}

std::vector<fs::path> bundle_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError(dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("no bundle files (*.json) in " + dir.string());
  return files;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_file_atomic(path, text);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"persono: personalised notification urgency classification"};
  app.require_subcommand(1);

  // build-dataset
  std::string corpus, roster, participant, out;
  std::uint64_t seed = 0;
  auto* build = app.add_subcommand("build-dataset", "Sample, assign, split and schedule one participant");
  build->add_option("--corpus", corpus, "Message corpus, one message per line")->required()->check(CLI::ExistingFile);
  build->add_option("--roster", roster, "Roster CSV (name,role)")->required()->check(CLI::ExistingFile);
  build->add_option("--participant", participant, "Participant id")->required();
  build->add_option("--seed", seed, "Seed")->required();
  build->add_option("--out", out, "Bundle JSON to write")->required();

  // population
  std::size_t count = 18;
  double noise = 0.0;
  std::string out_dir;
  auto* population = app.add_subcommand("population", "Write preset synthetic user specs");
  population->add_option("--count", count, "Number of users")->check(CLI::Range(1, 999));
  population->add_option("--seed", seed, "Seed")->required();
  population->add_option("--noise", noise, "Label noise rate")->check(CLI::Range(0.0, 0.5));
  population->add_option("--out-dir", out_dir, "Directory for <user_id>.json")->required();

  // cohort
  std::string specs_dir;
  bool clean_test = false;
  auto* cohort = app.add_subcommand("cohort", "Build and simulate a bundle per user spec");
  cohort->add_option("--corpus", corpus)->required()->check(CLI::ExistingFile);
  cohort->add_option("--roster", roster)->required()->check(CLI::ExistingFile);
  cohort->add_option("--specs", specs_dir, "Directory of user specs")->required()->check(CLI::ExistingDirectory);
  cohort->add_option("--seed", seed, "Dataset seed")->required();
  cohort->add_option("--out-dir", out_dir, "Directory for labelled bundles")->required();
  cohort->add_flag("--clean-test", clean_test, "Label the test set without noise");

  // simulate
  std::string bundle_path, spec_path;
  auto* simulate = app.add_subcommand("simulate", "Label a bundle with a synthetic user");
  simulate->add_option("--bundle", bundle_path)->required()->check(CLI::ExistingFile);
  simulate->add_option("--user-spec", spec_path)->required()->check(CLI::ExistingFile);
  simulate->add_option("--out", out)->required();
  simulate->add_flag("--clean-test", clean_test, "Label the test set without noise");

  // export-labels / import-labels
  std::string csv_path;
  auto* export_labels = app.add_subcommand("export-labels", "Write the 90-row self-label sheet");
  export_labels->add_option("--bundle", bundle_path)->required()->check(CLI::ExistingFile);
  export_labels->add_option("--csv", csv_path)->required();
  auto* import_labels = app.add_subcommand("import-labels", "Attach self labels from a filled sheet");
  import_labels->add_option("--bundle", bundle_path)->required()->check(CLI::ExistingFile);
  import_labels->add_option("--csv", csv_path)->required()->check(CLI::ExistingFile);
  import_labels->add_option("--out", out, "Output bundle (default: overwrite --bundle)");

  // profile
  std::string dataset_token, backend_path, store_dir;
  auto* profile = app.add_subcommand("profile", "Build an M2 user profile");
  profile->add_option("--bundle", bundle_path)->required()->check(CLI::ExistingFile);
  profile->add_option("--dataset", dataset_token, "Training view")->required()->check(CLI::IsMember({"SR", "D1", "D2"}));
  profile->add_option("--backend", backend_path, "Backend config JSON")->required()->check(CLI::ExistingFile);
  profile->add_option("--out", out, "Profile JSON to write")->required();
  profile->add_option("--store", store_dir, "Also add to this profile store and activate it");

  // evaluate
  std::string bundles_dir, configs = "all", report_path, table_path, cache_dir;
  unsigned threads = 1;
  auto* evaluate = app.add_subcommand("evaluate", "Run the method x dataset grid");
  evaluate->add_option("--bundles", bundles_dir, "Directory of labelled bundles")->required();
  evaluate->add_option("--backend", backend_path)->required()->check(CLI::ExistingFile);
  evaluate->add_option("--configs", configs, "Comma list or 'all': " + allowed_configuration_tokens());
  evaluate->add_option("--report", report_path, "JSON report")->required();
  evaluate->add_option("--table", table_path, "Text table (default: <report>.txt)");
  evaluate->add_option("--cache", cache_dir, "Profile cache directory");
  evaluate->add_option("--threads", threads, "Cells evaluated concurrently")->check(CLI::Range(1u, 256u));

  auto* reference = app.add_subcommand("reference", "Print the published reference table");

  // serve
  std::string service_config;
  auto* serve_cmd = app.add_subcommand("serve", "Run the classification service");
  serve_cmd->add_option("--config", service_config, "Service config JSON")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      const auto r = load_roster(roster);
      auto bundle = build_bundle(corpus, r, participant, seed);
      save_bundle(bundle, out);
      print_summary(load_bundle(out));
    } else if (*population) {
      fs::create_directories(out_dir);
      for (auto spec : preset_population(count, seed)) {
        spec.noise_rate = noise;
        save_spec(spec, fs::path(out_dir) / (spec.user_id + ".json"));
        std::cout << spec.user_id << ": " << spec.rules.size() << " rules\n";
      }
    } else if (*cohort) {
      const auto r = load_roster(roster);
      fs::create_directories(out_dir);
      std::vector<fs::path> specs;
      for (const auto& e : fs::directory_iterator(specs_dir)) {
        if (e.path().extension() == ".json") specs.push_back(e.path());
      }
      std::sort(specs.begin(), specs.end());
      if (specs.empty()) throw ConfigError("no user specs in " + specs_dir);
      for (const auto& p : specs) {
        const auto spec = load_spec(p);
        const auto base = build_bundle(corpus, r, spec.user_id, derive_seed(seed, {spec.user_id}));
        const auto labelled = simulate_participant(base, spec, {.noise_on_test = !clean_test});
        const auto target = fs::path(out_dir) / (spec.user_id + ".json");
        save_bundle(labelled, target);
        print_summary(labelled);
      }
    } else if (*simulate) {
      const auto labelled =
          simulate_participant(load_bundle(bundle_path), load_spec(spec_path), {.noise_on_test = !clean_test});
      save_bundle(labelled, out);
      print_summary(labelled);
    } else if (*export_labels) {
      const auto b = load_bundle(bundle_path);
      export_label_sheet(b.self_label_pool, csv_path);
      std::cout << "wrote " << b.self_label_pool.size() << " rows to " << csv_path << "\n";
    } else if (*import_labels) {
      auto b = load_bundle(bundle_path);
      b.sr = import_self_labels(csv_path, b.self_label_pool);
      save_bundle(b, out.empty() ? bundle_path : out);
      std::cout << "imported " << b.sr.size() << " labels\n";
    } else if (*profile) {
      const auto b = load_bundle(bundle_path);
      const auto view = parse_dataset_view(dataset_token);
      const auto backend = make_backend_factory(load_backend_config(backend_path))(b.participant_id);
      ProfileRequest request;
      request.participant_id = b.participant_id;
      request.dataset = view;
      const auto p = build_profile(*backend, variant_for(view), training_view(b, view), request);
      write_text(out, profile_to_json(p).dump(2) + "\n");
      if (!store_dir.empty()) {
        ProfileStore store(store_dir);
        store.add_profile(p);
        if (b.reported_pattern) store.set_reported_pattern(b.participant_id, *b.reported_pattern);
      }
      std::cout << p.profile_id << "\n";
    } else if (*evaluate) {
      const auto selected = parse_configuration_list(configs);
      std::vector<DatasetBundle> bundles;
      for (const auto& f : bundle_files(bundles_dir)) bundles.push_back(load_bundle(f));
      const auto backend_config = load_backend_config(backend_path);
      GridOptions options;
      options.threads = threads;
      options.run.classify.temperature = backend_config.temperature;
      std::optional<ProfileCache> cache;
      if (!cache_dir.empty()) {
        cache.emplace(cache_dir);
        options.run.cache = &*cache;
      }
      const auto report = run_grid(bundles, make_backend_factory(backend_config), selected, options);
      write_text(report_path, report_to_json(report).dump(2) + "\n");
      const auto table = render_table(report);
      write_text(table_path.empty() ? report_path + ".txt" : table_path, table);
      std::cout << table;
      std::size_t with_results = 0;
      for (const auto& c : report.cells) with_results += c.run.results.empty() ? 0 : 1;
      if (with_results == 0) {
        std::cerr << "error: every cell failed\n";
        return 3;
      }
    } else if (*reference) {
      std::cout << render_reference_table();
    } else if (*serve_cmd) {
      const auto cfg = load_service_config(service_config);
      ClassificationService service(cfg, make_backend_factory(load_backend_config(cfg.backend_config)));
      std::signal(SIGINT, [](int) { g_stop = true; });
      std::signal(SIGTERM, [](int) { g_stop = true; });
      serve(service, [&](int port) { std::cout << "listening on " << cfg.host << ":" << port << std::endl; },
            &g_stop);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
