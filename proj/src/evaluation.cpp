#include "persono/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace persono {

using nlohmann::json;

ConfusionMatrix confusion_matrix(std::span<const UrgencyLabel> predicted,
                                 std::span<const UrgencyLabel> truth) {
  if (predicted.size() != truth.size()) {
    throw EvaluationError("prediction/truth length mismatch: " + std::to_string(predicted.size()) +
                          " vs " + std::to_string(truth.size()));
  }
  ConfusionMatrix m;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool p = predicted[i] == UrgencyLabel::urgent;
    const bool t = truth[i] == UrgencyLabel::urgent;
    if (p && t) ++m.tp;
    else if (p) ++m.fp;
    else if (t) ++m.fn;
    else ++m.tn;
  }
  return m;
}

ConfusionMatrix confusion_matrix(std::span<const ClassificationResult> results,
                                 std::span<const LabeledNotification> truth) {
  if (results.size() != truth.size()) {
    throw EvaluationError("result/truth length mismatch: " + std::to_string(results.size()) + " vs " +
                          std::to_string(truth.size()));
  }
  std::map<std::string_view, UrgencyLabel> by_id;
  for (const auto& t : truth) {
    if (!by_id.emplace(t.notification.id, t.label).second) {
      throw EvaluationError("duplicate truth id " + t.notification.id);
    }
  }
  std::vector<UrgencyLabel> p, t;
  std::set<std::string_view> seen;
  for (const auto& r : results) {
    auto it = by_id.find(r.notification_id);
    if (it == by_id.end()) throw EvaluationError("result id " + r.notification_id + " not in truth set");
    if (!seen.insert(r.notification_id).second) {
      throw EvaluationError("duplicate result id " + r.notification_id);
    }
    p.push_back(r.final_label);
    t.push_back(it->second);
  }
  return confusion_matrix(p, t);
}

ConfusionMetrics confusion_metrics(const ConfusionMatrix& m) {
  ConfusionMetrics out;
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  out.accuracy = ratio(m.tp + m.tn, m.total());
  out.fnr = ratio(m.fn, m.fn + m.tp);
  out.specificity = ratio(m.tn, m.tn + m.fp);
  return out;
}

std::optional<double> auroc(std::span<const double> scores, std::span<const UrgencyLabel> truth) {
  if (scores.size() != truth.size()) {
    throw EvaluationError("score/truth length mismatch: " + std::to_string(scores.size()) + " vs " +
                          std::to_string(truth.size()));
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups.
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (truth[order[k]] == UrgencyLabel::urgent) {
        rank_sum_pos += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::nullopt;
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum_pos - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

namespace {

// Lentz's method for the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw EvaluationError("incomplete beta needs a, b > 0");
  if (std::isnan(x) || x < 0.0 || x > 1.0) throw EvaluationError("incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                          b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_tailed_p(double t, double df) {
  if (!(df > 0.0)) throw EvaluationError("degrees of freedom must be positive");
  if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
  if (std::isinf(t)) return 0.0;
  const double x = df / (df + t * t);
  return std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw EvaluationError("paired samples differ in length: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  TTestResult r;
  r.n = a.size();
  r.df = r.n > 0 ? static_cast<int>(r.n) - 1 : 0;
  if (r.n < 2) return r;
  double mean = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(r.n);
  double ss = 0.0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const double dev = (a[i] - b[i]) - mean;
    ss += dev * dev;
  }
  const double var = ss / static_cast<double>(r.n - 1);
  // Differences that are equal up to rounding count as zero variance.
  const double scale = std::max(1.0, std::fabs(mean));
  if (var <= (1e-12 * scale) * (1e-12 * scale)) return r;
  const double se = std::sqrt(var / static_cast<double>(r.n));
  r.t = mean / se;
  r.p = student_t_two_tailed_p(*r.t, r.df);
  return r;
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::accuracy: return "accuracy";
    case Metric::fnr: return "fnr";
    case Metric::specificity: return "specificity";
    case Metric::auroc: return "auroc";
  }
  return "?";
}

std::string_view display_name(Metric metric) {
  switch (metric) {
    case Metric::accuracy: return "Accuracy";
    case Metric::fnr: return "FNR";
    case Metric::specificity: return "Specificity";
    case Metric::auroc: return "AUROC";
  }
  return "?";
}

std::optional<double> CellMetrics::get(Metric metric) const {
  switch (metric) {
    case Metric::accuracy: return rates.accuracy;
    case Metric::fnr: return rates.fnr;
    case Metric::specificity: return rates.specificity;
    case Metric::auroc: return auroc;
  }
  return std::nullopt;
}

CellMetrics score_run(const ConfigurationRun& run, const DatasetBundle& bundle) {
  std::map<std::string_view, UrgencyLabel> truth;
  for (const auto& t : bundle.test) truth.emplace(t.notification.id, t.label);
  std::vector<UrgencyLabel> predicted, actual;
  std::vector<double> scores;
  for (const auto& r : run.results) {
    auto it = truth.find(r.notification_id);
    if (it == truth.end()) {
      throw EvaluationError(run.participant_id + ": result id " + r.notification_id + " not in test set");
    }
    predicted.push_back(r.final_label);
    actual.push_back(it->second);
    scores.push_back(r.score);
  }
  CellMetrics m;
  m.confusion = confusion_matrix(predicted, actual);
  m.rates = confusion_metrics(m.confusion);
  m.auroc = auroc(scores, actual);
  return m;
}

const GridCell* EvaluationReport::cell(const std::string& participant, const Configuration& config) const {
  for (const auto& c : cells) {
    if (c.run.participant_id == participant && c.run.config == config) return &c;
  }
  return nullptr;
}

std::vector<std::pair<Configuration, Configuration>> headline_pairs() {
  const auto d2 = parse_configuration("M2-D2");
  return {{d2, parse_configuration("M2-D1")},
          {parse_configuration("M2-SR"), d2},
          {d2, parse_configuration("M1-P2")}};
}

EvaluationReport run_grid(std::span<const DatasetBundle> bundles, const BackendFactory& backends,
                          std::span<const Configuration> configurations, const GridOptions& options) {
  if (bundles.empty()) throw EvaluationError("no participant bundles");
  if (configurations.empty()) throw EvaluationError("no configurations");
  EvaluationReport report;
  report.configurations.assign(configurations.begin(), configurations.end());
  std::set<std::string> ids;
  for (const auto& b : bundles) {
    if (!ids.insert(b.participant_id).second) {
      throw EvaluationError("duplicate participant " + b.participant_id);
    }
    report.participants.push_back(b.participant_id);
    for (const auto& c : configurations) check_runnable(c, b);
  }

  const std::size_t n_cells = bundles.size() * configurations.size();
  report.cells.resize(n_cells);
  std::vector<std::string> backend_models(bundles.size());
  std::atomic<std::size_t> next{0};
  std::mutex model_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < n_cells; i = next++) {
      const auto& bundle = bundles[i / configurations.size()];
      const auto& config = configurations[i % configurations.size()];
      auto& cell = report.cells[i];
      try {
        auto backend = backends(bundle.participant_id);
        {
          std::lock_guard lock(model_mutex);
          backend_models[i / configurations.size()] = backend->model_id();
        }
        cell.run = run_configuration(config, bundle, *backend, options.run);
      } catch (const ConfigError&) {
        throw;
      } catch (const Error& e) {
        cell.run.config = config;
        cell.run.participant_id = bundle.participant_id;
        cell.run.error = e.what();
      }
      cell.metrics = score_run(cell.run, bundle);
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(n_cells)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (unsigned t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          worker();
        } catch (...) {
          errors[t] = std::current_exception();
          next = n_cells;
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  for (const auto& config : configurations) {
    ConfigSummary s;
    s.config = config;
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      double sum = 0.0;
      for (const auto& cell : report.cells) {
        if (!(cell.run.config == config)) continue;
        if (!cell.complete()) continue;
        if (auto v = cell.metrics.get(kMetrics[m])) {
          sum += *v;
          ++s.means[m].participants;
        } else {
          ++s.means[m].not_applicable;
        }
      }
      if (s.means[m].participants > 0) s.means[m].mean = sum / static_cast<double>(s.means[m].participants);
    }
    for (const auto& cell : report.cells) {
      if (cell.run.config == config && !cell.complete()) ++s.incomplete_cells;
    }
    report.summaries.push_back(s);
  }

  auto has = [&](const Configuration& c) {
    return std::find(configurations.begin(), configurations.end(), c) != configurations.end();
  };
  for (const auto& [first, second] : headline_pairs()) {
    if (!has(first) || !has(second)) continue;
    for (Metric metric : {Metric::accuracy, Metric::fnr}) {
      std::vector<double> xs, ys;
      for (const auto& pid : report.participants) {
        const auto* a = report.cell(pid, first);
        const auto* b = report.cell(pid, second);
        if (!a || !b || !a->complete() || !b->complete()) continue;
        auto va = a->metrics.get(metric);
        auto vb = b->metrics.get(metric);
        if (!va || !vb) continue;
        xs.push_back(*va);
        ys.push_back(*vb);
      }
      report.comparisons.push_back({first, second, metric, paired_t_test(xs, ys)});
    }
  }

  const auto& templates = options.run.classify.templates ? *options.run.classify.templates : default_templates();
  json seeds = json::object();
  for (const auto& b : bundles) seeds[b.participant_id] = b.seed;
  std::set<std::string> models(backend_models.begin(), backend_models.end());
  models.erase("");
  report.metadata = {{"model_ids", std::vector<std::string>(models.begin(), models.end())},
                     {"template_version", templates.version},
                     {"ensemble_size", options.run.classify.ensemble_size},
                     {"rater_temperature", options.run.classify.temperature},
                     {"analyser_temperature", kAnalyserTemperature},
                     {"seeds", seeds},
                     {"created_at", options.run.clock ? options.run.clock() : timestamp_now()}};
  return report;
}

namespace {

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string fmt3(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

std::string pad(std::string s, std::size_t width, bool left = false) {
  if (s.size() >= width) return s;
  return left ? s + std::string(width - s.size(), ' ') : std::string(width - s.size(), ' ') + s;
}

std::string column_label(const Configuration& c) {
  return c.method == Method::M2 ? std::string(to_string(c.dataset)) : std::string(to_string(c.variant));
}

std::string render_grid(const std::vector<Configuration>& columns,
                        const std::function<std::optional<double>(std::size_t col, Metric)>& value) {
  constexpr std::size_t kHead = 12, kCol = 8;
  std::ostringstream out;
  // Method header spans its columns.
  std::string methods = pad("", kHead, true);
  for (std::size_t i = 0; i < columns.size();) {
    std::size_t j = i;
    while (j < columns.size() && columns[j].method == columns[i].method) ++j;
    methods += pad(std::string(to_string(columns[i].method)), kCol * (j - i), true);
    i = j;
  }
  while (!methods.empty() && methods.back() == ' ') methods.pop_back();
  out << methods << "\n";
  out << pad("Metric", kHead, true);
  for (const auto& c : columns) out << pad(column_label(c), kCol, true);
  out << "\n";
  for (Metric m : kMetrics) {
    out << pad(std::string(display_name(m)), kHead, true);
    for (std::size_t i = 0; i < columns.size(); ++i) out << pad(fmt3(value(i, m)), kCol, true);
    out << "\n";
  }
  return out.str();
}

}  // namespace

json report_to_json(const EvaluationReport& report) {
  json cells = json::array();
  for (const auto& cell : report.cells) {
    json metrics = json::object();
    for (Metric m : kMetrics) metrics[std::string(to_string(m))] = opt_json(cell.metrics.get(m));
    json failures = json::array();
    for (const auto& f : cell.run.failures) {
      failures.push_back({{"notification_id", f.notification_id},
                          {"message", f.message},
                          {"attempts", f.attempts},
                          {"completed_verdicts", f.completed_verdicts}});
    }
    json results = json::array();
    for (const auto& r : cell.run.results) results.push_back(result_to_json(r));
    const auto& cm = cell.metrics.confusion;
    cells.push_back({{"participant_id", cell.run.participant_id},
                     {"configuration", cell.run.config.token()},
                     {"complete", cell.complete()},
                     {"error", cell.run.error ? json(*cell.run.error) : json(nullptr)},
                     {"profile_id", cell.run.profile ? json(cell.run.profile->profile_id) : json(nullptr)},
                     {"confusion", {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}}},
                     {"metrics", metrics},
                     {"failures", failures},
                     {"results", results}});
  }
  json summaries = json::array();
  for (const auto& s : report.summaries) {
    json means = json::object();
    for (std::size_t m = 0; m < kMetrics.size(); ++m) {
      means[std::string(to_string(kMetrics[m]))] = {{"mean", opt_json(s.means[m].mean)},
                                                    {"participants", s.means[m].participants},
                                                    {"not_applicable", s.means[m].not_applicable}};
    }
    summaries.push_back({{"configuration", s.config.token()},
                         {"incomplete_cells", s.incomplete_cells},
                         {"macro", means}});
  }
  json comparisons = json::array();
  for (const auto& c : report.comparisons) {
    comparisons.push_back({{"first", c.first.token()},
                           {"second", c.second.token()},
                           {"metric", std::string(to_string(c.metric))},
                           {"n", c.test.n},
                           {"df", c.test.df},
                           {"t", opt_json(c.test.t)},
                           {"p", opt_json(c.test.p)}});
  }
  json configs = json::array();
  for (const auto& c : report.configurations) configs.push_back(c.token());
  return {{"metadata", report.metadata},
          {"configurations", configs},
          {"participants", report.participants},
          {"summary", summaries},
          {"comparisons", comparisons},
          {"cells", cells}};
}

std::string render_table(const EvaluationReport& report) {
  std::ostringstream out;
  out << render_grid(report.configurations, [&](std::size_t col, Metric m) {
    return report.summaries[col].means[static_cast<std::size_t>(m)].mean;
  });
  std::size_t incomplete = 0;
  for (const auto& s : report.summaries) incomplete += s.incomplete_cells;
  out << "participants: " << report.participants.size();
  if (incomplete) out << ", incomplete cells: " << incomplete;
  out << "\n";
  for (const auto& c : report.comparisons) {
    out << c.first.token() << " vs " << c.second.token() << " (" << to_string(c.metric) << "): ";
    if (c.test.applicable()) {
      char buf[96];
      const double t = std::fabs(*c.test.t) < 5e-4 ? 0.0 : *c.test.t;  // no "-0.000"
      std::snprintf(buf, sizeof buf, "t(%d) = %.3f, p = %.4f", c.test.df, t, *c.test.p);
      out << buf;
    } else {
      out << "n/a (n = " << c.test.n << ")";
    }
    out << "\n";
  }
  return out.str();
}

namespace {

constexpr std::array<ReferenceRow, 4> kReference{{
    {Metric::accuracy, {0.670, 0.670, 0.735, 0.679, 0.747, 0.759, 0.815}},
    {Metric::fnr, {0.703, 0.627, 0.528, 0.614, 0.432, 0.550, 0.381}},
    {Metric::specificity, {0.887, 0.846, 0.838, 0.818, 0.821, 0.923, 0.875}},
    {Metric::auroc, {0.595, 0.609, 0.684, 0.617, 0.721, 0.708, 0.786}},
}};

}  // namespace

std::span<const ReferenceRow> published_reference() { return kReference; }

std::string render_reference_table() {
  const auto configs = all_configurations();
  const std::vector<Configuration> columns(configs.begin(), configs.end());
  return render_grid(columns, [](std::size_t col, Metric m) -> std::optional<double> {
    return kReference[static_cast<std::size_t>(m)].values[col];
  });
}

}  // namespace persono
