#include "tvirt/cli.hpp"

#include "tvirt/data_io.hpp"
#include "tvirt/errors.hpp"
#include "tvirt/estimators.hpp"
#include "tvirt/evaluation.hpp"
#include "tvirt/exec.hpp"
#include "tvirt/integrability.hpp"
#include "tvirt/sampling.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#ifndef TVIRT_VERSION
#define TVIRT_VERSION "0.0.0"
#endif

namespace tvirt::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[md[k] >> 4]);
    out.push_back(hex[md[k] & 0xf]);
  }
  return out;
}

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

void RunManifest::add_input(const std::string& role, const fs::path& path) {
  inputs[role] = path;
  input_digests[role] = sha256_file(path);
}

std::string RunManifest::config_digest() const {
  Json key;
  key["command"] = command;
  key["config"] = config;
  key["seeds"] = seeds;
  key["inputs"] = input_digests;
  return sha256_hex(key.dump());
}

Json RunManifest::to_json() const {
  Json j;
  j["command"] = command;
  j["version"] = version;
  j["config"] = config;
  j["seeds"] = seeds;
  Json in = Json::object();
  for (const auto& [role, path] : inputs) in[role] = {{"path", path.string()}, {"sha256", input_digests.at(role)}};
  j["inputs"] = in;
  j["outputs"] = outputs;
  j["config_digest"] = config_digest();
  j["threads"] = threads;
  j["started_at"] = started_at;
  j["finished_at"] = finished_at;
  return j;
}

namespace {

constexpr const char* kManifestName = "manifest.json";

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

std::string num(double v) {
  if (v != v) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

Json num_json(double v) { return v == v ? Json(v) : Json(nullptr); }

Json vec_json(const Eigen::VectorXd& v) { return Json(std::vector<double>(v.data(), v.data() + v.size())); }

// Output directory plus the manifest every file in it points back to.
class Run {
 public:
  Run(std::string command, fs::path out) : out_(std::move(out)) {
    manifest_.command = std::move(command);
    manifest_.version = TVIRT_VERSION;
    manifest_.started_at = utc_now();
    manifest_.threads = thread_count();
  }

  RunManifest& manifest() { return manifest_; }
  Json& config() { return manifest_.config; }

  fs::path path(const std::string& name) {
    fs::create_directories(out_);
    manifest_.outputs.push_back(name);
    return out_ / name;
  }

  std::string reference() const {
    return std::string("manifest=") + kManifestName + " config_digest=" + manifest_.config_digest();
  }

  void write_json(const std::string& name, Json body) {
    Json doc;
    doc["manifest"] = kManifestName;
    doc["config_digest"] = manifest_.config_digest();
    for (auto& [k, v] : body.items()) doc[k] = std::move(v);
    write_text(name, doc.dump(2) + "\n");
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream f(path(name));
    if (!f) throw DataError("cannot open '" + (out_ / name).string() + "' for writing");
    f << text;
  }

  std::ofstream open(const std::string& name) {
    std::ofstream f(path(name));
    if (!f) throw DataError("cannot open '" + (out_ / name).string() + "' for writing");
    return f;
  }

  void finish() {
    manifest_.finished_at = utc_now();
    fs::create_directories(out_);
    std::ofstream f(out_ / kManifestName);
    if (!f) throw DataError("cannot write manifest in '" + out_.string() + "'");
    f << manifest_.to_json().dump(2) << '\n';
  }

 private:
  fs::path out_;
  RunManifest manifest_;
};

// Completed matrices may leave [-1, 1] when clipping is off, so they bypass
// the ScoreMatrix validation.
void write_dense_csv(std::ostream& out, const Eigen::MatrixXd& m, const std::vector<std::string>& agents,
                     const std::vector<std::string>& items, const std::string& comment) {
  out << "# " << comment << '\n' << "agent";
  for (const auto& id : items) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << agents[static_cast<std::size_t>(i)];
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << ',' << num(m(i, c));
    out << '\n';
  }
}

Link make_link(LinkKind kind, double clip) { return Link(kind, clip); }

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& n : names) {
    if (n == "all") {
      auto all = all_methods();
      out.insert(out.end(), all.begin(), all.end());
    } else {
      out.push_back(parse_method(n));
    }
  }
  return out;
}

std::string sanitize(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

Json estimate_json(const MetricEstimate& e) {
  return {{"full_fit", num_json(e.full_fit)}, {"estimate", num_json(e.estimate)},
          {"ci", {num_json(e.ci.low), num_json(e.ci.high)}}, {"boot_mean", num_json(e.boot_mean)},
          {"boot_sd", num_json(e.boot_sd)}, {"n_defined", e.n_defined}};
}

Json report_json(const EvalReport& r) {
  return {{"rmse", estimate_json(r.rmse)},
          {"spearman", estimate_json(r.spearman)},
          {"kendall", estimate_json(r.kendall)},
          {"auc", estimate_json(r.auc)},
          {"n_boot", r.n_boot},
          {"realized_coverage", r.realized_coverage},
          {"train_pairs", r.train_pairs},
          {"holdout_pairs", r.holdout_pairs},
          {"disconnected_resamples", r.disconnected_resamples},
          {"warnings", r.warnings}};
}

Json connectivity_json(const ConnectivityReport& c) {
  return {{"min_agent_degree", c.min_agent_degree},
          {"min_item_degree", c.min_item_degree},
          {"n_components", c.n_components},
          {"repaired_pairs", c.repaired_pairs}};
}

const char* kSweepHeader =
    "kind,regime,alpha,beta,C,d_min,method,target_pairs,train_pairs,realized_coverage,min_agent_degree,"
    "min_item_degree,n_components,repaired_pairs,n_boot,rmse,rmse_estimate,rmse_lo,rmse_hi,spearman,"
    "spearman_estimate,spearman_lo,spearman_hi,kendall,kendall_estimate,kendall_lo,kendall_hi,auc,auc_estimate,"
    "auc_lo,auc_hi,error";

void write_metric_cols(std::ostream& out, const MetricEstimate& e) {
  out << ',' << num(e.full_fit) << ',' << num(e.estimate) << ',' << num(e.ci.low) << ',' << num(e.ci.high);
}

void write_sweep_row(std::ostream& out, const SweepRow& row) {
  const auto& s = row.spec;
  const bool uses_alpha = !row.dense && (s.regime == Regime::row || s.regime == Regime::hybrid);
  const bool uses_beta = !row.dense && (s.regime == Regime::column || s.regime == Regime::hybrid);
  const bool uses_c = !row.dense && s.regime == Regime::nlogn;
  out << (row.dense ? "dense" : "sparse") << ',' << (row.dense ? "dense" : to_string(s.regime)) << ','
      << (uses_alpha ? num(s.alpha) : "") << ',' << (uses_beta ? num(s.beta) : "") << ','
      << (uses_c ? num(s.c) : "") << ',' << (row.dense ? "" : std::to_string(s.d_min)) << ','
      << to_string(row.method) << ',' << row.target_pairs << ',' << row.report.train_pairs << ','
      << num(row.report.realized_coverage) << ',' << row.connectivity.min_agent_degree << ','
      << row.connectivity.min_item_degree << ',' << row.connectivity.n_components << ','
      << row.connectivity.repaired_pairs << ',' << row.report.n_boot;
  write_metric_cols(out, row.report.rmse);
  write_metric_cols(out, row.report.spearman);
  write_metric_cols(out, row.report.kendall);
  write_metric_cols(out, row.report.auc);
  out << ',' << sanitize(row.error) << '\n';
}

// Shared option state for the subcommands.
struct Options {
  std::string matrix, holdout, mask, labels, records, out = ".";
  std::string method = "clipped_linear";
  std::string link;
  std::vector<std::string> links{"identity", "probit", "logit"};
  std::vector<std::string> methods{"clipped_linear"};
  std::vector<std::string> regimes{"nlogn"};
  std::string regime = "nlogn";
  std::vector<double> alphas{0.3}, betas{0.3}, cs{1.0};
  double alpha = 0.3, beta = 0.3, c = 1.0;
  std::size_t d_min = 3;
  std::size_t n_boot = 500;
  std::size_t n_rect = 20000;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> holdout_seed;
  double holdout_fraction = 0.2;
  double lambda = 1e-6;
  double clip_bound = 0.99;
  bool no_clip = false;
  bool predictions = false;
  bool exclude_partner = false;
  bool no_dense = false;
  std::string preset;
  std::size_t k = 30, j = 200;
  double theta_mean = 0.18, theta_sd = 0.25, b_mean = 0.0, b_sd = 0.15, noise_sd = 0.12, saturation = 0.025;
  bool no_standardize = false;
  double problematic_fraction = 0.0;
  std::optional<double> nuclear_reg;
  std::size_t uv_rank = 2, svd_rank = 2;
  std::vector<std::string> sweep_files, curl_files;
  int threads = 0;
};

MethodConfig method_config(const Options& o) {
  MethodConfig cfg;
  cfg.fit.lambda = o.lambda;
  cfg.fit.link = Link(LinkKind::identity, o.clip_bound);
  cfg.fit.clip_predictions = !o.no_clip;
  cfg.nuclear_reg = o.nuclear_reg;
  cfg.svd_rank = o.svd_rank;
  cfg.uv.rank = o.uv_rank;
  cfg.seed = o.seed;
  return cfg;
}

Json method_config_json(const MethodConfig& cfg) {
  return {{"lambda", cfg.fit.lambda},
          {"clip_bound", cfg.fit.link.clip_bound},
          {"clip_predictions", cfg.fit.clip_predictions},
          {"nuclear_reg", cfg.nuclear_reg ? Json(*cfg.nuclear_reg) : Json(nullptr)},
          {"nuclear_grid", cfg.nuclear_grid},
          {"svd_rank", cfg.svd_rank},
          {"uv_rank", cfg.uv.rank},
          {"uv_reg", cfg.uv.reg}};
}

ObservationMask load_holdout(const Options& o, const ScoreMatrix& m, Run& run) {
  if (o.holdout.empty()) return ObservationMask(m.n_agents(), m.n_items());
  run.manifest().add_input("holdout", o.holdout);
  return read_mask(o.holdout, m.agent_ids(), m.item_ids());
}

std::optional<AgentLabels> load_labels(const Options& o, const ScoreMatrix& m, Run& run) {
  if (o.labels.empty()) return std::nullopt;
  run.manifest().add_input("labels", o.labels);
  return read_labels(o.labels, m.agent_ids());
}

ScoreMatrix load_matrix(const Options& o, Run& run) {
  if (o.matrix.empty()) throw std::invalid_argument("--matrix is required");
  run.manifest().add_input("matrix", o.matrix);
  return read_matrix(o.matrix);
}

// ---- subcommands ----

int cmd_synth(const Options& o, std::ostream& out) {
  SyntheticSpec spec;
  spec.k = o.k;
  spec.j = o.j;
  spec.theta = {Distribution::Kind::normal, o.theta_mean, o.theta_sd};
  spec.b = {Distribution::Kind::normal, o.b_mean, o.b_sd};
  spec.noise_sd = o.noise_sd;
  spec.saturation_push = o.saturation;
  spec.standardize = !o.no_standardize;
  spec.seed = o.seed;
  if (!(o.problematic_fraction >= 0.0 && o.problematic_fraction < 1.0))
    throw std::invalid_argument("--problematic-fraction must lie in [0, 1)");

  Run run("synth", o.out);
  run.config() = {{"k", spec.k},
                  {"j", spec.j},
                  {"theta", {{"mean", o.theta_mean}, {"sd", o.theta_sd}}},
                  {"b", {{"mean", o.b_mean}, {"sd", o.b_sd}}},
                  {"noise_sd", spec.noise_sd},
                  {"saturation", spec.saturation_push},
                  {"standardize", spec.standardize},
                  {"problematic_fraction", o.problematic_fraction}};
  run.manifest().seeds["seed"] = o.seed;

  const auto data = generate_synthetic(spec);
  write_matrix(run.path("matrix.csv"), data.matrix, run.reference());
  run.write_json("truth.json", {{"agent_ids", data.matrix.agent_ids()},
                                {"item_ids", data.matrix.item_ids()},
                                {"theta", vec_json(data.truth.theta)},
                                {"b", vec_json(data.truth.b)}});
  if (o.problematic_fraction > 0.0) {
    const auto n_bad = static_cast<std::size_t>(std::llround(o.problematic_fraction * static_cast<double>(spec.k)));
    std::vector<std::size_t> order(spec.k);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return data.truth.theta(a) < data.truth.theta(b); });
    std::vector<AgentTag> tags(spec.k, AgentTag::faithful);
    for (std::size_t n = 0; n < n_bad; ++n) tags[order[n]] = AgentTag::problematic;
    auto f = run.open("labels.csv");
    f << "# " << run.reference() << "\nagent,tag\n";
    for (std::size_t i = 0; i < spec.k; ++i) f << data.matrix.agent_ids()[i] << ',' << to_string(tags[i]) << '\n';
  }
  run.finish();
  out << "wrote " << spec.k << "x" << spec.j << " synthetic matrix to " << o.out << '\n';
  return ok;
}

int cmd_aggregate(const Options& o, std::ostream& out) {
  if (o.records.empty()) throw std::invalid_argument("--records is required");
  Run run("aggregate", o.out);
  run.manifest().add_input("records", o.records);
  const auto records = read_records(o.records);
  const auto universe = record_universe(records);
  const auto k = universe.agent_ids.size();
  const auto j = universe.item_ids.size();

  ObservationMask holdout(k, j);
  bool generated = false;
  if (!o.holdout.empty()) {
    run.manifest().add_input("holdout", o.holdout);
    holdout = read_mask(o.holdout, universe.agent_ids, universe.item_ids);
  } else if (o.holdout_fraction > 0.0) {
    const auto seed = o.holdout_seed.value_or(o.seed);
    run.manifest().seeds["holdout_seed"] = seed;
    holdout = make_holdout(k, j, o.holdout_fraction, seed).holdout;
    generated = true;
  }
  run.config() = {{"exclude_partner_holdout", o.exclude_partner},
                  {"holdout_fraction", o.holdout.empty() ? Json(o.holdout_fraction) : Json(nullptr)}};

  AggregateOptions opts{o.exclude_partner};
  auto train = aggregate_tvdmi(records, universe, holdout, opts);
  for (const auto& w : train.warnings) out << "warning: " << w << '\n';
  write_matrix(run.path("matrix.csv"), train.matrix, run.reference());
  if (!holdout.empty()) {
    // Scores for every cell, used only to evaluate held-out predictions.
    auto full = aggregate_tvdmi(records, universe, ObservationMask(k, j), opts);
    write_matrix(run.path("full_matrix.csv"), full.matrix, run.reference());
  }
  if (generated) write_mask(run.path("holdout.csv"), holdout, universe.agent_ids, universe.item_ids, run.reference());
  run.write_json("aggregate.json", {{"agents", k},
                                    {"items", j},
                                    {"records", records.size()},
                                    {"holdout_pairs", holdout.observed_count()},
                                    {"observed_training_cells", train.matrix.mask().observed_count()},
                                    {"empty_cells", train.empty_cells},
                                    {"warnings", train.warnings}});
  run.finish();
  out << "aggregated " << records.size() << " records into a " << k << "x" << j << " matrix\n";
  return ok;
}

int cmd_mask(const Options& o, std::ostream& out) {
  Run run("mask", o.out);
  std::vector<std::string> agents, items;
  std::optional<ScoreMatrix> m;
  if (!o.matrix.empty()) {
    m = load_matrix(o, run);
    agents = m->agent_ids();
    items = m->item_ids();
  } else {
    agents = default_ids("agent", o.k);
    items = default_ids("item", o.j);
  }
  const auto k = agents.size();
  const auto j = items.size();

  ObservationMask holdout(k, j);
  bool generated = false;
  if (!o.holdout.empty()) {
    run.manifest().add_input("holdout", o.holdout);
    holdout = read_mask(o.holdout, agents, items);
  } else if (o.holdout_fraction > 0.0) {
    const auto seed = o.holdout_seed.value_or(o.seed);
    run.manifest().seeds["holdout_seed"] = seed;
    holdout = make_holdout(k, j, o.holdout_fraction, seed).holdout;
    generated = true;
  }
  SamplingSpec spec;
  spec.regime = parse_regime(o.regime);
  spec.alpha = o.alpha;
  spec.beta = o.beta;
  spec.c = o.c;
  spec.d_min = o.d_min;
  spec.seed = o.seed;
  spec.validate();
  run.config() = {{"k", k},
                  {"j", j},
                  {"regime", to_string(spec.regime)},
                  {"alpha", spec.alpha},
                  {"beta", spec.beta},
                  {"C", spec.c},
                  {"d_min", spec.d_min},
                  {"holdout_fraction", o.holdout.empty() ? Json(o.holdout_fraction) : Json(nullptr)}};
  run.manifest().seeds["seed"] = o.seed;

  ObservationMask forbidden = holdout;
  if (m) forbidden = forbidden | m->mask().complement();
  const auto result = make_mask(k, j, spec, forbidden);
  write_mask(run.path("mask.csv"), result.mask, agents, items, run.reference());
  if (generated) write_mask(run.path("holdout.csv"), holdout, agents, items, run.reference());
  Json conn = connectivity_json(result.report);
  conn["target_pairs"] = result.target_pairs;
  conn["observed_pairs"] = result.mask.observed_count();
  conn["coverage"] = static_cast<double>(result.mask.observed_count()) / static_cast<double>(k * j);
  conn["d_min"] = spec.d_min;
  conn["satisfied"] = result.report.satisfies(spec.d_min);
  conn["holdout_pairs"] = holdout.observed_count();
  run.write_json("connectivity.json", conn);
  run.finish();
  out << "mask: " << result.mask.observed_count() << " pairs (" << result.target_pairs << " drawn, "
      << result.report.repaired_pairs << " added by repair), " << result.report.n_components << " component(s)\n";
  return ok;
}

int cmd_fit(const Options& o, std::ostream& out) {
  Run run("fit", o.out);
  const auto m = load_matrix(o, run);
  ObservationMask train = m.mask();
  if (!o.mask.empty()) {
    run.manifest().add_input("mask", o.mask);
    train = read_mask(o.mask, m.agent_ids(), m.item_ids()) & m.mask();
  }
  auto method = parse_method(o.method);
  if (!o.link.empty()) {
    const auto kind = parse_link_kind(o.link);
    if (method != Method::clipped_linear && kind != LinkKind::identity)
      throw std::invalid_argument("--link applies to the clipped_linear method only");
    if (kind == LinkKind::probit) method = Method::rasch_probit;
    if (kind == LinkKind::logit) method = Method::rasch_logit;
  }
  const auto cfg = method_config(o);
  run.config() = {{"method", to_string(method)}, {"method_config", method_config_json(cfg)}};
  run.manifest().seeds["seed"] = o.seed;

  const auto fit = fit_method(method, observations(m, train), cfg);
  {
    auto f = run.open("completed.csv");
    write_dense_csv(f, fit.completed, m.agent_ids(), m.item_ids(), run.reference());
  }
  Json params = nullptr;
  if (fit.params)
    params = {{"theta", vec_json(fit.params->theta)},
              {"b", vec_json(fit.params->b)},
              {"lambda", fit.params->lambda},
              {"gauge_residual", fit.params->gauge_residual}};
  run.write_json("fit.json", {{"method", fit.method_tag},
                              {"agent_ids", m.agent_ids()},
                              {"item_ids", m.item_ids()},
                              {"training_pairs", train.observed_count()},
                              {"params", params},
                              {"abilities", vec_json(abilities(fit))},
                              {"completed_matrix", "completed.csv"},
                              {"objective_trace", fit.objective_trace},
                              {"iterations", fit.iterations},
                              {"converged", fit.converged},
                              {"ops_per_iteration", fit.ops_per_iteration},
                              {"warnings", fit.warnings}});
  run.finish();
  for (const auto& w : fit.warnings) out << "warning: " << w << '\n';
  out << "fit " << fit.method_tag << " on " << train.observed_count() << " pairs in " << fit.iterations
      << " iteration(s)\n";
  return ok;
}

int cmd_curl(const Options& o, std::ostream& out) {
  Run run("curl", o.out);
  const auto m = load_matrix(o, run);
  std::vector<Link> links;
  for (const auto& name : o.links) links.push_back(make_link(parse_link_kind(name), o.clip_bound));
  if (links.empty()) throw std::invalid_argument("--links must name at least one link");
  if (o.n_rect == 0) throw std::invalid_argument("--n-rect must be positive");
  run.config() = {{"links", o.links},
                  {"n_rect", o.n_rect},
                  {"n_boot", o.n_boot},
                  {"clip_bound", o.clip_bound},
                  {"predictions", o.predictions},
                  {"lambda", o.lambda}};
  run.manifest().seeds["seed"] = o.seed;

  const auto ablation = curl_link_ablation(m, links, o.n_rect, o.seed);
  std::optional<CurlBootstrapResult> boot;
  if (o.n_boot > 0) {
    CurlBootstrapOptions bo;
    bo.n_boot = o.n_boot;
    bo.n_rect = o.n_rect;
    bo.seed = o.seed;
    boot = curl_bootstrap(m, links, bo);
  }

  Json link_rows = Json::array();
  Json ecdf = Json::object();
  for (std::size_t l = 0; l < links.size(); ++l) {
    const auto& s = ablation[l].summary;
    Json row = {{"link", to_string(links[l].kind)},
                {"median", s.median},
                {"p95", s.p95},
                {"n_rectangles", s.n_rectangles}};
    if (boot) {
      row["estimate"] = boot->links[l].estimate;
      row["ci"] = {boot->links[l].ci.low, boot->links[l].ci.high};
    }
    link_rows.push_back(row);
    ecdf[to_string(links[l].kind)] = s.ecdf;
  }
  Json diffs = Json::array();
  if (boot)
    for (const auto& d : boot->differences)
      diffs.push_back({{"a", to_string(d.a)},
                       {"b", to_string(d.b)},
                       {"observed", d.observed},
                       {"estimate", d.estimate},
                       {"ci", {d.ci.low, d.ci.high}},
                       {"significant", d.significant()}});

  Json body = {{"agents", m.n_agents()},
               {"items", m.n_items()},
               {"links", link_rows},
               {"differences", diffs},
               {"n_boot", boot ? boot->n_boot : 0},
               {"n_retries", boot ? boot->n_retries : 0}};
  if (o.predictions) {
    FitConfig fc;
    fc.lambda = o.lambda;
    fc.clip_predictions = false;
    const auto fit = fit_clipped_linear(m, fc);
    const Eigen::MatrixXd pred = predict(*fit.params, false);
    const auto rects = sample_rectangles(ObservationMask::full(m.n_agents(), m.n_items()), o.n_rect, o.seed);
    const auto s = curl_summary(pred, rects);
    body["predictions"] = {{"median", s.median}, {"p95", s.p95}, {"n_rectangles", s.n_rectangles}};
  }
  body["ecdf"] = ecdf;
  run.write_json("curl.json", body);
  run.finish();
  for (std::size_t l = 0; l < links.size(); ++l) {
    out << to_string(links[l].kind) << ": median |curl| " << num(ablation[l].summary.median);
    if (boot)
      out << ", bootstrap " << num(boot->links[l].estimate) << " [" << num(boot->links[l].ci.low) << ", "
          << num(boot->links[l].ci.high) << "]";
    out << '\n';
  }
  return ok;
}

int cmd_eval(const Options& o, std::ostream& out) {
  Run run("eval", o.out);
  const auto m = load_matrix(o, run);
  const auto holdout = load_holdout(o, m, run);
  if (holdout.empty()) throw std::invalid_argument("--holdout is required");
  const auto pool = m.mask() & holdout.complement();
  ObservationMask train = pool;
  if (!o.mask.empty()) {
    run.manifest().add_input("mask", o.mask);
    train = read_mask(o.mask, m.agent_ids(), m.item_ids());
    if (train.intersects(holdout)) throw DataError("training mask overlaps the holdout set");
  }
  const auto labels = load_labels(o, m, run);
  EvalOptions eo;
  eo.method = parse_method(o.method);
  eo.config = method_config(o);
  eo.n_boot = o.n_boot;
  eo.seed = o.seed;
  eo.labels = labels ? &*labels : nullptr;
  run.config() = {{"method", to_string(eo.method)},
                  {"method_config", method_config_json(eo.config)},
                  {"n_boot", eo.n_boot},
                  {"level", eo.level}};
  run.manifest().seeds["seed"] = o.seed;

  const auto report = bootstrap_eval(m, holdout, train, eo);
  run.write_json("eval.json", {{"method", to_string(eo.method)}, {"report", report_json(report)}});
  {
    auto f = run.open("eval.csv");
    f << "# " << run.reference() << '\n' << kSweepHeader << '\n';
    SweepRow row;
    row.dense = o.mask.empty();
    row.spec.regime = Regime::nlogn;
    row.method = eo.method;
    row.connectivity = check_connectivity(train);
    row.target_pairs = train.observed_count();
    row.report = report;
    write_sweep_row(f, row);
  }
  run.finish();
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  out << "rmse " << num(report.rmse.full_fit);
  if (report.n_boot > 0)
    out << ", bootstrap " << num(report.rmse.estimate) << " [" << num(report.rmse.ci.low) << ", "
        << num(report.rmse.ci.high) << "]";
  out << '\n';
  return ok;
}

std::vector<SamplingSpec> sweep_specs(const Options& o) {
  std::vector<SamplingSpec> specs;
  std::uint64_t index = 0;
  auto push = [&](SamplingSpec s) {
    s.d_min = o.d_min;
    s.seed = splitmix64(o.seed ^ splitmix64(++index));
    s.validate();
    specs.push_back(s);
  };
  for (const auto& name : o.regimes) {
    const auto regime = parse_regime(name);
    SamplingSpec s;
    s.regime = regime;
    switch (regime) {
      case Regime::row:
        for (double a : o.alphas) s.alpha = a, push(s);
        break;
      case Regime::column:
        for (double b : o.betas) s.beta = b, push(s);
        break;
      case Regime::hybrid:
        for (double a : o.alphas)
          for (double b : o.betas) s.alpha = a, s.beta = b, push(s);
        break;
      case Regime::nlogn:
        for (double c : o.cs) s.c = c, push(s);
        break;
    }
  }
  return specs;
}

int cmd_sweep(Options o, std::ostream& out) {
  if (!o.preset.empty()) {
    if (o.preset != "grid") throw std::invalid_argument("unknown --preset '" + o.preset + "' (expected 'grid')");
    o.regimes = {"row", "column", "hybrid", "nlogn"};
    o.alphas = {0.15, 0.30, 0.45};
    o.betas = {0.15, 0.30, 0.45};
    o.cs = {0.5, 1.0, 2.0, 3.0, 5.0};
  }
  Run run("sweep", o.out);
  const auto m = load_matrix(o, run);
  const auto holdout = load_holdout(o, m, run);
  if (holdout.empty()) throw std::invalid_argument("--holdout is required");
  const auto labels = load_labels(o, m, run);
  const auto specs = sweep_specs(o);
  const auto methods = parse_methods(o.methods);
  if (methods.empty()) throw std::invalid_argument("--methods must name at least one method");

  SweepOptions so;
  so.config = method_config(o);
  so.n_boot = o.n_boot;
  so.seed = o.seed;
  so.labels = labels ? &*labels : nullptr;
  so.include_dense = !o.no_dense;
  Json method_names = Json::array();
  for (auto mth : methods) method_names.push_back(to_string(mth));
  run.config() = {{"regimes", o.regimes},
                  {"alpha", o.alphas},
                  {"beta", o.betas},
                  {"C", o.cs},
                  {"d_min", o.d_min},
                  {"methods", method_names},
                  {"method_config", method_config_json(so.config)},
                  {"n_boot", so.n_boot},
                  {"include_dense", so.include_dense}};
  run.manifest().seeds["seed"] = o.seed;

  const auto rows = sweep(m, holdout, specs, methods, so);
  Json jrows = Json::array();
  std::size_t failed = 0;
  for (const auto& row : rows) {
    failed += !row.error.empty();
    jrows.push_back({{"kind", row.dense ? "dense" : "sparse"},
                     {"regime", row.dense ? "dense" : to_string(row.spec.regime)},
                     {"alpha", row.spec.alpha},
                     {"beta", row.spec.beta},
                     {"C", row.spec.c},
                     {"d_min", row.spec.d_min},
                     {"mask_seed", row.spec.seed},
                     {"method", to_string(row.method)},
                     {"target_pairs", row.target_pairs},
                     {"connectivity", connectivity_json(row.connectivity)},
                     {"report", report_json(row.report)},
                     {"error", row.error}});
  }
  run.write_json("sweep.json", {{"rows", jrows}});
  {
    auto f = run.open("sweep.csv");
    f << "# " << run.reference() << '\n' << kSweepHeader << '\n';
    for (const auto& row : rows) write_sweep_row(f, row);
  }
  run.finish();
  out << "sweep: " << rows.size() << " row(s), " << failed << " failed\n";
  return ok;
}

// ---- report ----

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("sweep CSV lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
};

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    if (t.header.empty()) {
      t.header = std::move(fields);
    } else {
      if (fields.size() != t.header.size())
        throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(t.header.size()) + " fields");
      t.rows.push_back(std::move(fields));
    }
  }
  if (t.header.empty()) throw DataError(path.string() + ": empty CSV");
  return t;
}

std::pair<std::string, fs::path> labelled(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq != std::string::npos) return {arg.substr(0, eq), arg.substr(eq + 1)};
  fs::path p(arg);
  const auto parent = p.parent_path().filename().string();
  return {parent.empty() ? p.stem().string() : parent, p};
}

std::string fixed(const std::string& s, int digits = 3) {
  if (s.empty()) return "n/a";
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc()) return s;
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string fixed(double v, int digits = 3) { return v == v ? fixed(num(v), digits) : "n/a"; }

std::string with_ci(const std::vector<std::string>& r, const CsvTable& t, const std::string& metric) {
  const auto& point = r[t.column(metric)];
  const auto& lo = r[t.column(metric + "_lo")];
  const auto& hi = r[t.column(metric + "_hi")];
  if (lo.empty() || hi.empty()) return fixed(point);
  return fixed(point) + " [" + fixed(lo) + ", " + fixed(hi) + "]";
}

std::string params_of(const std::vector<std::string>& r, const CsvTable& t) {
  const auto regime = r[t.column("regime")];
  if (regime == "row") return "alpha=" + r[t.column("alpha")];
  if (regime == "column") return "beta=" + r[t.column("beta")];
  if (regime == "hybrid") return "alpha=" + r[t.column("alpha")] + " beta=" + r[t.column("beta")];
  if (regime == "nlogn") return "C=" + r[t.column("C")];
  return "";
}

int cmd_report(const Options& o, std::ostream& out) {
  if (o.sweep_files.empty() && o.curl_files.empty())
    throw std::invalid_argument("report needs at least one --sweep or --curl input");
  Run run("report", o.out);
  std::vector<std::pair<std::string, fs::path>> curls, sweeps;
  for (std::size_t n = 0; n < o.curl_files.size(); ++n) {
    curls.push_back(labelled(o.curl_files[n]));
    run.manifest().add_input("curl_" + std::to_string(n), curls.back().second);
  }
  for (std::size_t n = 0; n < o.sweep_files.size(); ++n) {
    sweeps.push_back(labelled(o.sweep_files[n]));
    run.manifest().add_input("sweep_" + std::to_string(n), sweeps.back().second);
  }
  Json labels = Json::array();
  for (const auto& [name, p] : curls) labels.push_back({{"curl", name}});
  for (const auto& [name, p] : sweeps) labels.push_back({{"sweep", name}});
  run.config() = {{"datasets", labels}};

  std::ostringstream md;
  md << "<!-- " << run.reference() << " -->\n\n";

  if (!curls.empty()) {
    md << "## Rectangle deviation by link\n\n"
       << "| Dataset | Link | Median abs curl | 95% CI | P95 abs curl |\n|---|---|---|---|---|\n";
    std::ostringstream diff;
    for (const auto& [name, p] : curls) {
      std::ifstream in(p);
      if (!in) throw DataError("cannot open '" + p.string() + "' for reading");
      Json doc;
      try {
        doc = Json::parse(in);
      } catch (const Json::exception& e) {
        throw DataError(p.string() + ": invalid JSON: " + e.what());
      }
      try {
        for (const auto& l : doc.at("links")) {
          std::string ci = "n/a";
          if (l.contains("ci"))
            ci = "[" + fixed(l.at("ci")[0].get<double>()) + ", " + fixed(l.at("ci")[1].get<double>()) + "]";
          md << "| " << name << " | " << l.at("link").get<std::string>() << " | "
             << fixed(l.at("median").get<double>()) << " | " << ci << " | " << fixed(l.at("p95").get<double>())
             << " |\n";
        }
        if (doc.contains("predictions"))
          md << "| " << name << " | additive predictions | "
             << fixed(doc.at("predictions").at("median").get<double>()) << " | n/a | "
             << fixed(doc.at("predictions").at("p95").get<double>()) << " |\n";
        for (const auto& d : doc.at("differences"))
          diff << "| " << name << " | " << d.at("a").get<std::string>() << " - " << d.at("b").get<std::string>()
               << " | " << fixed(d.at("observed").get<double>()) << " | [" << fixed(d.at("ci")[0].get<double>())
               << ", " << fixed(d.at("ci")[1].get<double>()) << "] | "
               << (d.at("significant").get<bool>() ? "yes" : "no") << " |\n";
      } catch (const Json::exception& e) {
        throw DataError(p.string() + ": malformed curl report: " + e.what());
      }
    }
    if (!diff.str().empty())
      md << "\n### Median differences\n\n| Dataset | Links | Difference | 95% CI | Excludes 0 |\n|---|---|---|---|---|\n"
         << diff.str();
    md << '\n';
  }

  if (!sweeps.empty()) {
    std::vector<std::pair<std::string, CsvTable>> tables;
    for (const auto& [name, p] : sweeps) tables.emplace_back(name, read_csv(p));

    md << "## Sparse recovery fidelity (clipped_linear)\n\n"
       << "| Dataset | Regime | Params | Coverage | Holdout RMSE [95% CI] | Relative RMSE increase | Spearman | "
          "Kendall | AUC |\n|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& [name, t] : tables) {
      std::string dense_rmse;
      for (const auto& r : t.rows)
        if (r[t.column("kind")] == "dense" && r[t.column("method")] == "clipped_linear") dense_rmse = r[t.column("rmse")];
      for (const auto& r : t.rows) {
        if (r[t.column("method")] != "clipped_linear") continue;
        if (!r[t.column("error")].empty()) {
          md << "| " << name << " | " << r[t.column("regime")] << " | " << params_of(r, t) << " | failed: "
             << r[t.column("error")] << " | | | | | |\n";
          continue;
        }
        std::string rel = "n/a";
        if (!dense_rmse.empty() && r[t.column("kind")] != "dense") {
          const double d = std::stod(dense_rmse);
          const double v = std::stod(r[t.column("rmse")]);
          if (d > 0.0) rel = (v >= d ? "+" : "") + num(100.0 * (v - d) / d) + "%";
        }
        md << "| " << name << " | " << r[t.column("regime")] << " | " << params_of(r, t) << " | "
           << fixed(r[t.column("realized_coverage")]) << " | " << with_ci(r, t, "rmse") << " | " << rel << " | "
           << with_ci(r, t, "spearman") << " | " << with_ci(r, t, "kendall") << " | " << with_ci(r, t, "auc")
           << " |\n";
      }
    }

    md << "\n## Baselines (holdout RMSE)\n\n| Dataset | Regime | Params | Method | Holdout RMSE [95% CI] |\n"
          "|---|---|---|---|---|\n";
    for (const auto& [name, t] : tables)
      for (const auto& r : t.rows)
        md << "| " << name << " | " << r[t.column("regime")] << " | " << params_of(r, t) << " | "
           << r[t.column("method")] << " | "
           << (r[t.column("error")].empty() ? with_ci(r, t, "rmse") : "failed: " + r[t.column("error")]) << " |\n";
  }

  run.write_text("tables.md", md.str());
  run.finish();
  out << "wrote " << (fs::path(o.out) / "tables.md").string() << '\n';
  return ok;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Additive structure recovery for bounded, sparse evaluation-score matrices", "tvirt"};
  app.require_subcommand(1);
  app.set_version_flag("--version", TVIRT_VERSION);
  Options o;
  app.add_option("--threads", o.threads, "OpenMP threads (0 = all cores)")->check(CLI::NonNegativeNumber);

  auto add_out = [&](CLI::App* sub) { sub->add_option("--out", o.out, "Output directory")->required(); };
  auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", o.seed, "Base RNG seed"); };
  auto add_fit = [&](CLI::App* sub) {
    sub->add_option("--lambda", o.lambda, "Ridge penalty");
    sub->add_option("--clip-bound", o.clip_bound, "Score clamp before probit/logit links");
    sub->add_option("--nuclear-reg", o.nuclear_reg, "Fixed soft-impute penalty (default: validation grid)");
    sub->add_option("--uv-rank", o.uv_rank, "UV factorization rank");
    sub->add_option("--svd-rank", o.svd_rank, "SVD baseline rank");
  };
  auto add_holdout_gen = [&](CLI::App* sub) {
    sub->add_option("--holdout-fraction", o.holdout_fraction, "Fraction held out when no --holdout is given");
    sub->add_option("--holdout-seed", o.holdout_seed, "Seed for the generated holdout (default: --seed)");
  };

  auto* synth = app.add_subcommand("synth", "Generate a synthetic additive score matrix");
  synth->add_option("--k", o.k, "Agents");
  synth->add_option("--j", o.j, "Items");
  synth->add_option("--theta-mean", o.theta_mean);
  synth->add_option("--theta-sd", o.theta_sd);
  synth->add_option("--b-mean", o.b_mean);
  synth->add_option("--b-sd", o.b_sd);
  synth->add_option("--noise-sd", o.noise_sd);
  synth->add_option("--saturation", o.saturation, "Fraction of cells pushed to +-1");
  synth->add_flag("--no-standardize", o.no_standardize, "Keep raw draws instead of exact moments");
  synth->add_option("--problematic-fraction", o.problematic_fraction,
                    "Label this fraction of lowest-ability agents problematic");
  add_seed(synth);
  add_out(synth);

  auto* aggregate = app.add_subcommand("aggregate", "Average pairwise judge records into a score matrix");
  aggregate->add_option("--records", o.records, "Records CSV")->required();
  aggregate->add_option("--holdout", o.holdout, "Holdout mask CSV");
  aggregate->add_flag("--exclude-partner-holdout", o.exclude_partner, "Also drop terms whose partner cell is held out");
  add_holdout_gen(aggregate);
  add_seed(aggregate);
  add_out(aggregate);

  auto* mask = app.add_subcommand("mask", "Draw a connectivity-repaired training mask");
  mask->add_option("--matrix", o.matrix, "Matrix file (ids and natural sparsity)");
  mask->add_option("--k", o.k, "Agents when no matrix is given");
  mask->add_option("--j", o.j, "Items when no matrix is given");
  mask->add_option("--holdout", o.holdout, "Holdout mask CSV");
  add_holdout_gen(mask);
  mask->add_option("--regime", o.regime, "row | column | hybrid | nlogn");
  mask->add_option("--alpha", o.alpha);
  mask->add_option("--beta", o.beta);
  mask->add_option("--C", o.c);
  mask->add_option("--d-min", o.d_min);
  add_seed(mask);
  add_out(mask);

  auto* fit = app.add_subcommand("fit", "Fit one estimator");
  fit->add_option("--matrix", o.matrix)->required();
  fit->add_option("--mask", o.mask, "Training mask CSV");
  fit->add_option("--method", o.method);
  fit->add_option("--link", o.link, "identity | probit | logit (clipped_linear only)");
  fit->add_flag("--no-clip", o.no_clip, "Do not clamp predictions to [-1, 1]");
  add_fit(fit);
  add_seed(fit);
  add_out(fit);

  auto* curl = app.add_subcommand("curl", "Rectangle-deviation test under competing links");
  curl->add_option("--matrix", o.matrix)->required();
  curl->add_option("--link,--links", o.links, "Links to compare")->delimiter(',');
  curl->add_option("--n-rect", o.n_rect);
  curl->add_option("--n-boot", o.n_boot);
  curl->add_option("--clip-bound", o.clip_bound);
  curl->add_option("--lambda", o.lambda);
  curl->add_flag("--predictions", o.predictions, "Also report curl of unclipped additive predictions");
  add_seed(curl);
  add_out(curl);

  auto* eval = app.add_subcommand("eval", "Bootstrap holdout evaluation of one estimator");
  eval->add_option("--matrix", o.matrix)->required();
  eval->add_option("--holdout", o.holdout)->required();
  eval->add_option("--mask", o.mask, "Training mask CSV (default: all non-holdout cells)");
  eval->add_option("--labels", o.labels, "Agent labels CSV");
  eval->add_option("--method", o.method);
  eval->add_option("--n-boot", o.n_boot);
  add_fit(eval);
  add_seed(eval);
  add_out(eval);

  auto* sw = app.add_subcommand("sweep", "Evaluate every (regime, parameter, method) cell");
  sw->add_option("--matrix", o.matrix)->required();
  sw->add_option("--holdout", o.holdout)->required();
  sw->add_option("--labels", o.labels);
  sw->add_option("--regime,--regimes", o.regimes)->delimiter(',');
  sw->add_option("--alpha", o.alphas)->delimiter(',');
  sw->add_option("--beta", o.betas)->delimiter(',');
  sw->add_option("--C", o.cs)->delimiter(',');
  sw->add_option("--d-min", o.d_min);
  sw->add_option("--method,--methods", o.methods, "Methods, or 'all'")->delimiter(',');
  sw->add_option("--preset", o.preset, "'grid': all regimes, fractions 0.15,0.30,0.45 and C 0.5,1,2,3,5");
  sw->add_option("--n-boot", o.n_boot);
  sw->add_flag("--no-dense", o.no_dense, "Skip the dense reference rows");
  add_fit(sw);
  add_seed(sw);
  add_out(sw);

  auto* report = app.add_subcommand("report", "Collate sweep CSVs and curl reports into markdown tables");
  report->add_option("--sweep", o.sweep_files, "[label=]sweep.csv");
  report->add_option("--curl", o.curl_files, "[label=]curl.json");
  add_out(report);

  // sweep defaults to no bootstrap unless asked.
  bool sweep_boot_set = false;
  sw->callback([&] { sweep_boot_set = sw->count("--n-boot") > 0; });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? ok : usage;
  }

  try {
    set_thread_count(o.threads);
    if (*synth) return cmd_synth(o, out);
    if (*aggregate) return cmd_aggregate(o, out);
    if (*mask) return cmd_mask(o, out);
    if (*fit) return cmd_fit(o, out);
    if (*curl) return cmd_curl(o, out);
    if (*eval) return cmd_eval(o, out);
    if (*sw) {
      if (!sweep_boot_set) o.n_boot = 0;
      return cmd_sweep(o, out);
    }
    if (*report) return cmd_report(o, out);
  } catch (const InfeasibleError& e) {
    err << "tvirt: infeasible: " << e.what() << '\n';
    return infeasible;
  } catch (const DataError& e) {
    err << "tvirt: data error: " << e.what() << '\n';
    return data;
  } catch (const std::invalid_argument& e) {
    err << "tvirt: usage error: " << e.what() << '\n';
    return usage;
  } catch (const fs::filesystem_error& e) {
    err << "tvirt: data error: " << e.what() << '\n';
    return data;
  } catch (const std::exception& e) {
    err << "tvirt: error: " << e.what() << '\n';
    return failure;
  }
  err << "tvirt: usage error: no subcommand\n";
  return usage;
}

int run(int argc, char** argv) {
  std::vector<std::string> args(argv + (argc > 0 ? 1 : 0), argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace tvirt::cli
