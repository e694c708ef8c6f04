#include "tvirt/data_io.hpp"

#include "tvirt/errors.hpp"
#include "tvirt/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <tuple>
#include <unordered_map>

namespace tvirt {

namespace {

std::string location(std::string_view source, std::size_t line, std::size_t column = 0) {
  std::string out = std::string(source) + ":" + std::to_string(line);
  if (column) out += ":" + std::to_string(column);
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// Yields non-empty, non-comment lines with their 1-based line numbers.
class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}
  bool next(std::string& line) {
    while (std::getline(in_, line)) {
      ++number_;
      const auto t = trim(line);
      if (t.empty() || t.front() == '#') continue;
      return true;
    }
    return false;
  }
  std::size_t number() const { return number_; }

 private:
  std::istream& in_;
  std::size_t number_ = 0;
};

double parse_number(std::string_view text, std::string_view source, std::size_t line, std::size_t column) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v))
    throw DataError(location(source, line, column) + ": non-numeric cell '" + std::string(text) + "'");
  return v;
}

std::string format_number(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void require_header(std::string_view source, std::size_t line, const std::vector<std::string_view>& got,
                    std::initializer_list<std::string_view> expected) {
  if (got.size() != expected.size() || !std::equal(got.begin(), got.end(), expected.begin())) {
    std::string want;
    for (auto e : expected) want += (want.empty() ? "" : ",") + std::string(e);
    throw DataError(location(source, line) + ": expected header '" + want + "'");
  }
}

void check_label(std::string_view label, std::string_view source, std::size_t line, std::size_t column) {
  if (label.empty()) throw DataError(location(source, line, column) + ": empty label");
  if (label.find_first_of(",\"") != std::string_view::npos)
    throw DataError(location(source, line, column) + ": label contains ',' or '\"'");
}

std::unordered_map<std::string, std::size_t> index_of(const std::vector<std::string>& ids) {
  std::unordered_map<std::string, std::size_t> out;
  for (std::size_t k = 0; k < ids.size(); ++k) out.emplace(ids[k], k);
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  return out;
}

void write_comment(std::ostream& out, std::string_view comment) {
  if (!comment.empty()) out << "# " << comment << '\n';
}

}  // namespace

ScoreMatrix read_matrix_csv(std::istream& in, std::string_view source) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw DataError(std::string(source) + ": empty matrix file");
  const auto header = split(line);
  if (header.size() < 2) throw DataError(location(source, reader.number()) + ": header needs at least one item");
  std::vector<std::string> items;
  for (std::size_t c = 1; c < header.size(); ++c) {
    check_label(header[c], source, reader.number(), c + 1);
    items.emplace_back(header[c]);
  }
  std::vector<std::string> agents;
  std::vector<double> values;
  std::vector<std::uint8_t> observed;
  while (reader.next(line)) {
    const auto fields = split(line);
    if (fields.size() != header.size())
      throw DataError(location(source, reader.number()) + ": dimension mismatch, expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));
    check_label(fields[0], source, reader.number(), 1);
    agents.emplace_back(fields[0]);
    for (std::size_t c = 1; c < fields.size(); ++c) {
      if (fields[c].empty()) {
        values.push_back(0.0);
        observed.push_back(0);
        continue;
      }
      const double v = parse_number(fields[c], source, reader.number(), c + 1);
      if (v < -1.0 || v > 1.0)
        throw DataError(location(source, reader.number(), c + 1) + ": score " + std::string(fields[c]) +
                        " outside [-1, 1]");
      values.push_back(v);
      observed.push_back(1);
    }
  }
  const auto k = agents.size();
  const auto j = items.size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  ObservationMask mask(k, j);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < j; ++c) {
      m(i, c) = values[i * j + c];
      if (observed[i * j + c]) mask.set(i, c);
    }
  try {
    return ScoreMatrix(std::move(agents), std::move(items), std::move(m), std::move(mask));
  } catch (const DataError& e) {
    throw DataError(std::string(source) + ": " + e.what());
  }
}

ScoreMatrix read_matrix_json(std::istream& in, std::string_view source) {
  using nlohmann::json;
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(std::string(source) + ": invalid JSON: " + e.what());
  }
  auto where = [&](const std::string& path) { return std::string(source) + ": " + path; };
  try {
    auto agents = doc.at("agent_ids").get<std::vector<std::string>>();
    auto items = doc.at("item_ids").get<std::vector<std::string>>();
    const auto& values = doc.at("values");
    const json* mask_doc = doc.contains("mask") ? &doc.at("mask") : nullptr;
    const auto k = agents.size();
    const auto j = items.size();
    if (!values.is_array() || values.size() != k) throw DataError(where("values") + ": dimension mismatch");
    if (mask_doc && (!mask_doc->is_array() || mask_doc->size() != k)) throw DataError(where("mask") + ": dimension mismatch");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
    ObservationMask mask(k, j);
    for (std::size_t i = 0; i < k; ++i) {
      const auto& row = values[i];
      if (!row.is_array() || row.size() != j)
        throw DataError(where("values[" + std::to_string(i) + "]") + ": dimension mismatch");
      if (mask_doc && (!(*mask_doc)[i].is_array() || (*mask_doc)[i].size() != j))
        throw DataError(where("mask[" + std::to_string(i) + "]") + ": dimension mismatch");
      for (std::size_t c = 0; c < j; ++c) {
        const auto cell = "[" + std::to_string(i) + "][" + std::to_string(c) + "]";
        const bool obs = mask_doc ? (*mask_doc)[i][c].get<bool>() : !row[c].is_null();
        if (!obs) continue;
        if (!row[c].is_number()) throw DataError(where("values" + cell) + ": observed cell is not a number");
        const double v = row[c].get<double>();
        if (!(v >= -1.0 && v <= 1.0))
          throw DataError(where("values" + cell) + ": score " + format_number(v) + " outside [-1, 1]");
        m(i, c) = v;
        mask.set(i, c);
      }
    }
    return ScoreMatrix(std::move(agents), std::move(items), std::move(m), std::move(mask));
  } catch (const json::exception& e) {
    throw DataError(std::string(source) + ": malformed matrix JSON: " + e.what());
  } catch (const DataError& e) {
    const std::string msg = e.what();
    if (msg.rfind(std::string(source), 0) == 0) throw;
    throw DataError(std::string(source) + ": " + msg);
  }
}

ScoreMatrix read_matrix(const std::filesystem::path& path) {
  auto in = open_input(path);
  if (path.extension() == ".json") return read_matrix_json(in, path.string());
  return read_matrix_csv(in, path.string());
}

void write_matrix_csv(std::ostream& out, const ScoreMatrix& m, std::string_view comment) {
  write_comment(out, comment);
  out << "agent";
  for (const auto& id : m.item_ids()) out << ',' << id;
  out << '\n';
  for (std::size_t i = 0; i < m.n_agents(); ++i) {
    out << m.agent_ids()[i];
    for (std::size_t c = 0; c < m.n_items(); ++c) {
      out << ',';
      if (m.observed(i, c)) out << format_number(m(i, c));
    }
    out << '\n';
  }
}

void write_matrix_json(std::ostream& out, const ScoreMatrix& m) {
  using nlohmann::json;
  json doc;
  doc["agent_ids"] = m.agent_ids();
  doc["item_ids"] = m.item_ids();
  json values = json::array(), mask = json::array();
  for (std::size_t i = 0; i < m.n_agents(); ++i) {
    json vrow = json::array(), mrow = json::array();
    for (std::size_t c = 0; c < m.n_items(); ++c) {
      vrow.push_back(m.observed(i, c) ? json(m(i, c)) : json(nullptr));
      mrow.push_back(m.observed(i, c));
    }
    values.push_back(std::move(vrow));
    mask.push_back(std::move(mrow));
  }
  doc["values"] = std::move(values);
  doc["mask"] = std::move(mask);
  out << doc.dump(1) << '\n';
}

void write_matrix(const std::filesystem::path& path, const ScoreMatrix& m, std::string_view comment) {
  auto out = open_output(path);
  if (path.extension() == ".json")
    write_matrix_json(out, m);
  else
    write_matrix_csv(out, m, comment);
}

ObservationMask read_mask_csv(std::istream& in, const std::vector<std::string>& agent_ids,
                              const std::vector<std::string>& item_ids, std::string_view source) {
  const auto agents = index_of(agent_ids);
  const auto items = index_of(item_ids);
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw DataError(std::string(source) + ": empty mask file");
  require_header(source, reader.number(), split(line), {"agent_id", "item_id"});
  ObservationMask mask(agent_ids.size(), item_ids.size());
  while (reader.next(line)) {
    const auto f = split(line);
    if (f.size() != 2) throw DataError(location(source, reader.number()) + ": expected 2 fields");
    auto a = agents.find(std::string(f[0]));
    if (a == agents.end()) throw DataError(location(source, reader.number(), 1) + ": unknown agent '" + std::string(f[0]) + "'");
    auto it = items.find(std::string(f[1]));
    if (it == items.end()) throw DataError(location(source, reader.number(), 2) + ": unknown item '" + std::string(f[1]) + "'");
    if (mask(a->second, it->second)) throw DataError(location(source, reader.number()) + ": duplicate pair");
    mask.set(a->second, it->second);
  }
  return mask;
}

ObservationMask read_mask(const std::filesystem::path& path, const std::vector<std::string>& agent_ids,
                          const std::vector<std::string>& item_ids) {
  auto in = open_input(path);
  return read_mask_csv(in, agent_ids, item_ids, path.string());
}

void write_mask_csv(std::ostream& out, const ObservationMask& mask, const std::vector<std::string>& agent_ids,
                    const std::vector<std::string>& item_ids, std::string_view comment) {
  write_comment(out, comment);
  out << "agent_id,item_id\n";
  for (auto [i, j] : mask.cells()) out << agent_ids.at(i) << ',' << item_ids.at(j) << '\n';
}

void write_mask(const std::filesystem::path& path, const ObservationMask& mask,
                const std::vector<std::string>& agent_ids, const std::vector<std::string>& item_ids,
                std::string_view comment) {
  auto out = open_output(path);
  write_mask_csv(out, mask, agent_ids, item_ids, comment);
}

AgentLabels read_labels_csv(std::istream& in, const std::vector<std::string>& agent_ids, std::string_view source) {
  const auto agents = index_of(agent_ids);
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw DataError(std::string(source) + ": empty labels file");
  require_header(source, reader.number(), split(line), {"agent", "tag"});
  std::vector<AgentTag> tags(agent_ids.size(), AgentTag::unlabeled);
  while (reader.next(line)) {
    const auto f = split(line);
    if (f.size() != 2) throw DataError(location(source, reader.number()) + ": expected 2 fields");
    auto a = agents.find(std::string(f[0]));
    if (a == agents.end()) throw DataError(location(source, reader.number(), 1) + ": unknown agent '" + std::string(f[0]) + "'");
    try {
      tags[a->second] = parse_agent_tag(f[1]);
    } catch (const DataError& e) {
      throw DataError(location(source, reader.number(), 2) + ": " + e.what());
    }
  }
  return AgentLabels(std::move(tags));
}

AgentLabels read_labels(const std::filesystem::path& path, const std::vector<std::string>& agent_ids) {
  auto in = open_input(path);
  return read_labels_csv(in, agent_ids, path.string());
}

std::vector<PairwiseJudgeRecord> read_records_csv(std::istream& in, std::string_view source) {
  LineReader reader(in);
  std::string line;
  if (!reader.next(line)) throw DataError(std::string(source) + ": empty records file");
  require_header(source, reader.number(), split(line), {"agent_i", "agent_j", "item", "tpr", "fpr"});
  std::vector<PairwiseJudgeRecord> out;
  while (reader.next(line)) {
    const auto f = split(line);
    if (f.size() != 5) throw DataError(location(source, reader.number()) + ": expected 5 fields");
    for (std::size_t c = 0; c < 3; ++c) check_label(f[c], source, reader.number(), c + 1);
    PairwiseJudgeRecord r{std::string(f[0]), std::string(f[1]), std::string(f[2]),
                          parse_number(f[3], source, reader.number(), 4), parse_number(f[4], source, reader.number(), 5)};
    if (r.agent_i == r.agent_j) throw DataError(location(source, reader.number()) + ": record pairs an agent with itself");
    if (r.tpr < 0.0 || r.tpr > 1.0) throw DataError(location(source, reader.number(), 4) + ": tpr outside [0, 1]");
    if (r.fpr < 0.0 || r.fpr > 1.0) throw DataError(location(source, reader.number(), 5) + ": fpr outside [0, 1]");
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<PairwiseJudgeRecord> read_records(const std::filesystem::path& path) {
  auto in = open_input(path);
  return read_records_csv(in, path.string());
}

void write_records_csv(std::ostream& out, std::span<const PairwiseJudgeRecord> records) {
  out << "agent_i,agent_j,item,tpr,fpr\n";
  for (const auto& r : records)
    out << r.agent_i << ',' << r.agent_j << ',' << r.item << ',' << format_number(r.tpr) << ','
        << format_number(r.fpr) << '\n';
}

RecordUniverse record_universe(std::span<const PairwiseJudgeRecord> records) {
  RecordUniverse u;
  std::unordered_map<std::string, std::size_t> seen_agents, seen_items;
  auto add = [](auto& seen, auto& ids, const std::string& id) {
    if (seen.emplace(id, ids.size()).second) ids.push_back(id);
  };
  for (const auto& r : records) {
    add(seen_agents, u.agent_ids, r.agent_i);
    add(seen_agents, u.agent_ids, r.agent_j);
    add(seen_items, u.item_ids, r.item);
  }
  return u;
}

AggregateResult aggregate_tvdmi(std::span<const PairwiseJudgeRecord> records, const RecordUniverse& universe,
                                const ObservationMask& holdout, const AggregateOptions& opts) {
  const auto k = universe.agent_ids.size();
  const auto j = universe.item_ids.size();
  if (holdout.rows() != k || holdout.cols() != j)
    throw DataError("holdout mask must be " + std::to_string(k) + "x" + std::to_string(j));
  const auto agents = index_of(universe.agent_ids);
  const auto items = index_of(universe.item_ids);

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j));
  std::vector<std::size_t> partners(k * j, 0);
  std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::size_t> seen;
  for (std::size_t n = 0; n < records.size(); ++n) {
    const auto& r = records[n];
    auto ai = agents.find(r.agent_i);
    auto aj = agents.find(r.agent_j);
    auto it = items.find(r.item);
    if (ai == agents.end() || aj == agents.end() || it == items.end())
      throw DataError("record " + std::to_string(n + 1) + ": label outside the agent/item universe");
    if (ai->second == aj->second) throw DataError("record " + std::to_string(n + 1) + ": agent paired with itself");
    if (!(r.tpr >= 0.0 && r.tpr <= 1.0 && r.fpr >= 0.0 && r.fpr <= 1.0))
      throw DataError("record " + std::to_string(n + 1) + ": tpr/fpr outside [0, 1]");
    if (!seen.emplace(std::tuple{ai->second, aj->second, it->second}, n).second)
      throw DataError("record " + std::to_string(n + 1) + ": duplicate (agent_i, agent_j, item) triple");
    const auto i = ai->second;
    const auto c = it->second;
    if (holdout(i, c)) continue;
    if (opts.exclude_partner_holdout && holdout(aj->second, c)) continue;
    sum(i, c) += r.tpr - r.fpr;
    ++partners[i * j + c];
  }

  AggregateResult out;
  ObservationMask mask(k, j);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t c = 0; c < j; ++c) {
      const auto n = partners[i * j + c];
      if (n == 0) {
        if (!holdout(i, c)) ++out.empty_cells;
        sum(i, c) = 0.0;
        continue;
      }
      sum(i, c) = std::clamp(sum(i, c) / static_cast<double>(n), -1.0, 1.0);
      mask.set(i, c);
    }
  if (out.empty_cells)
    out.warnings.push_back(std::to_string(out.empty_cells) + " training cell(s) had no partner records; left unobserved");
  out.matrix = ScoreMatrix(universe.agent_ids, universe.item_ids, std::move(sum), std::move(mask));
  return out;
}

double Distribution::mean() const { return kind == Kind::normal ? a : 0.5 * (a + b); }
double Distribution::sd() const { return kind == Kind::normal ? b : (b - a) / std::sqrt(12.0); }

void SyntheticSpec::validate() const {
  if (k < 2 || j < 2) throw std::invalid_argument("synthetic matrix needs at least 2 agents and 2 items");
  if (!(noise_sd >= 0.0)) throw std::invalid_argument("noise_sd must be >= 0");
  if (!(saturation_push >= 0.0 && saturation_push < 1.0)) throw std::invalid_argument("saturation_push must lie in [0, 1)");
  for (const auto* d : {&theta, &b}) {
    if (d->kind == Distribution::Kind::normal && !(d->b >= 0.0)) throw std::invalid_argument("normal sd must be >= 0");
    if (d->kind == Distribution::Kind::uniform && !(d->b >= d->a)) throw std::invalid_argument("uniform needs low <= high");
  }
}

namespace {

Eigen::VectorXd draw(const Distribution& d, std::size_t n, bool standardize, Rng& rng) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(n));
  if (d.kind == Distribution::Kind::normal) {
    std::normal_distribution<double> dist(0.0, 1.0);
    for (auto& v : out) v = d.a + d.b * dist(rng);
  } else {
    std::uniform_real_distribution<double> dist(d.a, d.b);
    for (auto& v : out) v = dist(rng);
  }
  if (standardize && n > 1) {
    const double m = out.mean();
    const double s = std::sqrt((out.array() - m).square().sum() / static_cast<double>(n - 1));
    if (s > 0.0) out = ((out.array() - m) / s * d.sd() + d.mean()).matrix();
  }
  return out;
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = make_stream(spec.seed, 0x73796e74ULL);
  Eigen::VectorXd theta = draw(spec.theta, spec.k, spec.standardize, rng);
  Eigen::VectorXd b = draw(spec.b, spec.j, spec.standardize, rng);
  std::normal_distribution<double> noise(0.0, 1.0);

  const auto k = static_cast<Eigen::Index>(spec.k);
  const auto j = static_cast<Eigen::Index>(spec.j);
  Eigen::MatrixXd s(k, j);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index c = 0; c < j; ++c) {
      const double eps = spec.noise_sd > 0.0 ? spec.noise_sd * noise(rng) : 0.0;
      s(i, c) = std::clamp(theta(i) - b(c) + eps, -1.0, 1.0);
    }

  const auto target = static_cast<std::size_t>(std::llround(spec.saturation_push * static_cast<double>(s.size())));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(s.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index p, Eigen::Index q) { return std::abs(s.data()[p]) > std::abs(s.data()[q]); });
  for (std::size_t n = 0; n < target && n < order.size(); ++n) {
    double& v = s.data()[order[n]];
    v = v >= 0.0 ? 1.0 : -1.0;
  }

  SyntheticData out;
  const double shift = b.mean();
  out.truth.theta = theta.array() - shift;
  out.truth.b = b.array() - shift;
  out.truth.gauge_residual = std::abs(out.truth.b.sum());
  out.matrix = ScoreMatrix(std::move(s), ObservationMask::full(spec.k, spec.j));
  return out;
}

}  // namespace tvirt
