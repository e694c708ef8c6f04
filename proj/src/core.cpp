#include "tvirt/core.hpp"

#include "tvirt/errors.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace tvirt {

ObservationMask::ObservationMask(std::size_t rows, std::size_t cols, bool value)
    : rows_(rows), cols_(cols), bits_(rows * cols, value ? 1 : 0), count_(value ? rows * cols : 0) {}

void ObservationMask::set(std::size_t i, std::size_t j, bool value) {
  auto& bit = bits_.at(i * cols_ + j);
  if ((bit != 0) == value) return;
  bit = value ? 1 : 0;
  if (value)
    ++count_;
  else
    --count_;
}

std::size_t ObservationMask::row_count(std::size_t i) const {
  const auto* row = bits_.data() + i * cols_;
  return static_cast<std::size_t>(std::count(row, row + cols_, std::uint8_t{1}));
}

std::size_t ObservationMask::col_count(std::size_t j) const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < rows_; ++i) n += bits_[i * cols_ + j];
  return n;
}

std::vector<std::pair<std::size_t, std::size_t>> ObservationMask::cells() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(count_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j)
      if (bits_[i * cols_ + j]) out.emplace_back(i, j);
  return out;
}

void ObservationMask::require_same_shape(const ObservationMask& other) const {
  if (rows_ != other.rows_ || cols_ != other.cols_) {
    std::ostringstream os;
    os << "mask shape mismatch: " << rows_ << "x" << cols_ << " vs " << other.rows_ << "x" << other.cols_;
    throw DataError(os.str());
  }
}

ObservationMask ObservationMask::operator&(const ObservationMask& other) const {
  require_same_shape(other);
  ObservationMask out(rows_, cols_);
  for (std::size_t k = 0; k < bits_.size(); ++k) out.bits_[k] = bits_[k] & other.bits_[k];
  out.count_ = static_cast<std::size_t>(std::count(out.bits_.begin(), out.bits_.end(), std::uint8_t{1}));
  return out;
}

ObservationMask ObservationMask::operator|(const ObservationMask& other) const {
  require_same_shape(other);
  ObservationMask out(rows_, cols_);
  for (std::size_t k = 0; k < bits_.size(); ++k) out.bits_[k] = bits_[k] | other.bits_[k];
  out.count_ = static_cast<std::size_t>(std::count(out.bits_.begin(), out.bits_.end(), std::uint8_t{1}));
  return out;
}

ObservationMask ObservationMask::complement() const {
  ObservationMask out(rows_, cols_);
  for (std::size_t k = 0; k < bits_.size(); ++k) out.bits_[k] = bits_[k] ? 0 : 1;
  out.count_ = bits_.size() - count_;
  return out;
}

bool ObservationMask::intersects(const ObservationMask& other) const {
  require_same_shape(other);
  for (std::size_t k = 0; k < bits_.size(); ++k)
    if (bits_[k] && other.bits_[k]) return true;
  return false;
}

bool ObservationMask::contains(const ObservationMask& other) const {
  require_same_shape(other);
  for (std::size_t k = 0; k < bits_.size(); ++k)
    if (other.bits_[k] && !bits_[k]) return false;
  return true;
}

std::vector<std::string> default_ids(std::string_view prefix, std::size_t n) {
  std::vector<std::string> ids;
  ids.reserve(n);
  for (std::size_t i = 0; i < n; ++i) ids.push_back(std::string(prefix) + "_" + std::to_string(i));
  return ids;
}

namespace {

void require_unique(const std::vector<std::string>& ids, const char* what) {
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (id.empty()) throw DataError(std::string("empty ") + what + " label");
    if (!seen.insert(id).second) throw DataError(std::string("duplicate ") + what + " label '" + id + "'");
  }
}

}  // namespace

ScoreMatrix::ScoreMatrix(std::vector<std::string> agent_ids, std::vector<std::string> item_ids,
                         Eigen::MatrixXd values, ObservationMask mask)
    : agent_ids_(std::move(agent_ids)), item_ids_(std::move(item_ids)), data_{std::move(values), std::move(mask)} {
  const auto k = agent_ids_.size();
  const auto j = item_ids_.size();
  if (static_cast<std::size_t>(data_.values.rows()) != k || static_cast<std::size_t>(data_.values.cols()) != j ||
      data_.mask.rows() != k || data_.mask.cols() != j) {
    std::ostringstream os;
    os << "score matrix dimension mismatch: " << k << " agents x " << j << " items, values "
       << data_.values.rows() << "x" << data_.values.cols() << ", mask " << data_.mask.rows() << "x"
       << data_.mask.cols();
    throw DataError(os.str());
  }
  require_unique(agent_ids_, "agent");
  require_unique(item_ids_, "item");
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t c = 0; c < j; ++c) {
      if (!data_.mask(i, c)) {
        data_.values(i, c) = 0.0;
        continue;
      }
      const double v = data_.values(i, c);
      if (!(v >= -1.0 && v <= 1.0)) {
        std::ostringstream os;
        os << "score " << v << " at (" << agent_ids_[i] << ", " << item_ids_[c] << ") outside [-1, 1]";
        throw DataError(os.str());
      }
    }
  }
}

ScoreMatrix::ScoreMatrix(Eigen::MatrixXd values, ObservationMask mask) {
  const auto k = mask.rows();
  const auto j = mask.cols();
  *this = ScoreMatrix(default_ids("agent", k), default_ids("item", j), std::move(values), std::move(mask));
}

ScoreMatrix ScoreMatrix::restricted(const ObservationMask& restriction) const {
  return ScoreMatrix(agent_ids_, item_ids_, data_.values, data_.mask & restriction);
}

Link::Link(LinkKind k, double clip) : kind(k), clip_bound(clip) {
  if (!(clip > 0.0 && clip < 1.0)) throw std::invalid_argument("link clip bound must lie in (0, 1)");
}

std::string to_string(LinkKind kind) {
  switch (kind) {
    case LinkKind::identity: return "identity";
    case LinkKind::probit: return "probit";
    case LinkKind::logit: return "logit";
  }
  return "?";
}

LinkKind parse_link_kind(std::string_view name) {
  if (name == "identity") return LinkKind::identity;
  if (name == "probit") return LinkKind::probit;
  if (name == "logit") return LinkKind::logit;
  throw std::invalid_argument("unknown link '" + std::string(name) + "'");
}

// With p = (s + 1) / 2: probit(p) = sqrt(2) erf^-1(s) and logit(p) = 2 atanh(s).
// Both forms avoid the cancellation in 1 - p near the clip bound.
double link_forward(double s, const Link& link) {
  const double c = std::clamp(s, -link.clip_bound, link.clip_bound);
  switch (link.kind) {
    case LinkKind::identity: return c;
    case LinkKind::probit: return std::sqrt(2.0) * boost::math::erf_inv(c);
    case LinkKind::logit: return 2.0 * std::atanh(c);
  }
  return c;
}

double link_inverse(double t, const Link& link) {
  double s = t;
  switch (link.kind) {
    case LinkKind::identity: break;
    case LinkKind::probit: s = std::erf(t / std::sqrt(2.0)); break;
    case LinkKind::logit: s = std::tanh(t / 2.0); break;
  }
  return std::clamp(s, -link.clip_bound, link.clip_bound);
}

Eigen::MatrixXd predict(const AdditiveParams& params, bool clip) {
  const auto k = params.theta.size();
  const auto j = params.b.size();
  Eigen::MatrixXd out(k, j);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index c = 0; c < j; ++c) {
      const double v = params.theta(i) - params.b(c);
      out(i, c) = clip ? std::clamp(v, -1.0, 1.0) : v;
    }
  return out;
}

namespace {

template <class F>
MaskedMatrix map_observed(const MaskedMatrix& m, F f) {
  MaskedMatrix out{Eigen::MatrixXd::Zero(m.values.rows(), m.values.cols()), m.mask};
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j)
      if (m.mask(i, j)) out.values(i, j) = f(m.values(i, j));
  return out;
}

}  // namespace

MaskedMatrix apply_link(const MaskedMatrix& m, const Link& link) {
  return map_observed(m, [&](double s) { return link_forward(s, link); });
}

MaskedMatrix inverse_link(const MaskedMatrix& t, const Link& link) {
  return map_observed(t, [&](double v) { return link_inverse(v, link); });
}

std::string to_string(AgentTag tag) {
  switch (tag) {
    case AgentTag::faithful: return "faithful";
    case AgentTag::problematic: return "problematic";
    case AgentTag::unlabeled: return "unlabeled";
  }
  return "?";
}

AgentTag parse_agent_tag(std::string_view name) {
  if (name == "faithful") return AgentTag::faithful;
  if (name == "problematic") return AgentTag::problematic;
  if (name == "unlabeled" || name.empty()) return AgentTag::unlabeled;
  throw DataError("unknown agent tag '" + std::string(name) + "'");
}

std::size_t AgentLabels::count(AgentTag tag) const {
  return static_cast<std::size_t>(std::count(tags_.begin(), tags_.end(), tag));
}

void AgentLabels::require_covers(std::size_t n) const {
  if (tags_.size() != n)
    throw DataError("agent labels cover " + std::to_string(tags_.size()) + " agents, matrix has " +
                    std::to_string(n));
}

}  // namespace tvirt
