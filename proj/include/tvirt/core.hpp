#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tvirt {

/// Boolean K x J observation pattern. Keeps its true-cell count in sync with
/// the pattern on every mutation.
class ObservationMask {
 public:
  ObservationMask() = default;
  ObservationMask(std::size_t rows, std::size_t cols, bool value = false);

  static ObservationMask full(std::size_t rows, std::size_t cols) { return {rows, cols, true}; }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return rows_ * cols_; }
  std::size_t observed_count() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }

  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool value = true);

  std::size_t row_count(std::size_t i) const;
  std::size_t col_count(std::size_t j) const;

  /// Observed cells in row-major order.
  std::vector<std::pair<std::size_t, std::size_t>> cells() const;

  ObservationMask operator&(const ObservationMask& other) const;
  ObservationMask operator|(const ObservationMask& other) const;
  ObservationMask complement() const;
  bool intersects(const ObservationMask& other) const;
  bool contains(const ObservationMask& other) const;

  friend bool operator==(const ObservationMask&, const ObservationMask&) = default;

 private:
  void require_same_shape(const ObservationMask& other) const;

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
  std::size_t count_ = 0;
};

/// Real-valued matrix plus observation mask. Values are unbounded (link space
/// or raw); cells outside the mask are ignored by every consumer.
struct MaskedMatrix {
  Eigen::MatrixXd values;
  ObservationMask mask;

  std::size_t rows() const noexcept { return mask.rows(); }
  std::size_t cols() const noexcept { return mask.cols(); }
  bool observed(std::size_t i, std::size_t j) const { return mask(i, j); }
};

/// Validated bounded score matrix: observed entries in [-1, 1], unique labels.
class ScoreMatrix {
 public:
  ScoreMatrix() = default;
  ScoreMatrix(std::vector<std::string> agent_ids, std::vector<std::string> item_ids,
              Eigen::MatrixXd values, ObservationMask mask);
  /// Generated labels "agent_<i>" and "item_<j>".
  ScoreMatrix(Eigen::MatrixXd values, ObservationMask mask);

  std::size_t n_agents() const noexcept { return agent_ids_.size(); }
  std::size_t n_items() const noexcept { return item_ids_.size(); }
  const std::vector<std::string>& agent_ids() const noexcept { return agent_ids_; }
  const std::vector<std::string>& item_ids() const noexcept { return item_ids_; }
  const Eigen::MatrixXd& values() const noexcept { return data_.values; }
  const ObservationMask& mask() const noexcept { return data_.mask; }
  const MaskedMatrix& data() const noexcept { return data_; }

  double operator()(std::size_t i, std::size_t j) const { return data_.values(i, j); }
  bool observed(std::size_t i, std::size_t j) const { return data_.mask(i, j); }

  /// Same labels and values, observation restricted to mask & restriction.
  ScoreMatrix restricted(const ObservationMask& restriction) const;

 private:
  std::vector<std::string> agent_ids_;
  std::vector<std::string> item_ids_;
  MaskedMatrix data_;
};

std::vector<std::string> default_ids(std::string_view prefix, std::size_t n);

struct AdditiveParams {
  Eigen::VectorXd theta;  // agent abilities
  Eigen::VectorXd b;      // item difficulties
  double lambda = 0.0;
  double gauge_residual = 0.0;  // |sum_j b_j|
};

enum class LinkKind { identity, probit, logit };

struct Link {
  LinkKind kind = LinkKind::identity;
  double clip_bound = 0.99;

  Link() = default;
  Link(LinkKind k, double clip = 0.99);
};

std::string to_string(LinkKind kind);
LinkKind parse_link_kind(std::string_view name);

// Scalar link maps. The score s in [-1, 1] is clamped to +-clip, then taken
// through p = (s + 1) / 2 for probit/logit; identity returns the clamped s.
double link_forward(double s, const Link& link);
double link_inverse(double t, const Link& link);

/// Fully observed prediction theta_i - b_j, clamped to [-1, 1] when clip is
/// set. Unclipped predictions may leave the score box, so the result is a
/// plain matrix rather than a ScoreMatrix.
Eigen::MatrixXd predict(const AdditiveParams& params, bool clip);

MaskedMatrix apply_link(const MaskedMatrix& m, const Link& link);
inline MaskedMatrix apply_link(const ScoreMatrix& m, const Link& link) { return apply_link(m.data(), link); }
/// Output entries lie in [-clip, clip]; unobserved cells stay unobserved.
MaskedMatrix inverse_link(const MaskedMatrix& t, const Link& link);

enum class AgentTag { faithful, problematic, unlabeled };

std::string to_string(AgentTag tag);
AgentTag parse_agent_tag(std::string_view name);

class AgentLabels {
 public:
  AgentLabels() = default;
  explicit AgentLabels(std::vector<AgentTag> tags) : tags_(std::move(tags)) {}

  std::size_t size() const noexcept { return tags_.size(); }
  AgentTag operator[](std::size_t i) const { return tags_[i]; }
  const std::vector<AgentTag>& tags() const noexcept { return tags_; }
  std::size_t count(AgentTag tag) const;
  /// Throws DataError when the tags do not cover exactly n agents.
  void require_covers(std::size_t n) const;

 private:
  std::vector<AgentTag> tags_;
};

}  // namespace tvirt
