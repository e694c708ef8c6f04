#pragma once

#include "tvirt/core.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace tvirt {

// File grammars
//
//   matrix CSV   header "agent,<item_id>,...", then "<agent_id>,<score|empty>,..."
//                (empty cell = unobserved)
//   matrix JSON  {"agent_ids": [...], "item_ids": [...],
//                 "values": [[number|null, ...], ...], "mask": [[bool, ...], ...]}
//   mask CSV     header "agent_id,item_id", one observed pair per line
//   labels CSV   header "agent,tag", tag in {faithful, problematic, unlabeled}
//   records CSV  header "agent_i,agent_j,item,tpr,fpr"
//
// Lines starting with '#' are comments. Writers emit numbers in shortest
// round-trip form. Every parse error names "<file>:<line>[:<column>]".

struct PairwiseJudgeRecord {
  std::string agent_i;
  std::string agent_j;
  std::string item;
  double tpr = 0.0;
  double fpr = 0.0;
};

ScoreMatrix read_matrix(const std::filesystem::path& path);
ScoreMatrix read_matrix_csv(std::istream& in, std::string_view source = "<stream>");
ScoreMatrix read_matrix_json(std::istream& in, std::string_view source = "<stream>");
/// Chooses JSON for a ".json" extension, CSV otherwise.
void write_matrix(const std::filesystem::path& path, const ScoreMatrix& m, std::string_view comment = {});
void write_matrix_csv(std::ostream& out, const ScoreMatrix& m, std::string_view comment = {});
void write_matrix_json(std::ostream& out, const ScoreMatrix& m);

ObservationMask read_mask(const std::filesystem::path& path, const std::vector<std::string>& agent_ids,
                          const std::vector<std::string>& item_ids);
ObservationMask read_mask_csv(std::istream& in, const std::vector<std::string>& agent_ids,
                              const std::vector<std::string>& item_ids, std::string_view source = "<stream>");
void write_mask(const std::filesystem::path& path, const ObservationMask& mask,
                const std::vector<std::string>& agent_ids, const std::vector<std::string>& item_ids,
                std::string_view comment = {});
void write_mask_csv(std::ostream& out, const ObservationMask& mask, const std::vector<std::string>& agent_ids,
                    const std::vector<std::string>& item_ids, std::string_view comment = {});

/// Agents missing from the file are unlabeled.
AgentLabels read_labels(const std::filesystem::path& path, const std::vector<std::string>& agent_ids);
AgentLabels read_labels_csv(std::istream& in, const std::vector<std::string>& agent_ids,
                            std::string_view source = "<stream>");

std::vector<PairwiseJudgeRecord> read_records(const std::filesystem::path& path);
std::vector<PairwiseJudgeRecord> read_records_csv(std::istream& in, std::string_view source = "<stream>");
void write_records_csv(std::ostream& out, std::span<const PairwiseJudgeRecord> records);

/// Agents and items in order of first appearance (agent_i before agent_j).
struct RecordUniverse {
  std::vector<std::string> agent_ids;
  std::vector<std::string> item_ids;
};
RecordUniverse record_universe(std::span<const PairwiseJudgeRecord> records);

struct AggregateOptions {
  /// Also drop (i, j, k) terms whose partner cell (j, k) is held out.
  bool exclude_partner_holdout = false;
};

struct AggregateResult {
  ScoreMatrix matrix;
  std::size_t empty_cells = 0;  // in-training cells without any partner term
  std::vector<std::string> warnings;
};

/// s_ik = mean over included partners j of (tpr - fpr) from records with
/// agent_i = i, item = k. Held-out (i, k) cells are never computed. The
/// denominator is the number of included partners.
AggregateResult aggregate_tvdmi(std::span<const PairwiseJudgeRecord> records, const RecordUniverse& universe,
                                const ObservationMask& holdout, const AggregateOptions& opts = {});

struct Distribution {
  enum class Kind { normal, uniform };
  Kind kind = Kind::normal;
  double a = 0.0;  // normal: mean; uniform: low
  double b = 1.0;  // normal: sd; uniform: high

  double mean() const;
  double sd() const;
};

struct SyntheticSpec {
  std::size_t k = 30;
  std::size_t j = 200;
  Distribution theta{Distribution::Kind::normal, 0.18, 0.25};
  Distribution b{Distribution::Kind::normal, 0.0, 0.15};
  double noise_sd = 0.12;
  /// Target fraction of cells at exactly +-1; the most extreme cells are pushed.
  double saturation_push = 0.025;
  /// Rescale the drawn theta and b to the exact mean/sd of their distributions.
  bool standardize = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticData {
  ScoreMatrix matrix;
  AdditiveParams truth;  // gauge-aligned: sum_j b_j = 0
};

SyntheticData generate_synthetic(const SyntheticSpec& spec);

}  // namespace tvirt
