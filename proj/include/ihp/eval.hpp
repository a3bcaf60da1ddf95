#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ihp/clickmap.hpp"
#include "ihp/geometry.hpp"
#include "ihp/network.hpp"
#include "ihp/synthdata.hpp"
#include "json.hpp"

namespace ihp {

struct ProtocolConfig {
  double parsing_standard = 0.90;
  int max_rounds = 15;
  int candidates = 5;
  bool rgb_only_init = false;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MiouResult {
  std::vector<std::optional<double>> per_class;  // nullopt where the union is empty
  double mean = 0.0;
};

MiouResult miou(const LabelMask& pred, const LabelMask& gt);

/// Pixels within Euclidean distance `band` of a gt pixel that has an
/// 8-neighbour of another class.
std::vector<std::uint8_t> boundary_band(const LabelMask& gt, double band = 5.0);

/// Mean over classes seen in the band of the in-band F1 of (pred == c) vs
/// (gt == c). 1.0 when the band is empty.
double boundary_f1(const LabelMask& pred, const LabelMask& gt, double band = 5.0);
double boundary_f1(const LabelMask& pred, const LabelMask& gt, std::span<const std::uint8_t> band_mask);

/// One central click per part component (largest margin among `candidates`).
ClickSet init_clicks(const LabelMask& gt, Rng& rng, int candidates = 5);

/// Error regions are 8-connected components of {pred != gt} split by gt class.
std::vector<PartComponent> error_regions(const LabelMask& pred, const LabelMask& gt);

/// Click in the largest error region (ties to the lexicographically smallest
/// pixel), labelled with its gt class; nullopt when pred == gt.
std::optional<Click> correction_click(const LabelMask& pred, const LabelMask& gt, Rng& rng, int round,
                                      int candidates = 5);

struct RoundRecord {
  ClickSet added;
  LabelMask prediction;
  double miou = 0.0;
  double boundary_f1 = 0.0;
};

struct SessionTrace {
  std::string id;
  std::size_t init_clicks = 0;
  std::vector<RoundRecord> rounds;  // rounds[0] = initial prediction

  int rounds_executed() const { return static_cast<int>(rounds.size()) - 1; }
  ClickSet clicks_through(int round) const;
};

/// Single-image protocol with early exit once the prediction is perfect.
SessionTrace run_session(const Network& net, const Sample& sample, const ProtocolConfig& cfg);

struct EvalReport {
  std::vector<double> mean_miou;         // per round
  std::vector<double> mean_boundary_f1;  // per round
  std::vector<std::size_t> clicks;       // cumulative total per round
  std::vector<double> avg_per_round;
  std::vector<std::optional<double>> per_class_iou;  // at the reporting round
  std::size_t class_occurrences = 0;
  std::size_t images = 0;
  double parsing_standard = 0.0;
  bool reached_standard = false;
  std::optional<int> rounds_to_standard;
  int add = 0;  // reporting round: first round at the standard, else max_rounds
  double avg = 0.0;
  double boundary_f1 = 0.0;  // at the reporting round
};

nlohmann::json to_json(const EvalReport& report);

/// Synchronised rounds over the whole set: in each round every image that
/// still has errors gets one correction click, then all are re-predicted.
/// Runs all max_rounds so the per-round curve is complete.
EvalReport evaluate(const Network& net, const std::vector<Sample>& samples, const ProtocolConfig& cfg,
                    std::vector<SessionTrace>* traces = nullptr);

/// Recomputes the report from stored traces.
EvalReport summarize(const std::vector<SessionTrace>& traces, const std::vector<Sample>& samples,
                     const ProtocolConfig& cfg, int num_classes);

/// Writes {dir}/{id}_r{round}.png label masks for every stored round.
void dump_masks(const std::vector<SessionTrace>& traces, const std::filesystem::path& dir);

}  // namespace ihp
