#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "ihp/clickmap.hpp"
#include "ihp/geometry.hpp"

namespace ihp {

enum class Strategy { central_only, random_sampling, near_edge, random_clicks_only };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct SimulationConfig {
  Strategy strategy = Strategy::random_sampling;
  int candidates = 5;       // N_c
  double d_margin = 10.0;   // pixels; 3 for small-part data
  int ec_num_max = 15;      // extra clicks drawn from 1..ec_num_max
  int bg_extra_min = 3;     // N_b1
  int bg_extra_max = 6;     // N_b2
  std::uint64_t seed = 0;

  void validate() const;
};

/// Outcome of picking, among random candidates, the pixel farthest from a boundary.
struct MarginChoice {
  Pixel chosen;
  std::vector<Pixel> candidates;
  std::vector<double> margins;  // distance of each candidate to the boundary set
};

/// Draws `num_candidates` pixels uniformly with replacement and keeps the one
/// with the largest distance to `boundary` (first drawn wins ties).
MarginChoice select_by_margin(std::span<const Pixel> pixels, std::span<const Pixel> boundary, int num_candidates,
                              Rng& rng);

Click central_click(const PartComponent& component, int num_candidates, Rng& rng);

/// A class-0 click at least d_margin away from every part boundary, or the
/// farthest background pixel when none qualifies. Empty when the mask has no background.
std::optional<Click> background_click(const LabelMask& mask, double d_margin, Rng& rng);

/// Pixels strictly closer than d_margin to some part boundary pixel.
std::vector<std::uint8_t> near_edge_set(const LabelMask& mask, double d_margin);

ClickSet simulate(const LabelMask& mask, const SimulationConfig& cfg, Rng& rng);

}  // namespace ihp
