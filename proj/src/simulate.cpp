#include "ihp/simulate.hpp"

#include <cmath>

namespace ihp {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::central_only:
      return "central_only";
    case Strategy::random_sampling:
      return "random_sampling";
    case Strategy::near_edge:
      return "near_edge";
    case Strategy::random_clicks_only:
      return "random_clicks_only";
  }
  return "random_sampling";
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "central_only") return Strategy::central_only;
  if (s == "random_sampling") return Strategy::random_sampling;
  if (s == "near_edge") return Strategy::near_edge;
  if (s == "random_clicks_only") return Strategy::random_clicks_only;
  fail(ErrorKind::invalid_argument, "unknown strategy '" + std::string(s) + "'");
}

void SimulationConfig::validate() const {
  if (candidates < 1) fail(ErrorKind::invalid_argument, "candidates must be >= 1");
  if (bg_extra_min < 0 || bg_extra_min > bg_extra_max)
    fail(ErrorKind::invalid_argument, "background extra bounds must satisfy 0 <= min <= max");
  if (ec_num_max < 1) fail(ErrorKind::invalid_argument, "ec_num_max must be >= 1");
  if (!(d_margin >= 1.0)) fail(ErrorKind::invalid_argument, "d_margin must be >= 1");
}

MarginChoice select_by_margin(std::span<const Pixel> pixels, std::span<const Pixel> boundary, int num_candidates,
                              Rng& rng) {
  MarginChoice out;
  out.candidates.reserve(num_candidates);
  out.margins.reserve(num_candidates);
  double best = -1.0;
  for (int k = 0; k < num_candidates; ++k) {
    const Pixel p = pixels[rng.index(pixels.size())];
    const double m = min_distance(p, boundary);
    out.candidates.push_back(p);
    out.margins.push_back(m);
    if (m > best) {
      best = m;
      out.chosen = p;
    }
  }
  return out;
}

Click central_click(const PartComponent& component, int num_candidates, Rng& rng) {
  const MarginChoice choice = select_by_margin(component.pixels, component.boundary, num_candidates, rng);
  return Click{choice.chosen.row, choice.chosen.col, component.class_id, Phase::init, 0};
}

namespace {

// Distance from every pixel to the union of part boundaries; +inf with no parts.
std::vector<double> boundary_distance(const LabelMask& mask) {
  std::vector<double> d = squared_distance_transform(mask.height(), mask.width(), part_boundary_union(mask));
  for (double& v : d) v = std::sqrt(v);
  return d;
}

Pixel pixel_of(const LabelMask& mask, std::size_t i) {
  return Pixel{static_cast<int>(i / mask.width()), static_cast<int>(i % mask.width())};
}

}  // namespace

std::optional<Click> background_click(const LabelMask& mask, double d_margin, Rng& rng) {
  const std::vector<double> dist = boundary_distance(mask);
  std::vector<std::size_t> eligible;
  std::size_t farthest = mask.size();
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) continue;
    if (dist[i] >= d_margin) eligible.push_back(i);
    if (farthest == mask.size() || dist[i] > dist[farthest]) farthest = i;
  }
  if (farthest == mask.size()) return std::nullopt;
  const std::size_t pick = eligible.empty() ? farthest : eligible[rng.index(eligible.size())];
  const Pixel p = pixel_of(mask, pick);
  return Click{p.row, p.col, 0, Phase::init, 0};
}

std::vector<std::uint8_t> near_edge_set(const LabelMask& mask, double d_margin) {
  const std::vector<double> sq = squared_distance_transform(mask.height(), mask.width(), part_boundary_union(mask));
  std::vector<std::uint8_t> out(mask.size());
  const double limit = d_margin * d_margin;
  for (std::size_t i = 0; i < mask.size(); ++i) out[i] = sq[i] < limit;
  return out;
}

namespace {

// Samples the extra clicks: N_r uniform draws over the domain, then the
// background share is forced into [bg_min, bg_max] by resampling the excess
// as foreground, or converting foreground draws (from the back) to background.
std::vector<std::size_t> sample_extras(const LabelMask& mask, std::span<const std::uint8_t> domain,
                                       const SimulationConfig& cfg, Rng& rng) {
  std::vector<std::size_t> all, bg, fg;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!domain[i]) continue;
    all.push_back(i);
    (mask[i] == 0 ? bg : fg).push_back(i);
  }
  if (all.empty()) return {};
  const int n_r = rng.uniform_int(1, cfg.ec_num_max);
  std::vector<std::size_t> draws(n_r);
  int n_bg = 0;
  for (auto& d : draws) {
    d = all[rng.index(all.size())];
    n_bg += mask[d] == 0;
  }
  if (n_bg > cfg.bg_extra_max && !fg.empty()) {
    for (auto it = draws.rbegin(); it != draws.rend() && n_bg > cfg.bg_extra_max; ++it) {
      if (mask[*it] != 0) continue;
      *it = fg[rng.index(fg.size())];
      --n_bg;
    }
  }
  if (n_bg < cfg.bg_extra_min && !bg.empty()) {
    for (auto it = draws.rbegin(); it != draws.rend() && n_bg < cfg.bg_extra_min; ++it) {
      if (mask[*it] == 0) continue;
      *it = bg[rng.index(bg.size())];
      ++n_bg;
    }
    while (n_bg < cfg.bg_extra_min) {
      draws.push_back(bg[rng.index(bg.size())]);
      ++n_bg;
    }
  }
  return draws;
}

}  // namespace

ClickSet simulate(const LabelMask& mask, const SimulationConfig& cfg, Rng& rng) {
  cfg.validate();
  ClickSet out;
  for (int k = 1; k < mask.num_classes(); ++k) {
    for (const PartComponent& comp : connected_components(mask, k)) {
      if (cfg.strategy == Strategy::random_clicks_only) {
        const Pixel p = comp.pixels[rng.index(comp.pixels.size())];
        out.add(Click{p.row, p.col, k, Phase::init, 0});
      } else {
        out.add(central_click(comp, cfg.candidates, rng));
      }
    }
  }
  if (auto bg = background_click(mask, cfg.d_margin, rng)) out.add(*bg);

  if (cfg.strategy != Strategy::random_sampling && cfg.strategy != Strategy::near_edge) return out;

  std::vector<std::uint8_t> domain;
  if (cfg.strategy == Strategy::near_edge) {
    domain = near_edge_set(mask, cfg.d_margin);
    bool any = false;
    for (auto v : domain) any = any || v;
    // No part boundary at all: fall back to the whole image.
    if (!any) domain.assign(mask.size(), 1);
  } else {
    domain.assign(mask.size(), 1);
  }
  for (std::size_t i : sample_extras(mask, domain, cfg, rng)) {
    const Pixel p = pixel_of(mask, i);
    out.add(Click{p.row, p.col, mask[i], Phase::extra, 0});
  }
  return out;
}

}  // namespace ihp
