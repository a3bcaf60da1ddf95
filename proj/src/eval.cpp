#include "ihp/eval.hpp"

#include <algorithm>
#include <cmath>

#include "ihp/model.hpp"
#include "ihp/simulate.hpp"

namespace ihp {

void ProtocolConfig::validate() const {
  if (!(parsing_standard > 0.0 && parsing_standard <= 1.0))
    fail(ErrorKind::invalid_argument, "parsing standard must be in (0, 1]");
  if (max_rounds < 0) fail(ErrorKind::invalid_argument, "max_rounds must be non-negative");
  if (candidates < 1) fail(ErrorKind::invalid_argument, "candidates must be >= 1");
}

namespace {

void require_same_shape(const LabelMask& a, const LabelMask& b) {
  if (a.height() != b.height() || a.width() != b.width())
    fail(ErrorKind::invalid_argument, "prediction and ground truth differ in shape");
}

int class_count(const LabelMask& pred, const LabelMask& gt) { return std::max(pred.num_classes(), gt.num_classes()); }

}  // namespace

MiouResult miou(const LabelMask& pred, const LabelMask& gt) {
  require_same_shape(pred, gt);
  const int k = class_count(pred, gt);
  std::vector<std::size_t> inter(k, 0), uni(k, 0);
  for (std::size_t i = 0; i < gt.labels().size(); ++i) {
    const int p = pred.labels()[i];
    const int g = gt.labels()[i];
    if (p == g) {
      ++inter[g];
      ++uni[g];
    } else {
      ++uni[g];
      ++uni[p];
    }
  }
  MiouResult r;
  r.per_class.resize(k);
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    if (uni[c] == 0) continue;
    r.per_class[c] = static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    sum += *r.per_class[c];
    ++present;
  }
  r.mean = present ? sum / present : 1.0;
  return r;
}

std::vector<std::uint8_t> boundary_band(const LabelMask& gt, double band) {
  const int h = gt.height();
  const int w = gt.width();
  std::vector<std::uint8_t> edge(static_cast<std::size_t>(h) * w, 0);
  bool any = false;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      const int label = gt.at(r, c);
      for (int dr = -1; dr <= 1 && !edge[gt.index(r, c)]; ++dr)
        for (int dc = -1; dc <= 1; ++dc) {
          if ((dr || dc) && gt.in_bounds(r + dr, c + dc) && gt.at(r + dr, c + dc) != label) {
            edge[gt.index(r, c)] = 1;
            any = true;
            break;
          }
        }
    }
  std::vector<std::uint8_t> out(edge.size(), 0);
  if (!any) return out;
  const std::vector<double> d2 = squared_distance_transform(h, w, edge);
  const double limit = band * band;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = d2[i] <= limit ? 1 : 0;
  return out;
}

double boundary_f1(const LabelMask& pred, const LabelMask& gt, std::span<const std::uint8_t> band_mask) {
  require_same_shape(pred, gt);
  if (band_mask.size() != gt.labels().size()) fail(ErrorKind::invalid_argument, "band mask does not match image");
  const int k = class_count(pred, gt);
  std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0);
  bool any = false;
  for (std::size_t i = 0; i < band_mask.size(); ++i) {
    if (!band_mask[i]) continue;
    any = true;
    const int p = pred.labels()[i];
    const int g = gt.labels()[i];
    if (p == g) {
      ++tp[g];
    } else {
      ++fp[p];
      ++fn[g];
    }
  }
  if (!any) return 1.0;
  double sum = 0.0;
  int present = 0;
  for (int c = 0; c < k; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom == 0) continue;
    sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    ++present;
  }
  return sum / present;
}

double boundary_f1(const LabelMask& pred, const LabelMask& gt, double band) {
  return boundary_f1(pred, gt, boundary_band(gt, band));
}

ClickSet init_clicks(const LabelMask& gt, Rng& rng, int candidates) {
  ClickSet clicks;
  for (int c = 1; c < gt.num_classes(); ++c)
    for (const PartComponent& comp : connected_components(gt, c))
      clicks.add(central_click(comp, candidates, rng));
  return clicks;
}

std::vector<PartComponent> error_regions(const LabelMask& pred, const LabelMask& gt) {
  require_same_shape(pred, gt);
  std::vector<PartComponent> regions;
  std::vector<std::uint8_t> inside(gt.labels().size());
  for (int c = 0; c < gt.num_classes(); ++c) {
    bool any = false;
    for (std::size_t i = 0; i < inside.size(); ++i) {
      inside[i] = pred.labels()[i] != gt.labels()[i] && gt.labels()[i] == c;
      any = any || inside[i];
    }
    if (!any) continue;
    for (PartComponent& comp : connected_components(gt.height(), gt.width(), inside, c))
      regions.push_back(std::move(comp));
  }
  return regions;
}

std::optional<Click> correction_click(const LabelMask& pred, const LabelMask& gt, Rng& rng, int round,
                                      int candidates) {
  const std::vector<PartComponent> regions = error_regions(pred, gt);
  if (regions.empty()) return std::nullopt;
  const PartComponent* best = &regions.front();
  for (const PartComponent& r : regions) {
    if (r.area() > best->area() || (r.area() == best->area() && r.pixels.front() < best->pixels.front())) best = &r;
  }
  const MarginChoice choice = select_by_margin(best->pixels, best->boundary, candidates, rng);
  return Click{choice.chosen.row, choice.chosen.col, best->class_id, Phase::correction, round};
}

ClickSet SessionTrace::clicks_through(int round) const {
  ClickSet out;
  for (int r = 0; r <= round && r < static_cast<int>(rounds.size()); ++r) out.append(rounds[r].added);
  return out;
}

namespace {

constexpr int kPredictChunk = 16;

void predict_batch(const Network& net, const std::vector<const Sample*>& samples, const std::vector<ClickSet>& clicks,
                   std::vector<LabelMask>& out) {
  out.resize(samples.size());
  const int num_classes = net.config().num_classes;
  for (std::size_t start = 0; start < samples.size(); start += kPredictChunk) {
    const std::size_t end = std::min(samples.size(), start + kPredictChunk);
    const int n = static_cast<int>(end - start);
    std::vector<NetworkInput> inputs(n);
#pragma omp parallel for schedule(dynamic)
    for (int b = 0; b < n; ++b) {
      const Sample& s = *samples[start + b];
      inputs[b] = assemble_input(s.image, encode_clicks(clicks[start + b], s.mask.height(), s.mask.width(), num_classes));
    }
    // Chunks must share one shape; fall back to single items otherwise.
    bool uniform = true;
    for (int b = 1; b < n; ++b)
      uniform = uniform && inputs[b].height == inputs[0].height && inputs[b].width == inputs[0].width;
    if (uniform) {
      const Tensor logits = net.forward(batch_inputs(inputs)).logits;
      for (int b = 0; b < n; ++b) out[start + b] = argmax_labels(logits, b);
    } else {
      for (int b = 0; b < n; ++b)
        out[start + b] = argmax_labels(net.forward(batch_inputs(std::span(&inputs[b], 1))).logits);
    }
  }
}

}  // namespace

EvalReport evaluate(const Network& net, const std::vector<Sample>& samples, const ProtocolConfig& cfg,
                    std::vector<SessionTrace>* traces_out) {
  cfg.validate();
  if (samples.empty()) fail(ErrorKind::invalid_argument, "empty evaluation set");
  for (const Sample& s : samples)
    if (s.mask.num_classes() != net.config().num_classes)
      fail(ErrorKind::invalid_argument, "dataset class count does not match model");

  const std::size_t n = samples.size();
  std::vector<SessionTrace> traces(n);
  std::vector<Rng> rngs(n, Rng(0));
  std::vector<std::vector<std::uint8_t>> bands(n);
  std::vector<ClickSet> clicks(n);
  const Rng root(cfg.seed);

#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    traces[i].id = samples[i].id;
    rngs[i] = root.fork(hash_string(samples[i].id));
    bands[i] = boundary_band(samples[i].mask);
    if (!cfg.rgb_only_init) clicks[i] = init_clicks(samples[i].mask, rngs[i], cfg.candidates);
    traces[i].init_clicks = clicks[i].size();
  }

  std::vector<std::size_t> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = i;

  for (int round = 0; round <= cfg.max_rounds && !active.empty(); ++round) {
    std::vector<ClickSet> added(active.size());
    std::vector<std::uint8_t> keep(active.size(), 1);
    if (round == 0) {
      for (std::size_t a = 0; a < active.size(); ++a) added[a] = clicks[active[a]];
    } else {
#pragma omp parallel for schedule(dynamic)
      for (std::size_t a = 0; a < active.size(); ++a) {
        const std::size_t i = active[a];
        const auto click =
            correction_click(traces[i].rounds.back().prediction, samples[i].mask, rngs[i], round, cfg.candidates);
        if (!click) {
          keep[a] = 0;
          continue;
        }
        clicks[i].add(*click);
        added[a].add(*click);
      }
    }
    std::vector<std::size_t> next;
    std::vector<ClickSet> next_added;
    for (std::size_t a = 0; a < active.size(); ++a) {
      if (!keep[a]) continue;
      next.push_back(active[a]);
      next_added.push_back(std::move(added[a]));
    }
    active = std::move(next);

    std::vector<const Sample*> batch;
    std::vector<ClickSet> batch_clicks;
    for (std::size_t i : active) {
      batch.push_back(&samples[i]);
      batch_clicks.push_back(clicks[i]);
    }
    std::vector<LabelMask> preds;
    predict_batch(net, batch, batch_clicks, preds);

#pragma omp parallel for schedule(dynamic)
    for (std::size_t a = 0; a < active.size(); ++a) {
      const std::size_t i = active[a];
      RoundRecord rec{std::move(next_added[a]), std::move(preds[a]), 0.0, 0.0};
      rec.miou = miou(rec.prediction, samples[i].mask).mean;
      rec.boundary_f1 = boundary_f1(rec.prediction, samples[i].mask, bands[i]);
      traces[i].rounds.push_back(std::move(rec));
    }
  }

  EvalReport report = summarize(traces, samples, cfg, net.config().num_classes);
  if (traces_out) *traces_out = std::move(traces);
  return report;
}

SessionTrace run_session(const Network& net, const Sample& sample, const ProtocolConfig& cfg) {
  std::vector<SessionTrace> traces;
  evaluate(net, {sample}, cfg, &traces);
  return std::move(traces.front());
}

EvalReport summarize(const std::vector<SessionTrace>& traces, const std::vector<Sample>& samples,
                     const ProtocolConfig& cfg, int num_classes) {
  if (traces.size() != samples.size() || traces.empty())
    fail(ErrorKind::invalid_argument, "traces do not match samples");
  EvalReport rep;
  rep.images = traces.size();
  rep.parsing_standard = cfg.parsing_standard;
  for (const Sample& s : samples) {
    std::vector<bool> seen(num_classes, false);
    for (std::uint8_t v : s.mask.labels()) seen[v] = true;
    rep.class_occurrences += static_cast<std::size_t>(std::count(seen.begin(), seen.end(), true));
  }
  const double images = static_cast<double>(traces.size());
  for (int r = 0; r <= cfg.max_rounds; ++r) {
    double m = 0.0, f = 0.0;
    std::size_t clicks = 0;
    for (const SessionTrace& t : traces) {
      if (t.rounds.empty()) fail(ErrorKind::invalid_argument, "empty session trace");
      const RoundRecord& rec = t.rounds[std::min<std::size_t>(r, t.rounds.size() - 1)];
      m += rec.miou;
      f += rec.boundary_f1;
      clicks += t.init_clicks + static_cast<std::size_t>(std::min(r, t.rounds_executed()));
    }
    rep.mean_miou.push_back(m / images);
    rep.mean_boundary_f1.push_back(f / images);
    rep.clicks.push_back(clicks);
    rep.avg_per_round.push_back(static_cast<double>(clicks) / static_cast<double>(rep.class_occurrences));
    if (!rep.rounds_to_standard && rep.mean_miou.back() >= cfg.parsing_standard) rep.rounds_to_standard = r;
  }
  rep.reached_standard = rep.rounds_to_standard.has_value();
  rep.add = rep.rounds_to_standard.value_or(cfg.max_rounds);
  rep.avg = rep.avg_per_round[rep.add];
  rep.boundary_f1 = rep.mean_boundary_f1[rep.add];

  std::vector<double> sum(num_classes, 0.0);
  std::vector<int> cnt(num_classes, 0);
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const auto& rounds = traces[i].rounds;
    const MiouResult res = miou(rounds[std::min<std::size_t>(rep.add, rounds.size() - 1)].prediction, samples[i].mask);
    for (int c = 0; c < num_classes && c < static_cast<int>(res.per_class.size()); ++c) {
      if (!res.per_class[c]) continue;
      sum[c] += *res.per_class[c];
      ++cnt[c];
    }
  }
  rep.per_class_iou.resize(num_classes);
  for (int c = 0; c < num_classes; ++c)
    if (cnt[c]) rep.per_class_iou[c] = sum[c] / cnt[c];
  return rep;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& v : r.per_class_iou) per_class.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  return {{"images", r.images},
          {"parsing_standard", r.parsing_standard},
          {"class_occurrences", r.class_occurrences},
          {"mean_miou", r.mean_miou},
          {"mean_boundary_f1", r.mean_boundary_f1},
          {"clicks", r.clicks},
          {"avg_per_round", r.avg_per_round},
          {"per_class_iou", per_class},
          {"reached_standard", r.reached_standard},
          {"rounds_to_standard", r.rounds_to_standard ? nlohmann::json(*r.rounds_to_standard) : nlohmann::json(nullptr)},
          {"add", r.add},
          {"avg", r.avg},
          {"boundary_f1", r.boundary_f1}};
}

void dump_masks(const std::vector<SessionTrace>& traces, const std::filesystem::path& dir) {
  for (const SessionTrace& t : traces)
    for (std::size_t r = 0; r < t.rounds.size(); ++r)
      write_file(dir / (t.id + "_r" + std::to_string(r) + ".png"), encode_mask_png(t.rounds[r].prediction));
}

}  // namespace ihp
