#include <gtest/gtest.h>

#include <filesystem>

#include "ihp/eval.hpp"
#include "ihp/model.hpp"
#include "oracles.hpp"

using namespace ihp;
namespace fs = std::filesystem;

namespace {

LabelMask from_rows(const std::vector<std::string>& rows, int num_classes) {
  LabelMask m(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()), num_classes);
  for (int r = 0; r < m.height(); ++r)
    for (int c = 0; c < m.width(); ++c) m.set(r, c, static_cast<std::uint8_t>(rows[r][c] - '0'));
  return m;
}

ModelConfig tiny_config(int num_classes = 4) {
  ModelConfig cfg;
  cfg.num_classes = num_classes;
  cfg.base_channels = 4;
  cfg.depth = 3;
  cfg.embed_dim = 4;
  cfg.stem_kernel = 5;
  return cfg;
}

// Zero weights and a head bias favouring one class: predicts that class everywhere.
Network constant_network(const ModelConfig& cfg, int cls) {
  Network net(cfg, 1);
  for (Parameter& p : net.parameters()) std::fill(p.values.begin(), p.values.end(), 0.0f);
  for (Parameter& p : net.parameters())
    if (p.name == "head.bias") p.values[cls] = 1.0f;
  return net;
}

std::vector<Sample> small_set(int n, int num_parts = 3) {
  DatasetSpec spec;
  spec.num_parts = num_parts;
  spec.image_size = 32;
  spec.samples = n;
  spec.seed = 5;
  return generate_dataset(spec).samples;
}

}  // namespace

TEST(Miou, IdentityIsOne) {
  Rng rng(1);
  const LabelMask m = oracle::random_mask(8, 8, 4, rng);
  const MiouResult r = miou(m, m);
  EXPECT_EQ(r.mean, 1.0);
  for (const auto& v : r.per_class)
    if (v) EXPECT_EQ(*v, 1.0);
}

TEST(Miou, DisjointSingleClassIsZero) {
  LabelMask gt(2, 2, 3), pred(2, 2, 3);
  gt.set(0, 0, 1);
  pred.set(1, 1, 1);
  const MiouResult r = miou(pred, gt);
  ASSERT_TRUE(r.per_class[1].has_value());
  EXPECT_EQ(*r.per_class[1], 0.0);
  EXPECT_FALSE(r.per_class[2].has_value());
}

TEST(Miou, TwoClassCounts) {
  // Class 1: intersection 3, union 5. Class 2: intersection 2, union 4.
  const LabelMask gt = from_rows({"1111122"}, 3);
  const LabelMask pred = from_rows({"1112222"}, 3);
  MiouResult r = miou(pred, gt);
  EXPECT_NEAR(*r.per_class[1], 0.6, 1e-12);
  EXPECT_NEAR(*r.per_class[2], 0.5, 1e-12);
  EXPECT_FALSE(r.per_class[0].has_value());
  EXPECT_NEAR(r.mean, 0.55, 1e-9);

  // The same counts on a 4x4 grid, with correctly labelled background filling the rest.
  const LabelMask gt4 = from_rows({"1111", "1220", "0000", "0000"}, 3);
  const LabelMask pred4 = from_rows({"1112", "2220", "0000", "0000"}, 3);
  r = miou(pred4, gt4);
  EXPECT_NEAR(*r.per_class[1], 0.6, 1e-12);
  EXPECT_NEAR(*r.per_class[2], 0.5, 1e-12);
  EXPECT_NEAR(*r.per_class[0], 1.0, 1e-12);
  EXPECT_NEAR(r.mean, 2.1 / 3.0, 1e-9);
}

TEST(Miou, MatchesOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelMask gt = oracle::random_mask(12, 12, 5, rng), pred = oracle::random_mask(12, 12, 5, rng);
    EXPECT_NEAR(miou(pred, gt).mean, oracle::miou(pred, gt), 1e-12);
  }
}

TEST(BoundaryF1, Identity) {
  Rng rng(3);
  const LabelMask m = oracle::random_mask(16, 16, 4, rng);
  EXPECT_EQ(boundary_f1(m, m), 1.0);
  EXPECT_EQ(boundary_f1(LabelMask(6, 6, 2), LabelMask(6, 6, 2)), 1.0);  // empty band
}

TEST(BoundaryF1, AllBandPixelsWrongIsZero) {
  LabelMask gt(16, 16, 3);
  for (int r = 4; r < 12; ++r)
    for (int c = 4; c < 12; ++c) gt.set(r, c, 1);
  const auto band = boundary_band(gt);
  LabelMask pred = gt;
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      if (band[r * 16 + c]) pred.set(r, c, gt.at(r, c) == 1 ? 0 : 1);
  EXPECT_EQ(boundary_f1(pred, gt), 0.0);
}

TEST(BoundaryF1, BandAndScoreMatchOracle) {
  Rng rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const LabelMask gt = oracle::random_mask(16, 16, 4, rng, 5);
    LabelMask pred = gt;
    for (int k = 0; k < 40; ++k)
      pred.set(rng.uniform_int(0, 15), rng.uniform_int(0, 15), static_cast<std::uint8_t>(rng.uniform_int(0, 3)));
    EXPECT_EQ(boundary_band(gt), oracle::band(gt, 5.0));
    EXPECT_NEAR(boundary_f1(pred, gt), oracle::boundary_f1(pred, gt, 5.0), 1e-9);
    EXPECT_NEAR(boundary_f1(pred, gt, 2.0), oracle::boundary_f1(pred, gt, 2.0), 1e-9);
  }
}

TEST(InitClicks, OnePerPartComponentNoBackground) {
  const LabelMask gt = from_rows({"11000022", "11000022", "00000000", "00033000", "20033000", "20000001"}, 4);
  Rng rng(5);
  const ClickSet cs = init_clicks(gt, rng);
  EXPECT_EQ(cs.size(), 5u);
  EXPECT_EQ(cs.count(0), 0u);
  for (const Click& c : cs) {
    EXPECT_EQ(gt.at(c.row, c.col), c.class_id);
    EXPECT_EQ(c.phase, Phase::init);
  }
  EXPECT_EQ(cs.count(2), 2u);
}

TEST(InitClicks, SinglePixelComponent) {
  LabelMask gt(5, 5, 2);
  gt.set(3, 1, 1);
  Rng rng(6);
  const ClickSet cs = init_clicks(gt, rng);
  ASSERT_EQ(cs.size(), 1u);
  EXPECT_EQ(cs[0].pixel(), (Pixel{3, 1}));
}

TEST(ErrorRegions, SplitByGroundTruthClass) {
  const LabelMask gt = from_rows({"1122", "1122"}, 3);
  const LabelMask pred = from_rows({"0000", "1122"}, 3);
  const auto regions = error_regions(pred, gt);
  ASSERT_EQ(regions.size(), 2u);
  EXPECT_EQ(regions[0].pixels.size(), 2u);
  EXPECT_EQ(regions[0].class_id, 1);
  EXPECT_EQ(regions[1].class_id, 2);
}

TEST(CorrectionClick, NoneWhenPerfect) {
  Rng rng(7);
  const LabelMask gt = oracle::random_mask(8, 8, 3, rng);
  EXPECT_FALSE(correction_click(gt, gt, rng, 1).has_value());
}

TEST(CorrectionClick, LandsInLargestRegion) {
  LabelMask gt(20, 20, 3), pred(20, 20, 3);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 6; ++c) gt.set(r, c, 1);  // 30 px, predicted background
  for (int r = 10; r < 13; ++r)
    for (int c = 10; c < 14; ++c) pred.set(r, c, 2);  // 12 px background predicted as class 2
  std::multiset<std::size_t> areas;
  for (const auto& region : error_regions(pred, gt)) areas.insert(region.area());
  EXPECT_EQ(areas, (std::multiset<std::size_t>{12, 30}));
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const auto click = correction_click(pred, gt, rng, 3);
    ASSERT_TRUE(click.has_value());
    EXPECT_LT(click->row, 5);
    EXPECT_LT(click->col, 6);
    EXPECT_EQ(click->class_id, 1);
    EXPECT_EQ(click->phase, Phase::correction);
    EXPECT_EQ(click->round, 3);
  }
}

TEST(CorrectionClick, AlwaysInsideAnErrorWithGtLabel) {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const LabelMask gt = oracle::random_mask(16, 16, 4, rng), pred = oracle::random_mask(16, 16, 4, rng);
    const auto click = correction_click(pred, gt, rng, 1);
    ASSERT_TRUE(click.has_value());
    EXPECT_NE(pred.at(click->row, click->col), gt.at(click->row, click->col));
    EXPECT_EQ(click->class_id, gt.at(click->row, click->col));
  }
}

TEST(Summarize, AvgFromClickCounts) {
  // Two images with five class occurrences each; 8 init clicks and 4
  // corrections by the round where the standard is reached.
  std::vector<Sample> samples(2);
  std::vector<SessionTrace> traces(2);
  for (int i = 0; i < 2; ++i) {
    samples[i].mask = from_rows({"0123", "4000"}, 5);
    traces[i].init_clicks = 4;
    const double curve[] = {0.5, 0.8, 0.95, 0.97};
    for (double m : curve) traces[i].rounds.push_back({{}, samples[i].mask, m, 1.0});
  }
  ProtocolConfig cfg;
  cfg.max_rounds = 3;
  const EvalReport rep = summarize(traces, samples, cfg, 5);
  EXPECT_EQ(rep.class_occurrences, 10u);
  EXPECT_TRUE(rep.reached_standard);
  EXPECT_EQ(rep.add, 2);
  EXPECT_EQ(rep.clicks[rep.add], 12u);
  EXPECT_NEAR(rep.avg, 1.2, 1e-9);
  EXPECT_EQ(rep.clicks, (std::vector<std::size_t>{8, 10, 12, 14}));
}

TEST(Summarize, UnreachedStandardReportsMaxRounds) {
  std::vector<Sample> samples(1);
  samples[0].mask = from_rows({"01", "21"}, 3);
  std::vector<SessionTrace> traces(1);
  traces[0].init_clicks = 2;
  traces[0].rounds.push_back({{}, samples[0].mask, 0.5, 0.4});
  traces[0].rounds.push_back({{}, samples[0].mask, 0.6, 0.5});
  ProtocolConfig cfg;
  cfg.max_rounds = 4;
  const EvalReport rep = summarize(traces, samples, cfg, 3);
  EXPECT_FALSE(rep.reached_standard);
  EXPECT_FALSE(rep.rounds_to_standard.has_value());
  EXPECT_EQ(rep.add, 4);
  // The trace stopped after one round: its last record stands for later rounds.
  EXPECT_EQ(rep.mean_miou, (std::vector<double>{0.5, 0.6, 0.6, 0.6, 0.6}));
  EXPECT_EQ(rep.clicks.back(), 3u);
  EXPECT_NEAR(rep.avg, 1.0, 1e-12);
  EXPECT_TRUE(to_json(rep)["rounds_to_standard"].is_null());
}

TEST(RunSession, PerfectPredictionStopsImmediately) {
  const ModelConfig cfg = tiny_config(3);
  const Network net = constant_network(cfg, 0);
  Sample s;
  s.image = RgbImage(20, 20);
  s.mask = LabelMask(20, 20, 3);
  s.id = "blank";
  const SessionTrace t = run_session(net, s, {});
  EXPECT_EQ(t.rounds.size(), 1u);
  EXPECT_EQ(t.rounds_executed(), 0);
  EXPECT_EQ(t.rounds[0].miou, 1.0);
  EXPECT_EQ(t.init_clicks, 0u);
}

TEST(RunSession, OneClickPerRound) {
  const auto samples = small_set(1);
  const Network net(tiny_config(), 3);
  ProtocolConfig cfg;
  cfg.max_rounds = 6;
  const SessionTrace t = run_session(net, samples[0], cfg);
  EXPECT_GT(t.rounds_executed(), 0);
  EXPECT_EQ(t.init_clicks, t.clicks_through(0).size());
  for (int r = 1; r <= t.rounds_executed(); ++r) {
    EXPECT_EQ(t.rounds[r].added.size(), 1u);
    EXPECT_EQ(t.clicks_through(r).size(), t.clicks_through(r - 1).size() + 1);
    const Click& c = t.rounds[r].added[0];
    EXPECT_EQ(c.class_id, samples[0].mask.at(c.row, c.col));
    EXPECT_NE(t.rounds[r - 1].prediction.at(c.row, c.col), c.class_id);
    // Each recorded prediction is reproducible from the accumulated clicks.
    EXPECT_EQ(predict(net, samples[0].image, t.clicks_through(r)), t.rounds[r].prediction);
  }
}

TEST(RunSession, RgbOnlyStartsWithoutClicks) {
  const auto samples = small_set(1);
  const Network net(tiny_config(), 3);
  ProtocolConfig cfg;
  cfg.rgb_only_init = true;
  cfg.max_rounds = 2;
  const SessionTrace t = run_session(net, samples[0], cfg);
  EXPECT_EQ(t.init_clicks, 0u);
  EXPECT_TRUE(t.rounds[0].added.empty());
  EXPECT_EQ(t.rounds[0].prediction, predict(net, samples[0].image, {}));
}

TEST(Evaluate, PerfectModelHasZeroAdd) {
  const ModelConfig cfg = tiny_config(3);
  const Network net = constant_network(cfg, 0);
  std::vector<Sample> samples(2);
  for (auto& s : samples) {
    s.image = RgbImage(16, 16);
    s.mask = LabelMask(16, 16, 3);
  }
  samples[0].id = "a";
  samples[1].id = "b";
  const EvalReport rep = evaluate(net, samples, {});
  EXPECT_TRUE(rep.reached_standard);
  EXPECT_EQ(rep.add, 0);
  EXPECT_EQ(rep.class_occurrences, 2u);
  EXPECT_EQ(rep.avg, 0.0);
  EXPECT_EQ(rep.mean_miou.size(), 16u);
}

TEST(Evaluate, FinishedImagesStopReceivingClicks) {
  const ModelConfig cfg = tiny_config(4);
  const Network net = constant_network(cfg, 0);
  auto samples = small_set(1);
  Sample blank;
  blank.id = "blank";
  blank.image = RgbImage(32, 32);
  blank.mask = LabelMask(32, 32, 4);
  samples.push_back(blank);
  ProtocolConfig pc;
  pc.max_rounds = 3;
  std::vector<SessionTrace> traces;
  const EvalReport rep = evaluate(net, samples, pc, &traces);
  ASSERT_EQ(traces.size(), 2u);
  EXPECT_EQ(traces[0].rounds_executed(), 3);
  EXPECT_EQ(traces[1].rounds_executed(), 0);
  EXPECT_EQ(rep.clicks[3], traces[0].init_clicks + 3);
  EXPECT_EQ(rep.class_occurrences, 5u);
}

TEST(Evaluate, ReportMatchesTraceReplay) {
  const auto samples = small_set(4);
  const Network net(tiny_config(), 11);
  ProtocolConfig cfg;
  cfg.max_rounds = 4;
  std::vector<SessionTrace> traces;
  const EvalReport rep = evaluate(net, samples, cfg, &traces);
  ASSERT_EQ(traces.size(), 4u);
  for (int r = 1; r <= cfg.max_rounds; ++r) {
    double m = 0.0;
    std::size_t clicks = 0;
    for (std::size_t i = 0; i < traces.size(); ++i) {
      const SessionTrace& t = traces[i];
      const int k = std::min(r, t.rounds_executed());
      m += miou(t.rounds[k].prediction, samples[i].mask).mean;
      clicks += t.clicks_through(k).size();
    }
    EXPECT_NEAR(rep.mean_miou[r], m / 4.0, 1e-12);
    EXPECT_EQ(rep.clicks[r], clicks);
  }
  EXPECT_EQ(to_json(summarize(traces, samples, cfg, 4)).dump(), to_json(rep).dump());
  for (std::size_t r = 1; r < rep.avg_per_round.size(); ++r) EXPECT_GE(rep.avg_per_round[r], rep.avg_per_round[r - 1]);
}

TEST(Evaluate, DeterministicReportJson) {
  const auto samples = small_set(3);
  const Network net(tiny_config(), 12);
  ProtocolConfig cfg;
  cfg.max_rounds = 3;
  cfg.seed = 77;
  EXPECT_EQ(to_json(evaluate(net, samples, cfg)).dump(), to_json(evaluate(net, samples, cfg)).dump());
}

TEST(Evaluate, DumpMasksWritesEveryRound) {
  const auto samples = small_set(2);
  const Network net(tiny_config(), 13);
  ProtocolConfig cfg;
  cfg.max_rounds = 2;
  std::vector<SessionTrace> traces;
  evaluate(net, samples, cfg, &traces);
  const fs::path dir = fs::temp_directory_path() / "ihp_eval_dump";
  fs::remove_all(dir);
  dump_masks(traces, dir);
  for (const SessionTrace& t : traces)
    for (int r = 0; r <= t.rounds_executed(); ++r) {
      const fs::path p = dir / (t.id + "_r" + std::to_string(r) + ".png");
      ASSERT_TRUE(fs::exists(p)) << p;
      const PngImage img = decode_png(read_file(p));
      EXPECT_EQ(img.channels, 1);
      const auto labels = t.rounds[r].prediction.labels();
      EXPECT_TRUE(std::equal(img.pixels.begin(), img.pixels.end(), labels.begin(), labels.end()));
    }
  fs::remove_all(dir);
}

TEST(ProtocolConfig, Validation) {
  ProtocolConfig cfg;
  cfg.parsing_standard = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg = {};
  cfg.candidates = 0;
  EXPECT_THROW(cfg.validate(), Error);
  EXPECT_EQ(to_json(EvalReport{})["rounds_to_standard"], nullptr);
}
