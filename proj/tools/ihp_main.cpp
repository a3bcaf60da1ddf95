// ihp: data generation, training, click simulation, evaluation and the
// annotation server. Every subcommand accepts --config FILE holding key=value
// lines named like the long options under a [subcommand] section header;
// command-line flags override the file.
// Relative paths resolve against $IHP_DATA_ROOT when it is set.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"
#include "ihp/config.hpp"
#include "ihp/eval.hpp"
#include "ihp/model.hpp"
#include "ihp/service.hpp"
#include "ihp/simulate.hpp"
#include "ihp/synthdata.hpp"

namespace {

using namespace ihp;
namespace fs = std::filesystem;

std::vector<Sample> select_split(const Dataset& ds, const std::string& split) {
  if (split == "all") return ds.samples;
  if (split == "train") return split_train(ds.samples);
  if (split == "val") return split_val(ds.samples);
  fail(ErrorKind::invalid_argument, "split must be all, train or val");
}

void add_simulation_options(CLI::App* sub, SimulationConfig& sim, std::string& strategy) {
  sub->add_option("--strategy", strategy, "central_only | random_sampling | near_edge | random_clicks_only")
      ->capture_default_str();
  sub->add_option("--candidates", sim.candidates, "central-click candidates")->capture_default_str();
  sub->add_option("--d-margin", sim.d_margin, "near-edge / background margin in pixels")->capture_default_str();
  sub->add_option("--ec-num-max", sim.ec_num_max, "max extra clicks")->capture_default_str();
  sub->add_option("--bg-extra-min", sim.bg_extra_min, "min background extras")->capture_default_str();
  sub->add_option("--bg-extra-max", sim.bg_extra_max, "max background extras")->capture_default_str();
  sub->add_option("--sim-seed", sim.seed, "click simulation seed")->capture_default_str();
}

HttpService* g_service = nullptr;

void on_signal(int) {
  if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interactive human parsing toolkit"};
  app.require_subcommand(1);
  app.set_config("--config", "", "key=value file; options go under a [subcommand] section");
  app.fallthrough();

  // generate-data
  DatasetSpec spec;
  std::string gen_out = "synthetic";
  auto* gen = app.add_subcommand("generate-data", "Render a synthetic part-labelled dataset");
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--samples", spec.samples)->capture_default_str();
  gen->add_option("--image-size", spec.image_size)->capture_default_str();
  gen->add_option("--parts", spec.num_parts, "number of part classes (2..6)")->capture_default_str();
  gen->add_option("--seed", spec.seed)->capture_default_str();
  gen->add_option("--ambiguity", spec.ambiguity, "P(mirrored parts share a colour)")->capture_default_str();
  gen->add_option("--occlusion", spec.occlusion, "P(an arm crosses the torso)")->capture_default_str();

  // train
  ModelConfig model_cfg;
  model_cfg.base_channels = 16;
  TrainConfig train_cfg;
  SimulationConfig train_sim;
  train_sim.d_margin = 3;
  std::string train_strategy = "random_sampling";
  std::string train_dataset = "synthetic", train_out = "model.ckpt", train_split = "all";
  int log_every = 50;
  auto* tr = app.add_subcommand("train", "Train a parsing network");
  tr->add_option("--dataset", train_dataset)->capture_default_str();
  tr->add_option("--split", train_split, "all | train | val")->capture_default_str();
  tr->add_option("--out", train_out, "checkpoint path")->capture_default_str();
  tr->add_option("--iterations", train_cfg.iterations)->capture_default_str();
  tr->add_option("--batch-size", train_cfg.batch_size)->capture_default_str();
  tr->add_option("--learning-rate", train_cfg.learning_rate)->capture_default_str();
  tr->add_option("--momentum", train_cfg.momentum)->capture_default_str();
  tr->add_option("--weight-decay", train_cfg.weight_decay)->capture_default_str();
  tr->add_option("--scale-min", train_cfg.scale_min)->capture_default_str();
  tr->add_option("--scale-max", train_cfg.scale_max)->capture_default_str();
  tr->add_flag("--augment,!--no-augment", train_cfg.augment)->capture_default_str();
  tr->add_option("--lambda", train_cfg.sp.lambda, "weight of the semantic-perceiving loss")->capture_default_str();
  tr->add_option("--margin", train_cfg.sp.margin, "semantic-perceiving hinge margin")->capture_default_str();
  tr->add_flag("--literal-min-form", train_cfg.sp.literal_min_form, "use the min form of the hinge");
  tr->add_option("--seed", train_cfg.seed)->capture_default_str();
  tr->add_option("--base-channels", model_cfg.base_channels)->capture_default_str();
  tr->add_option("--depth", model_cfg.depth)->capture_default_str();
  tr->add_option("--embed-dim", model_cfg.embed_dim)->capture_default_str();
  tr->add_option("--crop-size", model_cfg.crop_size)->capture_default_str();
  tr->add_option("--log-every", log_every)->capture_default_str();
  add_simulation_options(tr, train_sim, train_strategy);

  // simulate-clicks
  SimulationConfig sim_cfg;
  sim_cfg.d_margin = 3;
  std::string sim_strategy = "random_sampling", sim_dataset = "synthetic";
  int sim_limit = -1;
  auto* simc = app.add_subcommand("simulate-clicks", "Print simulated training clicks as JSON lines");
  simc->add_option("--dataset", sim_dataset)->capture_default_str();
  simc->add_option("--limit", sim_limit, "at most this many samples (-1 = all)")->capture_default_str();
  add_simulation_options(simc, sim_cfg, sim_strategy);

  // evaluate
  ProtocolConfig proto;
  std::string eval_ckpt = "model.ckpt", eval_dataset = "synthetic", eval_out = "report.json", eval_split = "all",
              eval_dump;
  auto* ev = app.add_subcommand("evaluate", "Run the simulated interactive protocol");
  ev->add_option("--checkpoint", eval_ckpt)->capture_default_str();
  ev->add_option("--dataset", eval_dataset)->capture_default_str();
  ev->add_option("--split", eval_split, "all | train | val")->capture_default_str();
  ev->add_option("--standard", proto.parsing_standard, "target mean mIoU")->capture_default_str();
  ev->add_option("--max-rounds", proto.max_rounds)->capture_default_str();
  ev->add_option("--candidates", proto.candidates)->capture_default_str();
  ev->add_flag("--rgb-only-init", proto.rgb_only_init, "start from an empty click set");
  ev->add_option("--seed", proto.seed)->capture_default_str();
  ev->add_option("--out", eval_out, "report path")->capture_default_str();
  ev->add_option("--dump-masks", eval_dump, "directory for per-round mask PNGs");

  // serve
  ServiceConfig svc;
  std::string host = "127.0.0.1", store = "sessions", ckpt_dir = "checkpoints", catalog;
  int port = 8080;
  auto* sv = app.add_subcommand("serve", "Run the annotation HTTP service");
  sv->add_option("--host", host)->capture_default_str();
  sv->add_option("--port", port, "0 picks a free port")->capture_default_str();
  sv->add_option("--store", store, "session store directory")->capture_default_str();
  sv->add_option("--checkpoints", ckpt_dir, "directory of {id}.ckpt files")->capture_default_str();
  sv->add_option("--catalog", catalog, "dataset directory whose meta.json fixes the class list");
  sv->add_option("--max-inference", svc.max_concurrent_inference)->capture_default_str();
  sv->add_option("--soft-stop-clicks", svc.soft_stop_clicks)->capture_default_str();
  sv->add_option("--soft-stop-miou", svc.soft_stop_miou)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      spec.validate();
      const fs::path out = resolve_data_path(gen_out);
      write_dataset(spec, out);
      std::cout << "wrote " << spec.samples << " samples to " << out.string() << "\n";
    } else if (*tr) {
      train_sim.strategy = strategy_from_string(train_strategy);
      const Dataset full = load_dataset(resolve_data_path(train_dataset));
      Dataset ds{full.meta, select_split(full, train_split)};
      model_cfg.num_classes = ds.meta.num_classes();
      const Checkpoint ckpt = train(model_cfg, train_cfg, train_sim, ds, [&](int it, const LossRecord& r) {
        if (log_every > 0 && (it % log_every == 0 || it + 1 == train_cfg.iterations))
          std::cout << "iter " << it << " loss " << r.total << " ce " << r.ce << " sp " << r.sp << std::endl;
      });
      const fs::path out = resolve_data_path(train_out);
      save_checkpoint(ckpt, out);
      std::cout << "saved " << out.string() << "\n";
    } else if (*simc) {
      sim_cfg.strategy = strategy_from_string(sim_strategy);
      sim_cfg.validate();
      const fs::path dir = resolve_data_path(sim_dataset);
      const DatasetMeta meta = load_meta(dir);
      const Rng root(sim_cfg.seed);
      int n = 0;
      for (const std::string& id : meta.ids) {
        if (sim_limit >= 0 && n++ >= sim_limit) break;
        const Sample s = load_sample(dir, id, meta);
        Rng rng = root.fork(hash_string(id));
        std::cout << nlohmann::json{{"id", id}, {"clicks", to_json(simulate(s.mask, sim_cfg, rng))}}.dump() << "\n";
      }
    } else if (*ev) {
      const Checkpoint ckpt = load_checkpoint(resolve_data_path(eval_ckpt));
      const Dataset ds = load_dataset(resolve_data_path(eval_dataset));
      std::vector<SessionTrace> traces;
      const EvalReport rep = evaluate(ckpt.network, select_split(ds, eval_split), proto, &traces);
      const std::string text = to_json(rep).dump(2) + "\n";
      std::cout << text;
      write_file(resolve_data_path(eval_out), std::vector<std::uint8_t>(text.begin(), text.end()));
      if (!eval_dump.empty()) dump_masks(traces, resolve_data_path(eval_dump));
    } else if (*sv) {
      svc.store_dir = resolve_data_path(store);
      svc.checkpoint_dir = resolve_data_path(ckpt_dir);
      if (!catalog.empty()) svc.catalog = load_meta(resolve_data_path(catalog)).class_names;
      SessionManager manager(svc);
      HttpService http(manager);
      const int bound = http.bind(host, port);
      g_service = &http;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cout << "listening on " << host << ":" << bound << std::endl;
      http.listen();
      g_service = nullptr;
    }
  } catch (const ihp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
