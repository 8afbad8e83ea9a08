// xdistill command-line front end: generate / train / eval / gradcheck /
// ablate / export. Every TrainConfig key is exposed as a flag of the same
// name; flags override the --config file.
#include <cstdio>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xdistill/config.hpp"
#include "xdistill/dataset.hpp"
#include "xdistill/gradcheck.hpp"
#include "xdistill/serialize.hpp"
#include "xdistill/trainer.hpp"

namespace {

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : xd::config::parse_config_text(xd::TrainConfig().dump()))
    keys.push_back(k);
  return keys;
}

// --config plus one string flag per config key; flags win
struct CfgOpts {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (key = value lines, # comments)");
    for (const std::string& key : config_keys())
      cmd->add_option_function<std::string>(
          "--" + key,
          [this, key](const std::string& v) { overrides.emplace_back(key, v); },
          "override config key '" + key + "'");
    // spelled the way people type it
    cmd->add_option_function<std::string>(
        "--steps",
        [this](const std::string& v) { overrides.emplace_back("total_steps", v); },
        "alias for --total_steps");
  }

  xd::TrainConfig resolve() const {
    xd::TrainConfig cfg;
    if (!config_path.empty()) cfg = xd::config::load_config(config_path);
    for (const auto& [k, v] : overrides) cfg.apply(k, v);
    cfg.validate();
    return cfg;
  }
};

void print_metrics(const char* tag, const xd::MetricsReport& m) {
  std::printf("%s abs_rel=%.6f sq_rel=%.6f rmse=%.6f rmse_log=%.6f d1=%.4f d2=%.4f d3=%.4f\n",
              tag, m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3);
}

std::vector<uint64_t> parse_seed_list(const std::string& csv) {
  std::vector<uint64_t> seeds;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) seeds.push_back(std::stoull(item));
  return seeds;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"xdistill: self-supervised depth with cross-task distillation, desk scale"};
  app.require_subcommand(1);
  int rc = 0;

  // ---- generate ----
  auto* gen = app.add_subcommand("generate", "render a dataset to a directory");
  auto gen_opts = std::make_shared<CfgOpts>();
  gen_opts->attach(gen);
  auto gen_out = std::make_shared<std::string>();
  auto gen_count = std::make_shared<int>(0);
  gen->add_option("--out", *gen_out, "output directory")->required();
  gen->add_option("--count", *gen_count, "sample count (default: n_samples)");
  gen->callback([gen_opts, gen_out, gen_count]() {
    const xd::TrainConfig cfg = gen_opts->resolve();
    const int n = *gen_count > 0 ? *gen_count : cfg.n_samples;
    xd::data::generate_dataset(*gen_out, cfg.scene(), n, cfg.seed);
    std::printf("wrote %d samples to %s\n", n, gen_out->c_str());
  });

  // ---- train ----
  auto* tr = app.add_subcommand("train", "run the training loop");
  auto tr_opts = std::make_shared<CfgOpts>();
  tr_opts->attach(tr);
  auto tr_resume = std::make_shared<std::string>();
  tr->add_option("--resume", *tr_resume, "checkpoint to resume from");
  tr->callback([tr_opts, tr_resume]() {
    const xd::TrainConfig cfg = tr_opts->resolve();
    const xd::TrainResult r = xd::train(cfg, *tr_resume);
    std::printf("run dir: %s\n", r.run_dir.c_str());
    std::printf("checkpoint: %s\n", r.checkpoint_path.c_str());
    std::printf("log: %s\n", r.log_path.c_str());
    std::printf("photometric: initial=%.6f final=%.6f\n", r.initial_photo, r.final_photo);
    if (tr_resume->empty()) print_metrics("eval(initial):", r.initial_eval);
    print_metrics("eval(final):  ", r.final_eval);
    std::printf("d2s accuracy: initial=%.4f final=%.4f\n", r.initial_d2s_accuracy,
                r.final_d2s_accuracy);
  });

  // ---- eval ----
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint against ground-truth depth");
  auto ev_opts = std::make_shared<CfgOpts>();
  ev_opts->attach(ev);
  auto ev_ckpt = std::make_shared<std::string>();
  auto ev_median = std::make_shared<bool>(true);
  ev->add_option("--checkpoint", *ev_ckpt, "checkpoint path")->required();
  ev->add_flag("--median-scale,!--no-median-scale", *ev_median,
               "median-align predictions before scoring (default on)");
  ev->callback([ev_opts, ev_ckpt, ev_median]() {
    const xd::TrainConfig cfg = ev_opts->resolve();
    double acc = 0;
    const xd::MetricsReport m = xd::evaluate_checkpoint(cfg, *ev_ckpt, *ev_median, &acc);
    print_metrics("eval:", m);
    std::printf("d2s accuracy: %.4f\n", acc);
  });

  // ---- gradcheck ----
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every registered op");
  auto gc_seed = std::make_shared<uint64_t>(7);
  auto gc_probes = std::make_shared<int>(100);
  auto gc_step = std::make_shared<double>(0);
  auto gc_tol = std::make_shared<double>(0);
  gc->add_option("--seed", *gc_seed, "fixture seed");
  gc->add_option("--probes", *gc_probes, "max probe points per op");
  gc->add_option("--step", *gc_step, "FD step (default: precision-matched)");
  gc->add_option("--tol", *gc_tol, "max rel. error (default: precision-matched)");
  gc->callback([gc_seed, gc_probes, gc_step, gc_tol, &rc]() {
    const xd::real step = *gc_step > 0 ? xd::real(*gc_step) : xd::gradcheck::default_step();
    const xd::real tol = *gc_tol > 0 ? xd::real(*gc_tol) : xd::gradcheck::default_tol();
    const auto results = xd::gradcheck::run_all(*gc_seed, step, tol, *gc_probes);
    bool all_ok = true;
    int probes = 0;
    for (const auto& r : results) {
      std::printf("%-26s probes=%-4d max_rel_err=%.3e tol=%.1e %s\n", r.name.c_str(), r.n_probes,
                  r.max_rel_err, r.tol, r.pass ? "ok" : "FAIL");
      all_ok = all_ok && r.pass;
      probes += r.n_probes;
    }
    std::printf("%zu ops, %d probes total: %s\n", results.size(), probes,
                all_ok ? "all ok" : "FAILURES");
    if (!all_ok) rc = 1;
  });

  // ---- ablate ----
  auto* ab = app.add_subcommand("ablate", "train an ablation axis over a shared seed set");
  auto ab_opts = std::make_shared<CfgOpts>();
  ab_opts->attach(ab);
  auto ab_axis = std::make_shared<std::string>();
  auto ab_seeds = std::make_shared<std::string>("1,2,3");
  auto ab_out = std::make_shared<std::string>();
  ab->add_option("--axis", *ab_axis, "grouping | d2s_depth | schedule_weight | backbone_size")
      ->required();
  ab->add_option("--seeds", *ab_seeds, "comma-separated seed list (default 1,2,3)");
  ab->add_option("--out", *ab_out, "CSV path (default ablation_<axis>.csv in out_dir)");
  ab->callback([ab_opts, ab_axis, ab_seeds, ab_out]() {
    const xd::TrainConfig cfg = ab_opts->resolve();
    const std::vector<uint64_t> seeds = parse_seed_list(*ab_seeds);
    std::string csv = *ab_out;
    if (csv.empty()) csv = cfg.out_dir + "/ablation_" + *ab_axis + ".csv";
    const auto rows = xd::run_ablation(*ab_axis, cfg, seeds, csv);
    for (const auto& r : rows) {
      std::printf("%-18s", r.variant.c_str());
      print_metrics("", r.metrics);
    }
    std::printf("table written to %s\n", csv.c_str());
  });

  // ---- export ----
  auto* ex = app.add_subcommand("export", "convert a stored tensor to a plain-text pixmap");
  auto ex_in = std::make_shared<std::string>();
  auto ex_out = std::make_shared<std::string>();
  auto ex_mode = std::make_shared<std::string>("auto");
  ex->add_option("--input", *ex_in, "XDT1 tensor (image or depth map)")->required();
  ex->add_option("--out", *ex_out, "output .ppm/.pgm path")->required();
  ex->add_option("--mode", *ex_mode, "auto | image | depth (auto: 3-channel -> image)")
      ->check(CLI::IsMember({"auto", "image", "depth"}));
  ex->callback([ex_in, ex_out, ex_mode]() {
    const xd::Tensor t = xd::io::read_tensor(*ex_in);
    const bool as_image =
        *ex_mode == "image" || (*ex_mode == "auto" && t.rank() == 3 && t.dim(0) == 3);
    if (as_image)
      xd::io::export_image(*ex_out, t);
    else
      xd::io::export_depth_pixmap(*ex_out, t);
    std::printf("wrote %s\n", ex_out->c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
