#include "cdgmae_cli/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "cdgmae/checkpoint.hpp"
#include "cdgmae/consistency.hpp"
#include "cdgmae/flops.hpp"
#include "cdgmae/records.hpp"
#include "cdgmae/synth.hpp"
#include "cdgmae/tensor_io.hpp"

namespace fs = std::filesystem;

namespace cdgmae::cli {
namespace {

std::string numbered(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu", stem, i);
  return buf;
}

template <typename T>
void assign_if(const std::optional<T>& flag, T& target) {
  if (flag) target = *flag;
}

bool apply_propagation_key(PropagationConfig& p, const std::string& key, const std::string& value) {
  if (key == "top_k") {
    p.top_k = parse_size_value(key, value);
  } else if (key == "queue_length") {
    p.queue_length = parse_size_value(key, value);
  } else if (key == "neighborhood") {
    p.neighborhood = parse_size_value(key, value);
  } else if (key == "temperature") {
    p.temperature = parse_double_value(key, value);
  } else if (key == "include_first_frame") {
    p.include_first_frame = parse_bool_value(key, value);
  } else {
    return false;
  }
  return true;
}

std::vector<ConfigEntry> load_config(const fs::path& path) {
  if (path.empty()) return {};
  return read_config_file(path);
}

// --- commands ----------------------------------------------------------------

int run_synth_views(const Command& c, std::ostream& out) {
  for (std::size_t i = 0; i < c.count; ++i) {
    const Scene scene = gen_scene(mix_seed(c.seed, i), c.size);
    write_bag(c.out / numbered("bag", i), gen_views(scene.spec, c.views, c.strength), c.ppm);
  }
  out << "wrote " << c.count << " bags of " << c.views << " views to " << c.out.string() << '\n';
  return kOk;
}

int run_synth_video(const Command& c, std::ostream& out) {
  for (std::size_t i = 0; i < c.count; ++i) {
    const Scene scene = c.grid_aligned ? gen_grid_aligned_scene(mix_seed(c.seed, i), c.size, c.patch)
                                       : gen_scene(mix_seed(c.seed, i), c.size);
    write_video(c.out / numbered("video", i), gen_video(scene.spec, c.frames, {c.speed, c.spin}), c.ppm);
  }
  out << "wrote " << c.count << " videos of " << c.frames << " frames to " << c.out.string() << '\n';
  return kOk;
}

int run_train(const Command& c, std::ostream& out) {
  Trainer trainer(c.train, read_bags(c.data));
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw IoError("cannot create " + c.out.string() + ": " + ec.message());

  std::string config_text;
  for (const auto& [k, v] : train_config_items(c.train)) config_text += k + " = " + v + "\n";
  write_text_atomic(c.out / "config.txt", config_text);

  const fs::path log_path = c.out / "train.log", timing_path = c.out / "timing.log";
  std::ofstream log(log_path, std::ios::trunc), timing(timing_path, std::ios::trunc);
  if (!log || !timing) throw IoError("cannot open logs in " + c.out.string());

  const std::size_t every = std::max<std::size_t>(1, trainer.total_steps() / 10);
  double first_loss = 0.0, last_loss = 0.0;
  trainer.run([&](const StepStats& s) {
    if (s.step == 1) first_loss = s.loss;
    last_loss = s.loss;
    log << format_record(step_record(s)) << '\n';
    timing << format_record({{"step", std::to_string(s.step)}, {"wall_ms", format_number(s.wall_ms)}}) << '\n';
    if (s.step % every == 0 || s.step == trainer.total_steps()) {
      out << "step " << s.step << '/' << trainer.total_steps() << "  lr=" << format_number(s.lr)
          << "  loss=" << format_number(s.loss) << '\n';
    }
    if (c.train.checkpoint_every > 0 && s.step % c.train.checkpoint_every == 0) {
      save_checkpoint(c.out / "checkpoint", trainer.params(), s.step);
    }
  });
  log.flush();
  timing.flush();
  if (!log || !timing) throw IoError("failed writing logs in " + c.out.string());
  save_checkpoint(c.out / "checkpoint", trainer.params(), trainer.steps_done());
  out << "first_loss=" << format_number(first_loss) << " final_loss=" << format_number(last_loss)
      << " checkpoint=" << (c.out / "checkpoint").string() << '\n';
  return kOk;
}

int run_flops(const Command& c, std::ostream& out) {
  std::vector<FlopsRow> rows;
  for (const auto& [n, ra] : c.flops_settings) {
    rows.push_back({n, ra, estimate_flops(c.train.model, n, ra, c.train.model.target_mask)});
  }
  out << format_flops_table(rows);
  return kOk;
}

struct Category {
  std::string name;
  ConsistencyReport report;
};

void print_categories(const std::vector<Category>& cats, std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-18s %12s %12s %12s %8s\n", "pairing", "Global Sim.", "Local Sim.",
                "Nearest Sim.", "pairs");
  out << buf;
  for (const auto& cat : cats) {
    std::snprintf(buf, sizeof buf, "%-18s %12s %12s %12s %8zu\n", cat.name.c_str(),
                  format_number(cat.report.mean_gs).c_str(), format_number(cat.report.mean_ls).c_str(),
                  format_number(cat.report.mean_nps).c_str(), cat.report.pairs.size());
    out << buf;
  }
}

std::string category_records(const std::vector<Category>& cats) {
  std::string text;
  for (const auto& cat : cats) {
    for (const auto& p : cat.report.pairs) {
      Record r = {{"pairing", cat.name},         {"first", p.first_id},       {"second", p.second_id},
                  {"gs", format_number(p.gs)},   {"ls", format_number(p.ls)}, {"nps", format_number(p.nps)}};
      if (p.nps_reverse) r.emplace_back("nps_reverse", format_number(*p.nps_reverse));
      text += format_record(r) + '\n';
    }
  }
  return text;
}

int run_metrics(const Command& c, std::ostream& out) {
  std::vector<Category> cats;
  if (!c.feature_pairs.empty()) {
    std::vector<FeaturePair> pairs;
    for (const auto& [a, b] : c.feature_pairs) pairs.emplace_back(read_feature_file(a), read_feature_file(b));
    cats.push_back({"files", evaluate_pairs(pairs, c.both_directions)});
  } else {
    const Checkpoint ck = load_checkpoint(c.checkpoint);
    const auto dirs = list_subdirectories(c.data);
    if (dirs.size() < 2) throw ContractError("metrics: need at least two bags for random pairs");
    std::vector<ViewBag> bags;
    std::vector<std::string> names;
    for (const auto& d : dirs) {
      bags.push_back(read_bag(d));
      names.push_back(d.filename().string());
    }
    std::vector<FeatureSet> real;
    for (std::size_t i = 0; i < bags.size(); ++i) real.push_back(extract_features(ck.params, bags[i].real, names[i]));
    if (!c.save_features.empty()) {
      fs::create_directories(c.save_features);
      for (const auto& f : real) write_feature_file(c.save_features / (f.source_id + "_real.cdgt"), f);
    }
    std::vector<FeaturePair> generated, random;
    Rng rng(mix_seed(c.seed, 0x70616972));
    for (std::size_t i = 0; i < bags.size(); ++i) {
      for (std::size_t v = 0; v < bags[i].num_views(); ++v) {
        FeatureSet view = extract_features(ck.params, bags[i].views[v], names[i] + "/" + numbered("view", v));
        if (!c.save_features.empty()) {
          write_feature_file(c.save_features / (names[i] + "_" + numbered("view", v) + ".cdgt"), view);
        }
        generated.emplace_back(real[i], std::move(view));
      }
      const std::size_t j = (i + 1 + rng.below(bags.size() - 1)) % bags.size();
      random.emplace_back(real[i], real[j]);
    }
    cats.push_back({"generated views", evaluate_pairs(generated, c.both_directions)});
    cats.push_back({"random pairs", evaluate_pairs(random, c.both_directions)});
  }
  print_categories(cats, out);
  if (!c.out.empty()) write_text_atomic(c.out, category_records(cats));
  return kOk;
}

int run_labelprop(const Command& c, std::ostream& out) {
  const auto videos = read_video_dataset(c.data);
  std::optional<Checkpoint> ck;
  FeatureExtractor extractor;
  if (c.identity_features) {
    extractor = identity_extractor(c.patch);
  } else {
    ck = load_checkpoint(c.checkpoint);
    extractor = model_extractor(ck->params);
  }
  const MetricsReport report = run_eval(extractor, videos, c.task, c.propagation);
  out << format_metrics_table(report);
  switch (c.task) {
    case EvalTask::kSegmentation:
      out << "J&F_m = " << format_number(report.mean_jf) << "  J_m = " << format_number(report.mean_j)
          << "  F_m = " << format_number(report.mean_f) << '\n';
      break;
    case EvalTask::kParts: out << "mIoU = " << format_number(report.mean_miou) << '\n'; break;
    case EvalTask::kPose:
      out << "PCK@0.1 = " << format_number(report.mean_pck_01) << "  PCK@0.2 = " << format_number(report.mean_pck_02)
          << '\n';
      break;
  }
  if (!c.out.empty()) write_text_atomic(c.out, format_metrics_records(report));
  return kOk;
}

int run_gradcheck(const Command& c, std::ostream& out) {
  const auto results = run_gradcheck_suite(c.gradcheck);
  out << format_gradcheck_report(results);
  const bool ok = std::all_of(results.begin(), results.end(), [](const GradCheckResult& r) { return r.passed(); });
  out << (ok ? "gradcheck passed\n" : "gradcheck FAILED\n");
  return ok ? kOk : kNumerical;
}

std::optional<double> as_number(const std::string& s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

std::string svg_plot(const std::vector<std::pair<double, double>>& pts, const std::string& ylabel) {
  double x0 = pts.front().first, x1 = x0, y0 = pts.front().second, y1 = y0;
  for (const auto& [x, y] : pts) {
    x0 = std::min(x0, x), x1 = std::max(x1, x);
    y0 = std::min(y0, y), y1 = std::max(y1, y);
  }
  if (x1 == x0) x1 = x0 + 1.0;
  if (y1 == y0) y1 = y0 + 1.0;
  const double w = 640, h = 360, m = 48;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
     << "<rect x=\"" << m << "\" y=\"" << m / 2 << "\" width=\"" << w - 1.5 * m << "\" height=\"" << h - 1.5 * m
     << "\" fill=\"none\" stroke=\"black\"/>\n<polyline fill=\"none\" stroke=\"steelblue\" points=\"";
  for (const auto& [x, y] : pts) {
    const double px = m + (x - x0) / (x1 - x0) * (w - 1.5 * m);
    const double py = m / 2 + (1.0 - (y - y0) / (y1 - y0)) * (h - 1.5 * m);
    os << px << ',' << py << ' ';
  }
  os << "\"/>\n<text x=\"" << m << "\" y=\"" << h - 8 << "\" font-size=\"12\">" << ylabel << " "
     << format_number(y0) << " .. " << format_number(y1) << "</text>\n</svg>\n";
  return os.str();
}

int run_report(const Command& c, std::ostream& out) {
  if (!c.out.empty()) {
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw IoError("cannot create " + c.out.string() + ": " + ec.message());
  }
  for (const auto& input : c.inputs) {
    const auto records = read_records(input);
    out << "== " << input.string() << " (" << records.size() << " records)\n";
    if (records.empty()) continue;

    bool curve = true;
    std::vector<std::pair<double, double>> pts;
    for (const auto& r : records) {
      std::optional<double> step, loss;
      for (const auto& [k, v] : r) {
        if (k == "step") step = as_number(v);
        if (k == "loss") loss = as_number(v);
      }
      if (!step || !loss) {
        curve = false;
        break;
      }
      pts.emplace_back(*step, *loss);
    }
    if (curve) {
      double lo = pts.front().second;
      for (const auto& p : pts) lo = std::min(lo, p.second);
      out << "steps       " << pts.size() << '\n'
          << "first_loss  " << format_number(pts.front().second) << '\n'
          << "final_loss  " << format_number(pts.back().second) << '\n'
          << "min_loss    " << format_number(lo) << '\n'
          << "final/first " << format_number(pts.back().second / pts.front().second) << '\n';
      if (!c.out.empty()) {
        std::string dat = "# step loss\n";
        for (const auto& [x, y] : pts) dat += format_number(x) + " " + format_number(y) + "\n";
        const std::string stem = input.stem().string();
        write_text_atomic(c.out / (stem + "_loss.dat"), dat);
        write_text_atomic(c.out / (stem + "_loss.svg"), svg_plot(pts, "loss"));
      }
      continue;
    }

    // Column means of numeric fields, grouped by the first text field when
    // one is present in every record (e.g. pairing or task).
    std::map<std::string, std::map<std::string, std::pair<double, std::size_t>>> groups;
    std::vector<std::string> order;
    for (const auto& r : records) {
      std::string group = "all";
      for (const auto& [k, v] : r) {
        if (!as_number(v)) {
          group = k + "=" + v;
          break;
        }
      }
      if (groups.find(group) == groups.end()) order.push_back(group);
      for (const auto& [k, v] : r) {
        if (const auto x = as_number(v)) {
          auto& acc = groups[group][k];
          acc.first += *x;
          ++acc.second;
        }
      }
    }
    for (const auto& g : order) {
      out << g << ':';
      for (const auto& [k, acc] : groups[g]) out << "  " << k << "=" << format_number(acc.first / acc.second);
      out << '\n';
    }
  }
  return kOk;
}

}  // namespace

Command parse_args(int argc, const char* const* argv) {
  CLI::App app{"Multi-anchor masked autoencoder toolkit: synthetic data, training, compute estimates and evaluation"};
  app.require_subcommand(1);

  Command cmd;
  std::optional<std::uint64_t> seed;
  std::string config_path;

  // synth
  auto* sv = app.add_subcommand("synth-views", "Generate bags of views (one real image + M perturbed views)");
  auto* vid = app.add_subcommand("synth-video", "Generate moving-shape videos with masks, parts and keypoints");
  for (auto* sub : {sv, vid}) {
    sub->add_option("--out", cmd.out, "Output directory")->required();
    sub->add_option("--count", cmd.count, "Number of bags/videos");
    sub->add_option("--size", cmd.size, "Image side in pixels");
    sub->add_option("--seed", seed, "Base seed");
    sub->add_flag("--ppm", cmd.ppm, "Also export PPM images");
  }
  sv->add_option("--views", cmd.views, "Generated views per bag (M)");
  sv->add_option("--strength", cmd.strength, "Perturbation strength in (0, 1]");
  vid->add_option("--frames", cmd.frames, "Frames per video");
  vid->add_option("--speed", cmd.speed, "Object speed in pixels per frame (0 gives a static video)");
  vid->add_option("--spin", cmd.spin, "Object rotation in radians per frame");
  vid->add_flag("--grid-aligned", cmd.grid_aligned, "Axis-aligned squares whose edges fall on patch boundaries");
  vid->add_option("--patch", cmd.patch, "Patch size for --grid-aligned");

  // train / flops share model flags
  std::optional<std::string> preset, strategy;
  std::optional<std::size_t> anchors_one, steps, epochs, batch, knn_k, ckpt_every;
  std::optional<double> anchor_mask_one, target_mask, lr, warmup, wd;
  bool no_augment = false;
  auto* tr = app.add_subcommand("train", "Train a model on a directory of bags");
  tr->add_option("--data", cmd.data, "Directory of bags")->required();
  tr->add_option("--out", cmd.out, "Run directory (checkpoint, logs)")->required();
  tr->add_option("--config", config_path, "key = value config file; flags override it");
  tr->add_option("--preset", preset, "Model preset: tiny, toy, vit-s16, vit-s8");
  tr->add_option("--seed", seed, "Seed");
  tr->add_option("--anchors", anchors_one, "Anchors per sample (N)");
  tr->add_option("--anchor-mask", anchor_mask_one, "Anchor masking ratio");
  tr->add_option("--target-mask", target_mask, "Target masking ratio");
  tr->add_option("--steps", steps, "Optimizer steps (overrides epochs)");
  tr->add_option("--epochs", epochs, "Epochs");
  tr->add_option("--batch-size", batch, "Batch size");
  tr->add_option("--lr", lr, "Base learning rate");
  tr->add_option("--warmup", warmup, "Warmup fraction");
  tr->add_option("--weight-decay", wd, "AdamW weight decay");
  tr->add_option("--strategy", strategy, "always_real, always_generated, random_choice or knn_pair");
  tr->add_option("--knn-k", knn_k, "Neighbors for knn_pair");
  tr->add_option("--checkpoint-every", ckpt_every, "Checkpoint interval in steps (0 = only at the end)");
  tr->add_flag("--no-augment", no_augment, "Disable random resized crops");

  std::vector<std::size_t> anchor_list;
  std::vector<double> anchor_mask_list;
  auto* fl = app.add_subcommand("flops", "Analytic GFLOPs per training sample");
  fl->add_option("--preset", preset, "Model preset");
  fl->add_option("--config", config_path, "key = value config file; flags override it");
  fl->add_option("--anchors", anchor_list, "Anchor counts (list)")->delimiter(',');
  fl->add_option("--anchor-mask", anchor_mask_list, "Anchor masking ratios (list)")->delimiter(',');
  fl->add_option("--target-mask", target_mask, "Target masking ratio");

  // metrics
  std::vector<std::string> pair_specs;
  auto* me = app.add_subcommand("metrics", "View-consistency report (global, local, nearest-patch similarity)");
  me->add_option("--pair", pair_specs, "Feature files A,B (repeatable)");
  me->add_option("--checkpoint", cmd.checkpoint, "Checkpoint directory");
  me->add_option("--bags", cmd.data, "Directory of bags");
  me->add_option("--out", cmd.out, "Write per-pair records to this file");
  me->add_option("--save-features", cmd.save_features, "Write extracted feature files here");
  me->add_option("--seed", seed, "Seed for random pairing");
  me->add_flag("--both-directions", cmd.both_directions, "Also report nearest-patch similarity second-to-first");

  // labelprop
  std::optional<std::size_t> top_k, queue, hood;
  std::optional<double> temperature;
  std::string task = "seg";
  bool no_first = false;
  auto* lp = app.add_subcommand("labelprop", "Label propagation evaluation on a video directory");
  lp->add_option("--data", cmd.data, "Directory of videos")->required();
  lp->add_option("--task", task, "seg, parts or pose");
  auto* lp_ck = lp->add_option("--checkpoint", cmd.checkpoint, "Checkpoint directory");
  auto* lp_id = lp->add_flag("--identity-features", cmd.identity_features, "Use one-hot position features");
  lp_ck->excludes(lp_id);
  lp->add_option("--patch", cmd.patch, "Patch size for --identity-features");
  lp->add_option("--config", config_path, "key = value config file; flags override it");
  lp->add_option("--top-k", top_k, "Neighbors kept per query patch");
  lp->add_option("--queue-length", queue, "Past frames kept in context");
  lp->add_option("--neighborhood", hood, "Spatial radius in patches");
  lp->add_option("--temperature", temperature, "Affinity softmax temperature");
  lp->add_flag("--no-first-frame", no_first, "Do not pin the first frame in context");
  lp->add_option("--out", cmd.out, "Write per-video records to this file");
  lp->add_option("--seed", seed, "Seed (unused by the deterministic evaluation)");

  // gradcheck
  bool tiny = false;
  std::optional<std::size_t> trials;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gc->add_flag("--tiny", tiny, "Include the end-to-end check of the tiny model");
  gc->add_option("--trials", trials, "Trials per check");
  gc->add_option("--seed", seed, "Seed");

  // report
  auto* rp = app.add_subcommand("report", "Summarize record files; optional plot data and SVG");
  rp->add_option("--input", cmd.inputs, "Record file (repeatable)")->required();
  rp->add_option("--out", cmd.out, "Directory for plot files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    cmd.name = "help";
    cmd.help = app.help();
    return cmd;
  } catch (const CLI::CallForAllHelp&) {
    cmd.name = "help";
    cmd.help = app.help("", CLI::AppFormatMode::All);
    return cmd;
  } catch (const CLI::ParseError& e) {
    throw UsageError(e.what());
  }

  cmd.name = app.get_subcommands().front()->get_name();
  if (seed) cmd.seed = *seed;

  try {
    if (cmd.name == "train" || cmd.name == "flops") {
      TrainConfig& t = cmd.train;
      if (cmd.name == "flops") t.model = ModelConfig::preset("vit-s16");
      if (preset) t.model = ModelConfig::preset(*preset);
      auto entries = load_config(config_path);
      if (preset) {
        entries.erase(std::remove_if(entries.begin(), entries.end(),
                                     [](const ConfigEntry& e) { return e.key == "preset"; }),
                      entries.end());
      }
      apply_config_entries(t, entries, config_path);
      if (seed) t.seed = *seed;
      cmd.seed = t.seed;
      assign_if(anchors_one, t.model.num_anchors);
      assign_if(anchor_mask_one, t.model.anchor_mask);
      assign_if(target_mask, t.model.target_mask);
      assign_if(steps, t.steps);
      assign_if(epochs, t.epochs);
      assign_if(batch, t.batch_size);
      assign_if(lr, t.base_lr);
      assign_if(warmup, t.warmup_fraction);
      assign_if(wd, t.weight_decay);
      assign_if(knn_k, t.knn_k);
      assign_if(ckpt_every, t.checkpoint_every);
      if (strategy) t.strategy = parse_strategy(*strategy);
      if (no_augment) t.augment = false;
      t.model.validate();
    }
    if (cmd.name == "flops") {
      if (anchor_list.empty() && anchor_mask_list.empty()) {
        cmd.flops_settings = standard_flops_settings();
      } else {
        if (anchor_list.empty()) anchor_list.push_back(cmd.train.model.num_anchors);
        if (anchor_mask_list.empty()) anchor_mask_list.push_back(cmd.train.model.anchor_mask);
        const std::size_t n = std::max(anchor_list.size(), anchor_mask_list.size());
        if ((anchor_list.size() != n && anchor_list.size() != 1) ||
            (anchor_mask_list.size() != n && anchor_mask_list.size() != 1)) {
          throw UsageError("flops: --anchors and --anchor-mask lists must have equal length or length 1");
        }
        for (std::size_t i = 0; i < n; ++i) {
          cmd.flops_settings.emplace_back(anchor_list[anchor_list.size() == 1 ? 0 : i],
                                          anchor_mask_list[anchor_mask_list.size() == 1 ? 0 : i]);
        }
        cmd.train.model.num_anchors = cmd.flops_settings.front().first;
        cmd.train.model.anchor_mask = cmd.flops_settings.front().second;
      }
    }
    if (cmd.name == "metrics") {
      for (const auto& spec : pair_specs) {
        const auto comma = spec.find(',');
        if (comma == std::string::npos || comma == 0 || comma + 1 == spec.size()) {
          throw UsageError("metrics: --pair expects A,B, got '" + spec + "'");
        }
        cmd.feature_pairs.emplace_back(spec.substr(0, comma), spec.substr(comma + 1));
      }
      const bool from_model = !cmd.checkpoint.empty() || !cmd.data.empty();
      if (cmd.feature_pairs.empty() == !from_model) {
        throw UsageError("metrics: give either --pair files or --checkpoint with --bags");
      }
      if (from_model && (cmd.checkpoint.empty() || cmd.data.empty())) {
        throw UsageError("metrics: --checkpoint and --bags go together");
      }
    }
    if (cmd.name == "labelprop") {
      cmd.task = parse_task(task);
      for (const auto& e : load_config(config_path)) {
        bool known = false;
        try {
          known = apply_propagation_key(cmd.propagation, e.key, e.value);
        } catch (const ContractError& err) {
          throw ContractError(config_path + ":" + std::to_string(e.line) + ": " + err.what());
        }
        if (!known) throw ContractError(config_path + ":" + std::to_string(e.line) + ": unknown key '" + e.key + "'");
      }
      assign_if(top_k, cmd.propagation.top_k);
      assign_if(queue, cmd.propagation.queue_length);
      assign_if(hood, cmd.propagation.neighborhood);
      assign_if(temperature, cmd.propagation.temperature);
      if (no_first) cmd.propagation.include_first_frame = false;
      cmd.propagation.validate();
      if (!cmd.identity_features && cmd.checkpoint.empty()) {
        throw UsageError("labelprop: give --checkpoint or --identity-features");
      }
      if (cmd.patch == 0) throw UsageError("labelprop: --patch must be positive");
    }
    if (cmd.name == "gradcheck") {
      cmd.gradcheck.seed = cmd.seed;
      cmd.gradcheck.include_model = tiny;
      cmd.gradcheck.model_preset = "tiny";
      assign_if(trials, cmd.gradcheck.trials);
    }
    if (cmd.name == "synth-views" || cmd.name == "synth-video") {
      if (cmd.count == 0 || cmd.size == 0) throw UsageError(cmd.name + ": --count and --size must be positive");
    }
  } catch (const ContractError& e) {
    throw UsageError(e.what());
  }
  return cmd;
}

int run(const Command& c, std::ostream& out, std::ostream& err) {
  (void)err;
  if (c.name == "help") {
    out << c.help;
    return kOk;
  }
  if (c.name == "synth-views") return run_synth_views(c, out);
  if (c.name == "synth-video") return run_synth_video(c, out);
  if (c.name == "train") return run_train(c, out);
  if (c.name == "flops") return run_flops(c, out);
  if (c.name == "metrics") return run_metrics(c, out);
  if (c.name == "labelprop") return run_labelprop(c, out);
  if (c.name == "gradcheck") return run_gradcheck(c, out);
  if (c.name == "report") return run_report(c, out);
  throw UsageError("unknown command '" + c.name + "'");
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  try {
    return run(parse_args(argc, argv), out, err);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\nrun with --help for usage\n";
    return kUsage;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const DegenerateInputError& e) {
    err << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  }
}

}  // namespace cdgmae::cli
