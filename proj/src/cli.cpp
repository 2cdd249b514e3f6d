#include "mfa/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <string>

#include "json.hpp"
#include "mfa/dataset.hpp"
#include "mfa/error.hpp"
#include "mfa/gradcheck_suite.hpp"
#include "mfa/image_io.hpp"
#include "mfa/run_config.hpp"
#include "mfa/tensor_io.hpp"
#include "mfa/training.hpp"

namespace mfa {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct SynthArgs {
  std::string out;
  int count = 8;
  int size = 64;
  std::uint64_t seed = 0;
};

struct PreprocessArgs {
  std::string in, out;
  double window_center = 40.0;
  double window_width = 400.0;
  double clahe_clip = 2.0;
  int clahe_tiles = 4;
};

struct TrainArgs {
  std::string config, data, out;
};

struct EvalArgs {
  std::string ckpt, data, report, overlays;
};

struct AblateArgs {
  std::string config, data, out;
};

/// Default phantom geometry is tuned for 64 pixels; other sizes scale the radii.
PhantomSpec phantom_for_size(int size, int count, std::uint64_t seed) {
  PhantomSpec spec;
  const double scale = size / 64.0;
  spec.size = size;
  spec.count = count;
  spec.seed = seed;
  spec.organ_radius_min *= scale;
  spec.organ_radius_max *= scale;
  spec.lesion_radius_min *= scale;
  spec.lesion_radius_max *= scale;
  return spec;
}

void require_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("data directory " + dir + " does not exist");
}

ordered_json metrics_json(const CaseMetrics& m) {
  return {{"dice", m.dice}, {"jaccard", m.jaccard}, {"pixel_accuracy", m.pixel_accuracy}};
}

fs::path curve_path(const fs::path& checkpoint) {
  fs::path p = checkpoint;
  return p.replace_extension(".curve.csv");
}

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  const PhantomSpec spec = phantom_for_size(a.size, a.count, a.seed);
  spec.validate();
  write_phantom_dataset(a.out, spec);
  double fraction = 0;
  for (int i = 0; i < spec.count; ++i) {
    const auto mask = generate_phantom(spec, i).mask;
    fraction += static_cast<double>(mask.count()) / static_cast<double>(mask.labels.size());
  }
  ordered_json j{{"command", "synth"},       {"out", a.out},   {"count", a.count},
                 {"size", a.size},           {"seed", a.seed}, {"kind", "hu"},
                 {"mean_lesion_fraction", spec.count ? fraction / spec.count : 0.0}};
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_preprocess(const PreprocessArgs& a, std::ostream& out) {
  const WindowParams window{a.window_center, a.window_width};
  const ClaheParams clahe_params{a.clahe_tiles, a.clahe_tiles, a.clahe_clip, 256};
  window.validate();
  clahe_params.validate();
  require_dataset(a.in);
  preprocess_dataset(a.in, a.out, window, clahe_params);
  ordered_json j{{"command", "preprocess"},
                 {"in", a.in},
                 {"out", a.out},
                 {"count", read_manifest(a.out).entries.size()},
                 {"window_center", a.window_center},
                 {"window_width", a.window_width},
                 {"clahe_clip", a.clahe_clip},
                 {"clahe_tiles", a.clahe_tiles}};
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const SuiteReport report = run_gradcheck_suite(seed);
  for (const auto& item : report.items) {
    err << (item.passed() ? "ok   " : "FAIL ") << item.name << "  max rel err " << item.max_relative_error
        << " (threshold " << item.threshold << ", " << item.checked << " probes)\n";
  }
  err << "suite time " << report.seconds << " s\n";
  out << report.to_json();
  if (report.passed()) return kExitOk;
  err << "failing items:";
  for (const auto& name : report.failures()) err << " " << name;
  err << "\n";
  return kExitRuntime;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = RunConfig::load(a.config);
  require_dataset(a.data);
  const auto samples = load_samples(a.data);
  auto net = Network<float>::build(cfg.network, cfg.train.seed);
  err << "training " << to_string(cfg.network.variant) << " (" << net.num_params() << " parameters) on "
      << samples.size() << " cases for " << cfg.train.max_steps << " steps\n";
  const auto result = train(net, samples, samples, cfg.train, [&](const CurvePoint& p) {
    if (p.val_dice) err << "step " << p.step + 1 << "  loss " << p.loss << "  train dice " << *p.val_dice << "\n";
  });
  save_checkpoint(net, a.out);
  const fs::path curve = curve_path(a.out);
  write_file_atomic(curve, curve_csv(result.curve));
  ordered_json j{{"command", "train"},
                 {"checkpoint", a.out},
                 {"curve", curve.string()},
                 {"variant", to_string(cfg.network.variant)},
                 {"num_params", net.num_params()},
                 {"steps", cfg.train.max_steps},
                 {"seed", cfg.train.seed},
                 {"cases", samples.size()},
                 {"final_loss", result.curve.empty() ? 0.0 : result.curve.back().loss},
                 {"final_train_dice", result.final_val_dice}};
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  if (!fs::exists(a.ckpt)) throw ValidationError("checkpoint " + a.ckpt + " does not exist");
  require_dataset(a.data);
  const auto net = load_checkpoint<float>(a.ckpt);
  const auto samples = load_samples(a.data);
  for (const auto& s : samples) {
    if (s.image.width != net.config().input_size || s.image.height != net.config().input_size) {
      throw ValidationError("case " + s.id + " does not match the checkpoint input_size " +
                            std::to_string(net.config().input_size));
    }
  }
  const auto preds = predict(net, samples);
  std::vector<std::string> ids;
  std::vector<SegmentationMask> gts;
  for (const auto& s : samples) {
    ids.push_back(s.id);
    gts.push_back(s.mask);
  }
  const MetricsReport report = evaluate_cases(ids, preds, gts);
  if (!a.overlays.empty()) {
    fs::create_directories(a.overlays);
    for (std::size_t i = 0; i < samples.size(); ++i)
      write_png(fs::path(a.overlays) / (samples[i].id + ".png"), overlay_png(samples[i].image, preds[i], gts[i]));
  }
  write_file_atomic(a.report, report.to_json());
  ordered_json j{{"command", "eval"},
                 {"checkpoint", a.ckpt},
                 {"report", a.report},
                 {"cases", samples.size()},
                 {"mean", metrics_json(report.mean)}};
  out << j.dump() << "\n";
  return kExitOk;
}

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = RunConfig::load(a.config);
  require_dataset(a.data);
  const auto samples = load_samples(a.data);
  const auto report = run_ablation(samples, cfg.network, cfg.train, [&](Variant v, const CurvePoint& p) {
    if ((p.step + 1) % 50 == 0) err << to_string(v) << " step " << p.step + 1 << "  loss " << p.loss << "\n";
  });
  const std::string text = report.to_json();
  write_file_atomic(a.out, text);
  out << text;
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-scale attention U-Net segmentation toolkit"};
  app.name("mfanet");
  app.require_subcommand(1);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Generate a synthetic CT phantom dataset");
  c_synth->add_option("--out", synth.out, "Output dataset directory")->required();
  c_synth->add_option("--count", synth.count, "Number of phantoms")->capture_default_str();
  c_synth->add_option("--size", synth.size, "Image side length in pixels")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();

  PreprocessArgs pre;
  auto* c_pre = app.add_subcommand("preprocess", "Window and CLAHE-enhance an HU dataset");
  c_pre->add_option("--in", pre.in, "Input HU dataset directory")->required();
  c_pre->add_option("--out", pre.out, "Output directory")->required();
  c_pre->add_option("--window-center", pre.window_center, "Window center (HU)")->capture_default_str();
  c_pre->add_option("--window-width", pre.window_width, "Window width (HU)")->capture_default_str();
  c_pre->add_option("--clahe-clip", pre.clahe_clip, "CLAHE clip limit")->capture_default_str();
  c_pre->add_option("--clahe-tiles", pre.clahe_tiles, "CLAHE tiles per side")->capture_default_str();

  std::uint64_t gc_seed = 0;
  auto* c_gc = app.add_subcommand("gradcheck", "Run the finite-difference gradient suite");
  c_gc->add_option("--seed", gc_seed, "Suite seed")->capture_default_str();

  TrainArgs tr;
  auto* c_train = app.add_subcommand("train", "Train a network and write a checkpoint");
  c_train->add_option("--config", tr.config, "Run config file")->required();
  c_train->add_option("--data", tr.data, "Dataset directory")->required();
  c_train->add_option("--out", tr.out, "Checkpoint path; the loss curve goes next to it")->required();

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint path")->required();
  c_eval->add_option("--data", ev.data, "Dataset directory")->required();
  c_eval->add_option("--report", ev.report, "Metrics JSON output")->required();
  c_eval->add_option("--overlays", ev.overlays, "Optional directory for prediction overlay PNGs");

  AblateArgs ab;
  auto* c_ab = app.add_subcommand("ablate", "Train and compare all four attention variants");
  c_ab->add_option("--config", ab.config, "Run config file")->required();
  c_ab->add_option("--data", ab.data, "Dataset directory")->required();
  c_ab->add_option("--out", ab.out, "Ablation JSON output")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (c_synth->parsed()) return cmd_synth(synth, out);
    if (c_pre->parsed()) return cmd_preprocess(pre, out);
    if (c_gc->parsed()) return cmd_gradcheck(gc_seed, out, err);
    if (c_train->parsed()) return cmd_train(tr, out, err);
    if (c_eval->parsed()) return cmd_eval(ev, out);
    if (c_ab->parsed()) return cmd_ablate(ab, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "failure: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace mfa
