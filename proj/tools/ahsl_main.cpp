// Command-line front end for the anatomy-hierarchy supervised segmentation
// pipeline. Machine-readable JSON (or JSONL) goes to stdout; human logs go
// to stderr. All randomness is controlled by seed flags.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ahsl/ahsl.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code_for(const ahsl::Error& e) {
  return e.code() == ahsl::errc::non_finite ? 3 : 2;
}

std::ofstream open_text(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) ahsl::fail(ahsl::errc::io_failure, "cannot open " + path.string() + " for writing");
  return out;
}

struct PhantomArgs {
  std::uint64_t seed = 42;
  int size = 48;
  std::string out_dir;
  double radius = 1.5;
  int depth = 3;
  double len_min = 4.0;
  double len_max = 9.0;
};

void run_phantom(const PhantomArgs& a) {
  ahsl::PhantomSpec spec;
  spec.depth = spec.height = spec.width = a.size;
  spec.seed = a.seed;
  spec.tube_radius = a.radius;
  spec.branch_depth = a.depth;
  spec.branch_len_min = a.len_min;
  spec.branch_len_max = a.len_max;

  const auto& h = ahsl::hierarchy();
  const ahsl::PhantomBundle bundle = ahsl::generate_phantom(spec, h);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  ahsl::write_svol(bundle.bv, dir / "bv.svol");
  ahsl::write_svol(bundle.lobe, dir / "lobe.svol");
  ahsl::write_svol(bundle.gt, dir / "gt.svol");
  open_text(dir / "skeletons.json") << ahsl::skeletons_json(bundle, h).dump() << '\n';

  std::int64_t bv_voxels = 0, lobe_voxels = 0;
  for (auto v : bundle.bv.data) bv_voxels += v != 0;
  for (auto v : bundle.lobe.data) lobe_voxels += v != 0;
  json out{{"out_dir", a.out_dir},
           {"seed", a.seed},
           {"size", a.size},
           {"bv_voxels", bv_voxels},
           {"lobe_voxels", lobe_voxels},
           {"files", {"bv.svol", "lobe.svol", "gt.svol", "skeletons.json"}}};
  std::cout << out.dump() << '\n';
}

void run_synth_gt(const std::string& bv_path, const std::string& lobe_path,
                  const std::string& out_path) {
  const auto bv = ahsl::read_svol_labels(bv_path);
  const auto lobe = ahsl::read_svol_labels(lobe_path);
  const auto gt = ahsl::synthesize_gt_by_distance(bv, lobe, ahsl::hierarchy());
  ahsl::write_svol(gt, out_path);
  std::int64_t labeled = 0;
  for (auto v : gt.data) labeled += v != 0;
  std::cout << json{{"out", out_path}, {"labeled_voxels", labeled}}.dump() << '\n';
}

struct LossArgs {
  std::string logits_path, probs_path, bv_path, lobe_path;
  ahsl::LossConfig cfg;
};

void run_loss(const LossArgs& a) {
  const auto bv = ahsl::read_svol_labels(a.bv_path);
  const auto lobe = ahsl::read_svol_labels(a.lobe_path);
  const auto& h = ahsl::hierarchy();
  const auto region = ahsl::derive_regions(bv, lobe, h);

  ahsl::LossBreakdown breakdown;
  if (!a.logits_path.empty()) {
    const auto logits = ahsl::read_svol_field(a.logits_path);
    breakdown = ahsl::total_loss_and_grad(logits, region, h, a.cfg).first;
  } else {
    const auto p = ahsl::ProbabilityField::validated(ahsl::read_svol_field(a.probs_path));
    breakdown = ahsl::total_loss(p, region, h, a.cfg);
  }
  std::cout << json(breakdown).dump() << '\n';
}

struct OptimizeArgs {
  std::string bv_path, lobe_path, out_dir;
  ahsl::OptimizeConfig cfg;
};

void run_optimize(const OptimizeArgs& a) {
  const auto bv = ahsl::read_svol_labels(a.bv_path);
  const auto lobe = ahsl::read_svol_labels(a.lobe_path);
  const auto& h = ahsl::hierarchy();
  const auto region = ahsl::derive_regions(bv, lobe, h);

  const ahsl::OptimizeTrace trace = ahsl::optimize_logits(region, h, a.cfg);

  fs::create_directories(a.out_dir);
  const fs::path dir(a.out_dir);
  auto trace_file = open_text(dir / "trace.jsonl");
  for (const auto& entry : trace.entries) {
    const std::string line = json(entry).dump();
    trace_file << line << '\n';
    std::cout << line << '\n';
  }
  ahsl::write_svol(trace.final_logits, dir / "final_logits.svol", "logits");
  ahsl::write_svol(trace.final_partition, dir / "final_partition.svol");
}

struct EvalArgs {
  std::string pred_path, structure_path, lobe_path;
};

void run_eval(const EvalArgs& a) {
  const auto pred = ahsl::read_svol_labels(a.pred_path);
  const auto structure = ahsl::read_svol_labels(a.structure_path);
  const auto& h = ahsl::hierarchy();

  json out;
  out["mapped_dice"] = ahsl::mapped_dice_json(ahsl::mapped_dice(pred, structure), h);
  out["holes"] = ahsl::holes_json(ahsl::count_holes(pred), h);
  if (!a.lobe_path.empty()) {
    const auto lobe = ahsl::read_svol_labels(a.lobe_path);
    const auto region = ahsl::derive_regions(structure, lobe, h);
    out["lobe_consistency"] = ahsl::lobe_consistency(pred, region, h);
  }
  std::cout << out.dump() << '\n';
}

struct GradCheckArgs {
  std::string bv_path, lobe_path;
  int samples = 200;
  std::uint64_t seed = 1;
  ahsl::LossConfig cfg;
};

void run_grad_check(const GradCheckArgs& a) {
  const auto bv = ahsl::read_svol_labels(a.bv_path);
  const auto lobe = ahsl::read_svol_labels(a.lobe_path);
  const auto& h = ahsl::hierarchy();
  const auto region = ahsl::derive_regions(bv, lobe, h);
  const double err = ahsl::grad_check(region, h, a.cfg, a.samples, a.seed);
  std::cout << json{{"max_rel_error", err}, {"samples", a.samples}, {"seed", a.seed}}.dump() << '\n';
}

struct SliceArgs {
  std::string in_path, axis = "z", out_path;
  int index = 0;
  int channel = 0;
};

void run_export_slice(const SliceArgs& a) {
  const ahsl::SliceAxis axis = ahsl::parse_axis(a.axis);
  const ahsl::SvolVolume vol = ahsl::read_svol(a.in_path);
  if (std::holds_alternative<ahsl::LabelVolume>(vol)) {
    ahsl::export_slice_pgm(std::get<ahsl::LabelVolume>(vol), axis, a.index, a.out_path);
  } else {
    ahsl::export_slice_pgm(std::get<ahsl::ScalarField4D>(vol), axis, a.index, a.channel, a.out_path);
  }
  std::cout << json{{"out", a.out_path}}.dump() << '\n';
}

void add_lambda_options(CLI::App* sub, ahsl::LossConfig& cfg, std::string& norm) {
  sub->add_option("--lambda1", cfg.lambda1, "Weight of the indirect (lobe-level) term");
  sub->add_option("--lambda2", cfg.lambda2, "Weight of the consistency term");
  sub->add_option("--consistency-norm", norm, "Consistency normalization: mean or sum")
      ->check(CLI::IsMember({"mean", "sum"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anatomy-hierarchy supervised segmentation toolkit"};
  app.require_subcommand(1);
  int threads = 1;
  app.add_option("--threads", threads, "Worker threads; 1 is the bit-exact reference mode");

  PhantomArgs phantom;
  auto* sub_phantom = app.add_subcommand("phantom", "Generate a synthetic lung phantom");
  sub_phantom->add_option("--seed", phantom.seed, "RNG seed");
  sub_phantom->add_option("--size", phantom.size, "Cubic grid size")->check(CLI::PositiveNumber);
  sub_phantom->add_option("--out-dir", phantom.out_dir, "Output directory")->required();
  sub_phantom->add_option("--radius", phantom.radius, "Tube radius in voxels");
  sub_phantom->add_option("--depth", phantom.depth, "Branching depth");
  sub_phantom->add_option("--len-min", phantom.len_min, "Min branch length");
  sub_phantom->add_option("--len-max", phantom.len_max, "Max branch length");

  std::string sg_bv, sg_lobe, sg_out;
  auto* sub_synth = app.add_subcommand("synth-gt", "Distance-based segment ground truth");
  sub_synth->add_option("--bv", sg_bv, "Bronchovascular labels (svol)")->required();
  sub_synth->add_option("--lobe", sg_lobe, "Lobe labels (svol)")->required();
  sub_synth->add_option("--out", sg_out, "Output partition (svol)")->required();

  LossArgs loss;
  std::string loss_norm = "mean";
  auto* sub_loss = app.add_subcommand("loss", "Evaluate the loss breakdown");
  sub_loss->add_option("--logits", loss.logits_path, "Logit field (svol)");
  sub_loss->add_option("--probs", loss.probs_path, "Probability field (svol)");
  sub_loss->add_option("--bv", loss.bv_path, "Bronchovascular labels")->required();
  sub_loss->add_option("--lobe", loss.lobe_path, "Lobe labels")->required();
  add_lambda_options(sub_loss, loss.cfg, loss_norm);

  OptimizeArgs opt;
  std::string opt_norm = "mean";
  auto* sub_opt = app.add_subcommand("optimize", "Optimize a free logit field");
  sub_opt->add_option("--bv", opt.bv_path, "Bronchovascular labels")->required();
  sub_opt->add_option("--lobe", opt.lobe_path, "Lobe labels")->required();
  sub_opt->add_option("--out-dir", opt.out_dir, "Output directory")->required();
  sub_opt->add_option("--iters", opt.cfg.iterations, "Iteration count");
  sub_opt->add_option("--lr", opt.cfg.learning_rate, "Learning rate");
  sub_opt->add_option("--momentum", opt.cfg.momentum, "Momentum");
  sub_opt->add_option("--seed", opt.cfg.seed, "Init RNG seed");
  sub_opt->add_option("--sigma", opt.cfg.init_sigma, "Init noise sigma");
  sub_opt->add_option("--log-period", opt.cfg.log_period, "Trace logging period");
  add_lambda_options(sub_opt, opt.cfg.loss, opt_norm);

  EvalArgs eval;
  auto* sub_eval = app.add_subcommand("eval", "Mapped Dice, hole count, lobe consistency");
  sub_eval->add_option("--pred", eval.pred_path, "Predicted partition (svol)")->required();
  sub_eval->add_option("--structure-gt", eval.structure_path, "Structure GT labels")->required();
  sub_eval->add_option("--lobe", eval.lobe_path, "Lobe labels (enables lobe consistency)");

  GradCheckArgs gc;
  std::string gc_norm = "mean";
  auto* sub_gc = app.add_subcommand("grad-check", "Finite-difference gradient check");
  sub_gc->add_option("--bv", gc.bv_path, "Bronchovascular labels")->required();
  sub_gc->add_option("--lobe", gc.lobe_path, "Lobe labels")->required();
  sub_gc->add_option("--samples", gc.samples, "Sampled coordinates");
  sub_gc->add_option("--seed", gc.seed, "RNG seed");
  add_lambda_options(sub_gc, gc.cfg, gc_norm);

  SliceArgs slice;
  auto* sub_slice = app.add_subcommand("export-slice", "Export a slice as PGM");
  sub_slice->add_option("--in", slice.in_path, "Input volume (svol)")->required();
  sub_slice->add_option("--axis", slice.axis, "Slice axis")->check(CLI::IsMember({"z", "y", "x"}));
  sub_slice->add_option("--index", slice.index, "Slice index")->required();
  sub_slice->add_option("--channel", slice.channel, "Channel for f32 fields");
  sub_slice->add_option("--out", slice.out_path, "Output PGM path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  ahsl::set_thread_count(threads);
  auto parse_norm = [](const std::string& n) {
    return n == "sum" ? ahsl::ConsistencyNorm::sum : ahsl::ConsistencyNorm::mean;
  };
  loss.cfg.consistency_norm = parse_norm(loss_norm);
  opt.cfg.loss.consistency_norm = parse_norm(opt_norm);
  gc.cfg.consistency_norm = parse_norm(gc_norm);

  try {
    if (sub_phantom->parsed()) {
      run_phantom(phantom);
    } else if (sub_synth->parsed()) {
      run_synth_gt(sg_bv, sg_lobe, sg_out);
    } else if (sub_loss->parsed()) {
      if (loss.logits_path.empty() == loss.probs_path.empty()) {
        std::cerr << "loss: exactly one of --logits / --probs is required\n";
        return 1;
      }
      run_loss(loss);
    } else if (sub_opt->parsed()) {
      run_optimize(opt);
    } else if (sub_eval->parsed()) {
      run_eval(eval);
    } else if (sub_gc->parsed()) {
      run_grad_check(gc);
    } else if (sub_slice->parsed()) {
      run_export_slice(slice);
    }
  } catch (const ahsl::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
