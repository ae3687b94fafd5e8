// odmn: data generation, training, online prediction and texture analysis.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "odmn/equilibrium.hpp"
#include "odmn/io.hpp"
#include "odmn/texture.hpp"
#include "odmn/trainer.hpp"

namespace {

using namespace odmn;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

std::array<int, 3> parse_miller(const std::string &s) {
  std::array<int, 3> hkl{};
  if (s.find(',') != std::string::npos) {
    std::istringstream in(s);
    std::string part;
    int k = 0;
    while (std::getline(in, part, ',')) {
      if (k == 3) throw UsageError("pole needs three indices: " + s);
      try {
        hkl[k++] = std::stoi(part);
      } catch (const std::exception &) {
        throw UsageError("bad pole index: " + s);
      }
    }
    if (k != 3) throw UsageError("pole needs three indices: " + s);
    return hkl;
  }
  if (s.size() != 3) throw UsageError("pole must be three digits (e.g. 111) or h,k,l");
  for (int k = 0; k < 3; ++k) {
    if (s[k] < '0' || s[k] > '9') throw UsageError("bad pole index: " + s);
    hkl[k] = s[k] - '0';
  }
  return hkl;
}

/// Orientation dump (CSV) or checkpoint (JSON), told apart by content.
OrientationSamples load_orientations(const std::string &path, long step) {
  const std::string text = io::read_file(path);
  if (text.rfind("step,node", 0) == 0) return io::orientations_from_csv(text, step, path);
  return orientations_from_params(io::checkpoint_from_string(text, path).params);
}

struct TextureOptions {
  double halfwidth_deg = 10.0;
  int grid = kDefaultGridCirclePoints;
};

void add_texture_options(CLI::App *cmd, TextureOptions &o) {
  cmd->add_option("--halfwidth", o.halfwidth_deg, "Kernel halfwidth in degrees")->check(CLI::Range(0.5, 90.0));
  cmd->add_option("--grid", o.grid, "Grid circle points (156 gives about 5e4 cells)")->check(CLI::Range(8, 400));
}

/// Shortest round-trip form, always with a decimal point or exponent.
std::string real(double x) {
  std::string s = io::fmt(x);
  if (s.find_first_of(".en") == std::string::npos) s += ".0";
  return s;
}

double compare(const OrientationSamples &a, const OrientationSamples &b, const TextureOptions &o) {
  const auto grid = make_orientation_grid(o.grid);
  const OdfKernel kernel{degrees(o.halfwidth_deg)};
  return texture_index_diff(odf_estimate(a, grid, kernel), odf_estimate(b, grid, kernel));
}

int run(int argc, char **argv) {
  CLI::App app{"Orientation-aware interaction-based deep material network"};
  app.require_subcommand(1);

  // gen-data
  auto *gen = app.add_subcommand("gen-data", "Synthesize a stiffness dataset from a teacher network");
  std::string gen_teacher, gen_out, gen_save_teacher, gen_mode = "two-phase";
  std::size_t gen_samples = 500;
  std::uint64_t gen_seed = 0;
  int gen_depth = 4;
  std::optional<double> gen_fraction;
  gen->add_option("--teacher", gen_teacher, "Teacher checkpoint (random teacher when omitted)");
  gen->add_option("--teacher-depth", gen_depth, "Depth of the random teacher")->check(CLI::Range(1, 12));
  gen->add_option("--fraction", gen_fraction, "Phase-1 volume fraction encoded in the random teacher");
  gen->add_option("--save-teacher", gen_save_teacher, "Write the teacher checkpoint here");
  gen->add_option("--mode", gen_mode, "two-phase or single")->check(CLI::IsMember({"two-phase", "single"}));
  gen->add_option("--samples", gen_samples, "Number of samples");
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--out", gen_out, "Output dataset (JSON lines)")->required();

  // train
  auto *tr = app.add_subcommand("train", "Fit network parameters to a dataset");
  std::string tr_data, tr_out, tr_curves;
  TrainConfig cfg;
  tr->add_option("--data", tr_data, "Dataset (JSON lines)")->required();
  tr->add_option("--out", tr_out, "Output checkpoint")->required();
  tr->add_option("--curves", tr_curves, "Error curves CSV");
  tr->add_option("--depth", cfg.depth, "Network depth N")->check(CLI::Range(1, 12));
  tr->add_option("--epochs", cfg.epochs, "Epochs");
  tr->add_option("--lr", cfg.learning_rate, "Learning rate");
  tr->add_option("--batch", cfg.batch_size, "Minibatch size");
  tr->add_option("--weight-decay", cfg.weight_decay, "Decoupled weight decay");
  tr->add_option("--validation", cfg.validation_count, "Validation samples");
  tr->add_option("--seed", cfg.seed, "Random seed");
  bool tr_quiet = false;
  tr->add_flag("--quiet", tr_quiet, "No per-epoch output");

  // predict
  auto *pr = app.add_subcommand("predict", "Run a load path through a trained network");
  std::string pr_ckpt, pr_material, pr_path, pr_out, pr_orient;
  SolverConfig solver;
  pr->add_option("--checkpoint", pr_ckpt, "Checkpoint")->required();
  pr->add_option("--material", pr_material, "Material file (MPa)")->required();
  pr->add_option("--path", pr_path, "Load path file")->required();
  pr->add_option("--out", pr_out, "History CSV")->required();
  pr->add_option("--dump-orientations", pr_orient, "Per-step node orientations CSV");
  pr->add_option("--tol-rel", solver.tol_rel, "Relative residual tolerance");
  pr->add_option("--max-iterations", solver.max_iterations, "Newton iteration limit");
  pr->add_option("--max-bisections", solver.max_bisections, "Load increment bisection depth");

  // texture
  auto *tx = app.add_subcommand("texture", "Pole figures, ODF grids and texture indices");
  std::string tx_input, tx_compare, tx_pole, tx_out, tx_odf;
  long tx_step = -1;
  TextureOptions tx_opt;
  tx->add_option("--input", tx_input, "Checkpoint or orientation dump")->required();
  tx->add_option("--step", tx_step, "Step of an orientation dump (default: last)");
  tx->add_option("--pole", tx_pole, "Pole family, e.g. 111 or 1,-1,0");
  tx->add_option("--out", tx_out, "Pole-figure CSV (default: stdout)");
  tx->add_option("--compare", tx_compare, "Reference orientations; prints the texture index");
  tx->add_option("--odf-out", tx_odf, "Write the ODF grid CSV");
  add_texture_options(tx, tx_opt);

  // compare-odf
  auto *co = app.add_subcommand("compare-odf", "Texture index of the difference ODF, reference second");
  std::string co_a, co_b;
  long co_step_a = -1, co_step_b = -1;
  TextureOptions co_opt;
  co->add_option("input", co_a, "Orientations to assess")->required();
  co->add_option("reference", co_b, "Reference orientations")->required();
  co->add_option("--step", co_step_a, "Step of the first dump");
  co->add_option("--reference-step", co_step_b, "Step of the reference dump");
  add_texture_options(co, co_opt);

  // gradcheck
  auto *gc = app.add_subcommand("gradcheck", "Compare the tape gradient with finite differences");
  int gc_depth = 3, gc_points = 10;
  std::size_t gc_batch = 5;
  std::uint64_t gc_seed = 0;
  gc->add_option("--depth", gc_depth, "Network depth")->check(CLI::Range(1, 8));
  gc->add_option("--points", gc_points, "Random parameter points");
  gc->add_option("--batch", gc_batch, "Samples per batch");
  gc->add_option("--seed", gc_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  if (*gen) {
    if (gen_samples == 0) throw UsageError("--samples must be positive");
    Rng rng(gen_seed);
    ParameterSet teacher;
    if (!gen_teacher.empty()) {
      if (gen_fraction) throw UsageError("--fraction applies to random teachers only");
      teacher = io::load_checkpoint(gen_teacher).params;
    } else {
      teacher = init_parameters(gen_depth, rng);
      if (gen_fraction) encode_phase_one_fraction(teacher, *gen_fraction);
    }
    const PhaseMode mode = gen_mode == "single" ? PhaseMode::single : PhaseMode::two_phase;
    const Dataset data = synthesize_teacher_dataset(teacher, mode, gen_samples, rng);
    io::save_dataset(gen_out, data);
    if (!gen_save_teacher.empty()) io::save_checkpoint(gen_save_teacher, {teacher, {gen_seed, "", 0}});
    std::printf("wrote %zu samples to %s (seed %llu, mode %s, teacher depth %d)\n", data.samples.size(),
                gen_out.c_str(), static_cast<unsigned long long>(gen_seed), gen_mode.c_str(), teacher.depth);
    return 0;
  }

  if (*tr) {
    const std::string text = io::read_file(tr_data);
    const Dataset data = io::dataset_from_string(text, tr_data);
    const TrainResult r = train(data, cfg, std::nullopt, [&](const EpochErrors &e, const ParameterSet &) {
      if (!tr_quiet) std::printf("epoch %d train %.6e val %.6e\n", e.epoch, e.train_error, e.val_error);
    });
    io::save_checkpoint(tr_out, {r.params, {cfg.seed, io::content_hash(text), cfg.epochs}});
    if (!tr_curves.empty()) io::write_file(tr_curves, io::curves_csv(r.curves));
    std::printf("final train error %.6e, validation error %.6e\n", r.curves.back().train_error,
                r.curves.back().val_error);
    return 0;
  }

  if (*pr) {
    const ParameterSet params = io::load_checkpoint(pr_ckpt).params;
    const io::MaterialSpec material = io::load_material(pr_material);
    const std::vector<LoadStep> steps = io::load_load_path(pr_path);
    const OnlineModel model = io::build_online_model(params, material);

    std::ofstream hist(pr_out, std::ios::binary | std::ios::trunc);
    if (!hist) throw DataError("cannot write " + pr_out);
    hist << io::history_header();
    std::ofstream orient;
    if (!pr_orient.empty()) {
      orient.open(pr_orient, std::ios::binary | std::ios::trunc);
      if (!orient) throw DataError("cannot write " + pr_orient);
      orient << io::orientation_header() << io::orientation_rows(0, orientations_from_params(params));
    }
    std::size_t done = 0;
    run_path(model, steps, solver, [&](std::size_t k, const StepResult &r) {
      hist << io::history_row(k + 1, r) << std::flush;
      if (orient.is_open()) {
        std::vector<Mat3> rot;
        for (const auto &n : r.nodes) rot.push_back(n.rotation);
        orient << io::orientation_rows(k + 1, orientations_from_rotations(rot, model.weights)) << std::flush;
      }
      done = k + 1;
    });
    std::printf("converged %zu steps, history in %s\n", done, pr_out.c_str());
    return 0;
  }

  if (*tx) {
    const OrientationSamples samples = load_orientations(tx_input, tx_step);
    bool did = false;
    if (!tx_pole.empty()) {
      const std::string csv = io::pole_figure_csv(pole_figure(samples, parse_miller(tx_pole)));
      if (tx_out.empty()) std::fwrite(csv.data(), 1, csv.size(), stdout);
      else io::write_file(tx_out, csv);
      did = true;
    }
    if (!tx_odf.empty()) {
      const OdfKernel kernel{degrees(tx_opt.halfwidth_deg)};
      io::write_file(tx_odf, io::odf_csv(odf_estimate(samples, make_orientation_grid(tx_opt.grid), kernel)));
      did = true;
    }
    if (!tx_compare.empty()) {
      std::printf("%s\n", real(compare(samples, load_orientations(tx_compare, -1), tx_opt)).c_str());
      did = true;
    }
    if (!did) throw UsageError("texture needs --pole, --odf-out or --compare");
    return 0;
  }

  if (*co) {
    const double t = compare(load_orientations(co_a, co_step_a), load_orientations(co_b, co_step_b), co_opt);
    std::printf("%s\n", real(t).c_str());
    return 0;
  }

  if (*gc) {
    const GradCheckResult r = gradient_check(gc_depth, gc_points, gc_batch, gc_seed);
    for (std::size_t k = 0; k < r.per_point.size(); ++k) std::printf("point %zu: %.3e\n", k, r.per_point[k]);
    std::printf("max relative error %.3e\n", r.max_error);
    return 0;
  }
  return kExitUsage;
}

} // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const DataError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const NumericalError &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitNumerical;
  } catch (const std::exception &e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
