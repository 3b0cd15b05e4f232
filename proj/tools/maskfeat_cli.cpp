// Command-line front end: HOG extraction, mask generation, sample assembly,
// toy training and HOG glyph rendering.
//
// Exit codes: 0 ok, 1 usage, 2 IO/format, 3 invalid input (divisibility,
// shape mismatch, empty mask), 4 mask generation stalled below target.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "maskfeat/error.hpp"
#include "maskfeat/hog.hpp"
#include "maskfeat/image.hpp"
#include "maskfeat/io.hpp"
#include "maskfeat/masking.hpp"
#include "maskfeat/predictor.hpp"
#include "maskfeat/render.hpp"
#include "maskfeat/synthetic.hpp"
#include "maskfeat/targets.hpp"

namespace fs = std::filesystem;
using namespace maskfeat;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitIo = 2;
constexpr int kExitInvalid = 3;
constexpr int kExitPartialMask = 4;

std::string decimal(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::map<std::string, HogNorm> kNorms{{"none", HogNorm::None}, {"l1", HogNorm::L1}, {"l2", HogNorm::L2}};
const std::map<std::string, ColorMode> kColors{
    {"gray", ColorMode::Gray}, {"rgb", ColorMode::RGB}, {"opp", ColorMode::Opponent}};

struct HogFlags {
  int bins = 9;
  int cell = 8;
  std::string norm = "l2";
  std::string color = "rgb";
  bool signed_orientation = false;

  void add_to(CLI::App* app) {
    app->add_option("--bins", bins, "Orientation bins")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--cell", cell, "Cell size in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    app->add_option("--norm", norm, "Cell normalization")->check(CLI::IsMember({"none", "l1", "l2"}))->capture_default_str();
    app->add_option("--color", color, "Color mode")->check(CLI::IsMember({"gray", "rgb", "opp"}))->capture_default_str();
    app->add_flag("--signed", signed_orientation, "Signed orientations over [0, 360)");
  }

  HogConfig config() const {
    HogConfig cfg;
    cfg.num_bins = bins;
    cfg.cell_size = cell;
    cfg.norm = kNorms.at(norm);
    cfg.color_mode = kColors.at(color);
    cfg.signed_orientation = signed_orientation;
    return cfg;
  }
};

struct StatsFlags {
  std::vector<double> mean;
  std::vector<double> std;

  void add_to(CLI::App* app) {
    app->add_option("--mean", mean, "Per-channel normalization mean (default: computed from the input)")->delimiter(',');
    app->add_option("--std", std, "Per-channel normalization std (default: computed from the input)")->delimiter(',');
  }

  ChannelStatsd resolve(const VideoClipd& clip) const {
    if (mean.empty() && std.empty()) return compute_dataset_stats(clip.frames());
    if (mean.size() != std.size() || int(mean.size()) != clip.channels()) {
      throw InvalidInput("--mean/--std must both list one value per channel");
    }
    ChannelStatsd stats;
    stats.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), Eigen::Index(mean.size()));
    stats.std = Eigen::Map<const Eigen::VectorXd>(std.data(), Eigen::Index(std.size()));
    stats.validate();
    return stats;
  }
};

// ---------------------------------------------------------------- hog

struct HogCommand {
  std::string input;
  std::string out;
  HogFlags hog;

  void add_to(CLI::App& app) {
    auto* sub = app.add_subcommand("hog", "Dense HOG feature map of an image or clip");
    sub->add_option("--input", input, "PPM/PGM image or raw clip")->required();
    sub->add_option("--out", out, "Output tensor file")->required();
    hog.add_to(sub);
  }

  int run() const {
    const HogConfig cfg = hog.config();
    const VideoClipd clip = io::read_any_clip(input);
    io::Tensor tensor;
    for (const auto& frame : clip.frames()) {
      const io::Tensor t = io::hog_to_tensor(hog_dense(frame, cfg));
      tensor.dims = t.dims;
      tensor.values.insert(tensor.values.end(), t.values.begin(), t.values.end());
    }
    if (clip.frame_count() > 1) tensor.dims.insert(tensor.dims.begin(), std::uint64_t(clip.frame_count()));
    io::write_tensor(out, tensor);
    std::cout << "dims=";
    for (std::size_t i = 0; i < tensor.dims.size(); ++i) std::cout << (i ? "," : "") << tensor.dims[i];
    std::cout << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------- mask

struct MaskCommand {
  int t = 1, h = 14, w = 14;
  double ratio = 0.4;
  std::string strategy = "cube";
  std::uint64_t seed = 0;
  int min_block = 4;
  int max_attempts = 100;
  std::string out;

  void add_to(CLI::App& app) {
    auto* sub = app.add_subcommand("mask", "Generate a random mask map");
    sub->set_help_flag("--help", "Print this help message and exit");  // -h would shadow --h
    sub->add_option("--t", t, "Temporal token count")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--h", h, "Token grid height")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--w", w, "Token grid width")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--ratio", ratio, "Target masked fraction")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--strategy", strategy, "Masking strategy")
        ->check(CLI::IsMember({"block", "frame", "tube", "cube"}))
        ->capture_default_str();
    sub->add_option("--seed", seed, "Generator seed")->capture_default_str();
    sub->add_option("--min-block", min_block, "Minimum block area in tokens")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--max-attempts", max_attempts, "Unproductive draws before giving up")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    sub->add_option("--out", out, "Output mask file")->required();
  }

  int run() const {
    MaskConfig cfg;
    cfg.target_ratio = ratio;
    cfg.strategy = parse_mask_strategy(strategy);
    cfg.seed = seed;
    cfg.min_block_tokens = min_block;
    cfg.max_attempts = max_attempts;
    const MaskMap m = generate_mask(t, h, w, cfg);
    io::write_mask(out, m);
    std::cout << "ratio=" << decimal(m.ratio()) << "\n";
    return kExitOk;
  }
};

struct MaskInfoCommand {
  std::string mask;

  void add_to(CLI::App& app) {
    auto* sub = app.add_subcommand("mask-info", "Describe a mask file");
    sub->add_option("--mask", mask, "Mask file")->required();
  }

  int run() const {
    const MaskMap m = io::read_mask(mask);
    bool tube = true;
    const Eigen::Index plane = Eigen::Index(m.h()) * m.w();
    for (int ti = 1; ti < m.t(); ++ti) {
      tube = tube && (m.bits().segment(ti * plane, plane) == m.bits().head(plane)).all();
    }
    std::cout << "t=" << m.t() << "\nh=" << m.h() << "\nw=" << m.w() << "\nmasked=" << m.count()
              << "\nratio=" << decimal(m.ratio()) << "\ntube_constant=" << (tube ? "true" : "false") << "\n";
    for (int ti = 0; ti < m.t(); ++ti) std::cout << "frame_ratio[" << ti << "]=" << decimal(m.frame_ratio(ti)) << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------- make-sample

io::Tensor matrix_tensor(const RowMatrix<double>& m, std::vector<std::uint64_t> dims) {
  io::Tensor t;
  t.dims = std::move(dims);
  t.values.assign(m.data(), m.data() + m.size());
  return t;
}

struct MakeSampleCommand {
  std::string clip_path;
  std::string mask_path;
  std::string target = "hog";
  std::string design = "center";
  int patch = 16;
  int cube_frames = 0;
  HogFlags hog;
  StatsFlags stats;
  std::string out;

  void add_to(CLI::App& app) {
    auto* sub = app.add_subcommand("make-sample", "Tokenize a clip and assemble targets of masked tokens");
    sub->add_option("--clip", clip_path, "Raw clip or PPM/PGM image")->required();
    sub->add_option("--mask", mask_path, "Mask file over the token grid")->required();
    sub->add_option("--target", target, "Target kind")->check(CLI::IsMember({"pixel", "hog", "both"}))->capture_default_str();
    sub->add_option("--design", design, "Target design")->check(CLI::IsMember({"center", "cube"}))->capture_default_str();
    sub->add_option("--patch", patch, "Patch size in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--cube-frames", cube_frames, "Frames per cube (0: 1 for images, 2 for clips)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    hog.add_to(sub);
    stats.add_to(sub);
    sub->add_option("--out", out, "Output path prefix")->required();
  }

  int run() const {
    const HogConfig hcfg = hog.config();
    const VideoClipd clip = io::read_any_clip(clip_path);
    const MaskMap mask = io::read_mask(mask_path);

    PatchSpec pspec;
    pspec.patch_size = patch;
    pspec.cube_frames = cube_frames > 0 ? cube_frames : (clip.frame_count() > 1 ? 2 : 1);
    TargetSpec<double> tspec;
    tspec.hog = hcfg;
    tspec.stats = stats.resolve(clip);
    tspec.design = design == "cube" ? TargetDesign::FullCube : TargetDesign::CenterPatch;
    tspec.components.clear();
    if (target == "pixel" || target == "both") tspec.components.push_back({TargetKind::Pixel, 1.0});
    if (target == "hog" || target == "both") tspec.components.push_back({TargetKind::Hog, 1.0});

    const auto sample = assemble_targets(clip, mask, pspec, tspec);
    if (sample.masked_indices.empty()) throw InvalidInput("mask has no masked tokens");

    const auto& g = sample.tokens;
    const std::string tokens_file = out + ".tokens.mftn";
    io::write_tensor(tokens_file, matrix_tensor(g.tokens, {std::uint64_t(g.t), std::uint64_t(g.h),
                                                            std::uint64_t(g.w), std::uint64_t(g.dim())}));
    nlohmann::json manifest;
    manifest["token_grid"] = {g.t, g.h, g.w};
    manifest["token_dim"] = g.dim();
    manifest["tokens"] = fs::path(tokens_file).filename().string();
    manifest["masked_indices"] = sample.masked_indices;
    manifest["design"] = design;
    manifest["cube_frames"] = pspec.cube_frames;
    manifest["patch_size"] = patch;
    manifest["stats"] = {{"mean", std::vector<double>(tspec.stats.mean.begin(), tspec.stats.mean.end())},
                         {"std", std::vector<double>(tspec.stats.std.begin(), tspec.stats.std.end())}};
    std::cout << "masked=" << sample.masked_indices.size() << "\n";
    for (const auto& set : sample.targets) {
      const std::string name = to_string(set.kind);
      const std::string file = out + ".target-" + name + ".mftn";
      io::write_tensor(file, matrix_tensor(set.values, {std::uint64_t(set.values.rows()), std::uint64_t(set.dim())}));
      manifest["targets"].push_back(
          {{"kind", name}, {"file", fs::path(file).filename().string()}, {"dim", set.dim()}, {"weight", set.weight}});
      std::cout << "target_dim[" << name << "]=" << set.dim() << "\n";
    }
    const std::string text = manifest.dump(2) + "\n";
    io::write_file(out + ".manifest.json", io::ByteView(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
    return kExitOk;
  }
};

// ---------------------------------------------------------------- train-toy

struct TrainToyCommand {
  OrientedBarsConfig data;
  int patch = 8;
  HogFlags hog;
  double ratio = 0.4;
  int min_block = 1;
  std::uint64_t mask_seed = 0;
  TrainConfig train;
  std::string checkpoint;
  std::string curve;

  TrainToyCommand() {
    hog.cell = 4;
    train.learning_rate = 0.5;
    train.epochs = 200;
    train.batch_size = 8;
  }

  void add_to(CLI::App& app) {
    auto* sub = app.add_subcommand("train-toy", "Train the linear masked predictor on synthetic oriented bars");
    sub->add_option("--samples", data.count, "Number of synthetic images")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--size", data.size, "Image side in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--data-seed", data.seed, "Dataset generator seed")->capture_default_str();
    sub->add_option("--patch", patch, "Patch size in pixels")->check(CLI::PositiveNumber)->capture_default_str();
    hog.add_to(sub);
    sub->add_option("--ratio", ratio, "Masking ratio")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    sub->add_option("--min-block", min_block, "Minimum block area in tokens")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--mask-seed", mask_seed, "Mask seed")->capture_default_str();
    sub->add_option("--lr", train.learning_rate, "SGD learning rate")->check(CLI::NonNegativeNumber)->capture_default_str();
    sub->add_option("--epochs", train.epochs, "Epochs")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--batch", train.batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--seed", train.seed, "Init and shuffle seed")->capture_default_str();
    sub->add_option("--checkpoint", checkpoint, "Output checkpoint file")->required();
    sub->add_option("--curve", curve, "Output loss-curve CSV")->required();
  }

  int run() const {
    std::vector<DatasetItem<double>> dataset;
    std::vector<Imaged> images;
    for (auto& bar : oriented_bars(data)) images.push_back(std::move(bar.image));
    for (std::size_t i = 0; i < images.size(); ++i) dataset.push_back({VideoClipd::single(images[i]), i});

    PatchSpec pspec{patch, 1};
    TargetSpec<double> tspec;
    tspec.hog = hog.config();
    tspec.stats = compute_dataset_stats(images);
    MaskConfig mcfg;
    mcfg.target_ratio = ratio;
    mcfg.strategy = MaskStrategy::Block2D;
    mcfg.min_block_tokens = min_block;
    mcfg.seed = mask_seed;

    const auto baseline = mean_baseline(dataset, pspec, tspec);
    std::cout << "baseline_loss=" << decimal(baseline.loss) << "\n" << std::flush;
    const auto result = maskfeat::train(dataset, pspec, tspec, mcfg, train);

    std::string csv = "epoch,loss\n";
    for (std::size_t e = 0; e < result.loss_curve.size(); ++e) {
      csv += std::to_string(e + 1) + "," + decimal(result.loss_curve[e]) + "\n";
    }
    io::write_file(curve, io::ByteView(reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()));
    io::write_checkpoint(checkpoint, result.model);
    std::cout << "final_loss=" << decimal(result.loss_curve.back()) << "\n";
    std::cout << "loss_over_baseline=" << decimal(result.loss_curve.back() / baseline.loss) << "\n";
    std::cout << "stats_mean=" << decimal(tspec.stats.mean[0]) << "," << decimal(tspec.stats.mean[1]) << ","
              << decimal(tspec.stats.mean[2]) << "\n";
    std::cout << "stats_std=" << decimal(tspec.stats.std[0]) << "," << decimal(tspec.stats.std[1]) << ","
              << decimal(tspec.stats.std[2]) << "\n";
    return kExitOk;
  }
};

// ---------------------------------------------------------------- render-hog

struct RenderHogCommand {
  std::string hog_tensor;
  std::string checkpoint;
  std::string input;
  std::string mask_path;
  std::string masked_out;
  int patch = 8;
  int cell_px = 12;
  HogFlags hog;
  StatsFlags stats;
  std::string out;

  RenderHogCommand() { hog.cell = 4; }

  void add_to(CLI::App& app) {
    auto* sub = app.add_subcommand(
        "render-hog", "Render HOG glyphs of a feature tensor, or of a checkpoint's predictions at masked patches");
    auto* from_tensor = sub->add_option("--hog", hog_tensor, "HOG tensor [channels, cells_y, cells_x, bins]");
    auto* from_model = sub->add_option("--checkpoint", checkpoint, "Predictor checkpoint");
    from_tensor->excludes(from_model);
    sub->add_option("--input", input, "Image the predictor sees (with --checkpoint)")->needs(from_model);
    sub->add_option("--mask", mask_path, "Mask over the image's patch grid (with --checkpoint)")->needs(from_model);
    sub->add_option("--masked-out", masked_out, "Also write the masked input image here (with --checkpoint)")
        ->needs(from_model);
    sub->add_option("--patch", patch, "Patch size the checkpoint was trained with")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--cell-px", cell_px, "Glyph tile side in pixels")->check(CLI::Range(3, 256))->capture_default_str();
    hog.add_to(sub);
    stats.add_to(sub);
    sub->add_option("--out", out, "Output PGM")->required();
    sub->callback([this, sub] {
      if (hog_tensor.empty() && checkpoint.empty()) throw CLI::ValidationError("render-hog", "--hog or --checkpoint is required");
      if (!checkpoint.empty() && (input.empty() || mask_path.empty())) {
        throw CLI::ValidationError("render-hog", "--checkpoint needs --input and --mask");
      }
      (void)sub;
    });
  }

  int run() const {
    HogFeatureMap<double> map;
    if (!hog_tensor.empty()) {
      map = io::tensor_to_hog(io::read_tensor(hog_tensor));
    } else {
      map = predicted_map();
    }
    io::write_pnm(out, render_hog_glyphs(map, cell_px, hog.signed_orientation));
    return kExitOk;
  }

  HogFeatureMap<double> predicted_map() const {
    const HogConfig cfg = hog.config();
    const auto model = io::read_checkpoint(checkpoint);
    const Imaged img = io::read_pnm(input);
    const VideoClipd clip = VideoClipd::single(img);
    const MaskMap mask = io::read_mask(mask_path);

    TargetSpec<double> tspec;
    tspec.hog = cfg;
    tspec.stats = stats.resolve(clip);
    const auto sample = assemble_targets(clip, mask, PatchSpec{patch, 1}, tspec);
    if (sample.masked_indices.empty()) throw InvalidInput("mask has no masked tokens");
    const auto fwd = forward(model, sample);

    PatchGrid<double> grid;
    grid.rows = sample.tokens.h;
    grid.cols = sample.tokens.w;
    grid.vectors = RowMatrix<double>::Zero(sample.tokens.size(), fwd.preds.cols());
    std::vector<bool> present(static_cast<std::size_t>(sample.tokens.size()), false);
    for (std::size_t i = 0; i < sample.masked_indices.size(); ++i) {
      // Negative predicted bin weights are not drawable.
      grid.vectors.row(sample.masked_indices[i]) = fwd.preds.row(Eigen::Index(i)).cwiseMax(0.0);
      present[static_cast<std::size_t>(sample.masked_indices[i])] = true;
    }
    if (!masked_out.empty()) io::write_pnm(masked_out, render_masked_input(img, mask, patch));
    return merge_patch_targets(grid, patch, cfg, &present);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"maskfeat: masked feature prediction targets, masks and a toy predictor"};
  app.require_subcommand(1);

  HogCommand hog;
  MaskCommand mask;
  MaskInfoCommand mask_info;
  MakeSampleCommand make_sample;
  TrainToyCommand train_toy;
  RenderHogCommand render_hog;
  hog.add_to(app);
  mask.add_to(app);
  mask_info.add_to(app);
  make_sample.add_to(app);
  train_toy.add_to(app);
  render_hog.add_to(app);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    if (cmd == "hog") return hog.run();
    if (cmd == "mask") return mask.run();
    if (cmd == "mask-info") return mask_info.run();
    if (cmd == "make-sample") return make_sample.run();
    if (cmd == "train-toy") return train_toy.run();
    if (cmd == "render-hog") return render_hog.run();
  } catch (const PartialMask& e) {
    std::cerr << "error: " << e.what() << " (achieved ratio=" << decimal(e.achieved_ratio()) << ")\n";
    return kExitPartialMask;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const InvalidStats& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitUsage;
}
