// featedit: command-line front end for the feature-edit pipeline.
//
// Every subcommand reads and writes files so stages can be chained or
// swapped out. Exit codes: 0 success, 2 configuration error, 3 data error,
// 4 numerical failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "featedit/featedit.hpp"

namespace fs = std::filesystem;
using namespace featedit;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::config: return kExitConfig;
    case ErrorKind::data: return kExitData;
    case ErrorKind::numerical: return kExitNumerical;
  }
  return kExitData;
}

/// --seed if given, else $FEAT_EDIT_SEED, else 0.
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return *flag;
  if (const char* env = std::getenv("FEAT_EDIT_SEED")) {
    std::uint64_t v = 0;
    if (!detail::parse_field(std::string_view(env), v))
      throw ConfigError(std::string("FEAT_EDIT_SEED is not an unsigned integer: ") + env);
    return v;
  }
  return 0;
}

void write_text(const fs::path& path, const std::string& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::spill(path, body);
}

std::vector<EditMask> masks_for(const Dataset& d, const EditConfig& cfg) {
  return build_masks(variance_profile(d), cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy/variance-based channel editing of pool5-style feature maps"};
  app.require_subcommand(1);
  std::optional<std::uint64_t> seed_flag;

  // synth
  auto* synth = app.add_subcommand("synth", "Generate seeded synthetic train/test feature sets");
  fs::path synth_out = "synth";
  std::uint32_t synth_classes = 3;
  std::size_t synth_channels = 32, synth_spatial = 6, synth_n = 200, synth_flat = 10, synth_noisy = 4;
  double synth_shift = 1.0;
  synth->add_option("-o,--out-dir", synth_out, "Output directory")->capture_default_str();
  synth->add_option("--classes", synth_classes, "Class count T")->capture_default_str();
  synth->add_option("--channels", synth_channels, "Channels C")->capture_default_str();
  synth->add_option("--spatial", synth_spatial, "Spatial side S")->capture_default_str();
  synth->add_option("--n-per-class", synth_n, "Samples per class in each split")->capture_default_str();
  synth->add_option("--flat", synth_flat, "Planted flat channels (shared)")->capture_default_str();
  synth->add_option("--noisy", synth_noisy, "Planted noisy channels per class")->capture_default_str();
  synth->add_option("--shift", synth_shift, "Test-time drift on noisy channels, in [0,1]")->capture_default_str();
  synth->add_option("--seed", seed_flag, "Seed (default: $FEAT_EDIT_SEED or 0)");

  // stats
  auto* stats = app.add_subcommand("stats", "Per-sample, per-channel kurtosis as CSV");
  fs::path stats_in, stats_out = "stats.csv";
  stats->add_option("-i,--input", stats_in, "Input .feat")->required();
  stats->add_option("-o,--out", stats_out, "Output CSV")->capture_default_str();

  // edit
  auto* edit = app.add_subcommand("edit", "Build per-class masks and apply them");
  fs::path edit_in, edit_out = "edited.feat", edit_masks_out, edit_masks_in;
  EditConfig edit_cfg;
  std::optional<std::uint32_t> edit_with_class;
  edit->add_option("-i,--input", edit_in, "Input .feat")->required();
  edit->add_option("-o,--out", edit_out, "Edited .feat")->capture_default_str();
  edit->add_option("--masks-out", edit_masks_out, "Write masks CSV here");
  edit->add_option("--masks", edit_masks_in, "Apply masks from this CSV instead of building them");
  edit->add_option("--intra-frac", edit_cfg.intra_frac, "Fraction of channels dropped for intra-class instability")->capture_default_str();
  edit->add_option("--inter-frac", edit_cfg.inter_frac, "Fraction of channels dropped for low inter-class variance")->capture_default_str();
  edit->add_option("--with-class", edit_with_class, "Apply this class's mask to every sample");

  // rand-edit
  auto* rand_edit = app.add_subcommand("rand-edit", "Random unit-dropping baseline");
  fs::path rand_in, rand_out = "random.feat";
  double rand_ratio = 0.5;
  rand_edit->add_option("-i,--input", rand_in, "Input .feat")->required();
  rand_edit->add_option("-o,--out", rand_out, "Output .feat")->capture_default_str();
  rand_edit->add_option("--ratio", rand_ratio, "zeros:ones ratio, in [0,1)")->capture_default_str();
  rand_edit->add_option("--seed", seed_flag, "Seed (default: $FEAT_EDIT_SEED or 0)");

  // merge
  auto* merge = app.add_subcommand("merge", "Concatenate two datasets (first, then second)");
  fs::path merge_a, merge_b, merge_out = "merged.feat";
  merge->add_option("a", merge_a, "First .feat")->required();
  merge->add_option("b", merge_b, "Second .feat")->required();
  merge->add_option("-o,--out", merge_out, "Output .feat")->capture_default_str();

  // train
  auto* train = app.add_subcommand("train", "Train one-vs-rest SVMs (and box regressors when --gt is given)");
  fs::path train_in, train_out = "models", train_gt;
  SvmConfig svm_cfg;
  double ridge_lambda = 1.0, regress_min_iou = 0.6;
  train->add_option("-i,--input", train_in, "Training .feat")->required();
  train->add_option("-o,--out-dir", train_out, "Directory for class<k>.lmod / .lreg")->capture_default_str();
  train->add_option("--gt", train_gt, "Ground-truth CSV for box regression targets");
  train->add_option("--lambda", svm_cfg.reg_lambda, "L2 regularization")->capture_default_str();
  train->add_option("--epochs", svm_cfg.epochs, "Maximum epochs")->capture_default_str();
  train
      ->add_option("--tolerance", svm_cfg.tolerance,
                   "Stop once the epoch objective changes less than this for three epochs")
      ->capture_default_str();
  train->add_option("--positive-weight", svm_cfg.positive_weight, "Hinge weight of positives")->capture_default_str();
  train->add_option("--ridge", ridge_lambda, "Box regression ridge lambda")->capture_default_str();
  train->add_option("--regress-min-iou", regress_min_iou, "Min proposal/gt IoU for regression samples")->capture_default_str();
  train->add_option("--seed", seed_flag, "Seed (default: $FEAT_EDIT_SEED or 0)");

  // predict
  auto* predict = app.add_subcommand("predict", "Score every sample with every class model");
  fs::path predict_in, predict_models = "models", predict_out = "detections.csv";
  bool predict_no_regress = false;
  predict->add_option("-i,--input", predict_in, "Test .feat")->required();
  predict->add_option("-m,--models", predict_models, "Directory written by `train`")->capture_default_str();
  predict->add_option("-o,--out", predict_out, "Detections CSV")->capture_default_str();
  predict->add_flag("--no-regress", predict_no_regress, "Keep proposal boxes even if regressors exist");

  // nms
  auto* nms_cmd = app.add_subcommand("nms", "Greedy non-maximum suppression per image and class");
  fs::path nms_in, nms_out = "detections_nms.csv";
  double nms_iou = 0.3;
  nms_cmd->add_option("-i,--input", nms_in, "Detections CSV")->required();
  nms_cmd->add_option("-o,--out", nms_out, "Kept detections CSV")->capture_default_str();
  nms_cmd->add_option("--iou", nms_iou, "Suppress when IoU exceeds this")->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "Per-class AP and mAP");
  fs::path eval_dets, eval_gt, eval_out = "eval";
  std::uint32_t eval_classes = 0;
  EvalConfig eval_cfg;
  std::string eval_mode = "eleven_point";
  eval->add_option("-d,--detections", eval_dets, "Detections CSV")->required();
  eval->add_option("-g,--gt", eval_gt, "Ground-truth CSV")->required();
  eval->add_option("-T,--classes", eval_classes, "Class count")->required();
  eval->add_option("-o,--out-dir", eval_out, "Report directory")->capture_default_str();
  eval->add_option("--match-iou", eval_cfg.match_iou, "IoU needed for a true positive")->capture_default_str();
  eval->add_option("--ap-mode", eval_mode, "eleven_point or continuous")->capture_default_str();

  // run
  auto* run = app.add_subcommand("run", "Full experiment from a key=value config plus overrides");
  fs::path run_config;
  std::vector<std::string> run_sets;
  std::string run_variant, run_negative_edit, run_train, run_test, run_train_gt, run_test_gt, run_roles, run_out;
  run->add_option("-c,--config", run_config, "Config file (key=value lines)");
  run->add_option("--set", run_sets, "Override any config key: --set key=value");
  run->add_option("--train", run_train, "Training .feat");
  run->add_option("--test", run_test, "Test .feat");
  run->add_option("--train-gt", run_train_gt, "Training ground-truth CSV");
  run->add_option("--test-gt", run_test_gt, "Test ground-truth CSV");
  run->add_option("--roles", run_roles, "Synthetic roles sidecar (enables recovery stats)");
  run->add_option("-o,--out-dir", run_out, "Output directory");
  run->add_option("--variant", run_variant, "original | edited_only | merged | random_edit");
  run->add_option("--negative-edit", run_negative_edit, "classifier-class | own-class | none");
  run->add_option("--seed", seed_flag, "Seed (default: config, then $FEAT_EDIT_SEED, then 0)");

  // pca
  auto* pca = app.add_subcommand("pca", "Two-component PCA of flattened features as CSV");
  fs::path pca_in, pca_out = "pca.csv";
  pca->add_option("-i,--input", pca_in, "Input .feat")->required();
  pca->add_option("-o,--out", pca_out, "Output CSV")->capture_default_str();

  // rank
  auto* rank = app.add_subcommand("rank", "Samples most activating one channel's central window");
  fs::path rank_in;
  std::size_t rank_channel = 0, rank_k = 9;
  rank->add_option("-i,--input", rank_in, "Input .feat")->required();
  rank->add_option("--channel", rank_channel, "Channel index")->required();
  rank->add_option("-k", rank_k, "How many samples")->capture_default_str();

  // export-drops
  auto* drops = app.add_subcommand("export-drops", "Dropped channels with their top activating samples");
  fs::path drops_in, drops_masks, drops_out = "drops.csv";
  std::size_t drops_k = 9;
  drops->add_option("-i,--input", drops_in, "Dataset the exemplars come from")->required();
  drops->add_option("-m,--masks", drops_masks, "Masks CSV")->required();
  drops->add_option("-o,--out", drops_out, "Output CSV")->capture_default_str();
  drops->add_option("-k", drops_k, "Exemplars per channel")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*synth) {
      auto spec = default_synth_spec(resolve_seed(seed_flag), synth_classes, synth_channels, synth_flat, synth_noisy);
      spec.spatial = synth_spatial;
      spec.n_per_class = synth_n;
      spec.shift = synth_shift;
      const auto data = generate(spec);
      fs::create_directories(synth_out);
      write_dataset(data.train, synth_out / "train.feat");
      write_dataset(data.test, synth_out / "test.feat");
      write_ground_truth(data.train_gt, synth_out / "train_gt.csv");
      write_ground_truth(data.test_gt, synth_out / "test_gt.csv");
      write_text(synth_out / "roles.json", spec_to_json(spec).dump(2) + "\n");
      std::cout << "wrote " << data.train.size() << " train and " << data.test.size()
                << " test samples to " << synth_out << "\n";
    } else if (*stats) {
      std::ostringstream s;
      write_stats_csv(s, stats_matrix(read_dataset(stats_in)));
      write_text(stats_out, s.str());
    } else if (*edit) {
      const auto d = read_dataset(edit_in);
      const auto masks = edit_masks_in.empty() ? masks_for(d, edit_cfg)
                                               : parse_masks_csv(detail::slurp(edit_masks_in));
      Dataset out;
      if (edit_with_class) {
        out = edit_dataset_with(d, detail::mask_for(masks, *edit_with_class));
      } else {
        out = edit_dataset(d, masks);
      }
      write_dataset(out, edit_out);
      if (!edit_masks_out.empty()) {
        std::ostringstream s;
        write_masks_csv(s, masks);
        write_text(edit_masks_out, s.str());
      }
    } else if (*rand_edit) {
      write_dataset(random_edit_dataset(read_dataset(rand_in), rand_ratio, resolve_seed(seed_flag)), rand_out);
    } else if (*merge) {
      write_dataset(merge_datasets(read_dataset(merge_a), read_dataset(merge_b)), merge_out);
    } else if (*train) {
      const auto d = read_dataset(train_in);
      const auto seed = resolve_seed(seed_flag);
      fs::create_directories(train_out);
      std::vector<GroundTruthRecord> gts;
      if (!train_gt.empty()) gts = read_ground_truth(train_gt);
      for (std::uint32_t c = 0; c < d.num_classes(); ++c) {
        SvmConfig cfg = svm_cfg;
        cfg.seed = mix_seed(seed, c);
        write_model(train_svm(d, c, cfg), train_out / ("class" + std::to_string(c) + ".lmod"));
        if (train_gt.empty()) continue;
        std::vector<std::vector<double>> rows;
        std::vector<BoxDelta> targets;
        for (const auto& s : d) {
          if (s.class_id != c) continue;
          if (auto g = detail::match_gt(s, gts, regress_min_iou)) {
            rows.emplace_back(s.feature.values().begin(), s.feature.values().end());
            targets.push_back(box_targets(s.box, g->box));
          }
        }
        if (rows.empty()) continue;
        Matrix x(rows.size(), d.feature_size());
        for (std::size_t n = 0; n < rows.size(); ++n) std::copy(rows[n].begin(), rows[n].end(), x.row(n).begin());
        write_regressor(train_regressor(x, targets, ridge_lambda, c), train_out / ("class" + std::to_string(c) + ".lreg"));
      }
    } else if (*predict) {
      const auto d = read_dataset(predict_in);
      std::vector<DetectionRecord> dets;
      std::vector<LinearModel> models;
      std::vector<std::optional<BoxRegressor>> regs;
      for (std::uint32_t c = 0; c < d.num_classes(); ++c) {
        models.push_back(read_model(predict_models / ("class" + std::to_string(c) + ".lmod")));
        const auto reg_path = predict_models / ("class" + std::to_string(c) + ".lreg");
        regs.push_back(!predict_no_regress && fs::exists(reg_path) ? std::optional(read_regressor(reg_path)) : std::nullopt);
      }
      std::vector<double> x(d.feature_size());
      for (const auto& s : d) {
        std::copy(s.feature.values().begin(), s.feature.values().end(), x.begin());
        for (std::uint32_t c = 0; c < d.num_classes(); ++c) {
          const Box box = regs[c] ? apply_transform(s.box, regs[c]->predict(x)) : s.box;
          dets.push_back({s.image_id, c, score(models[c], x), box});
        }
      }
      write_detections(dets, predict_out);
    } else if (*nms_cmd) {
      write_detections(nms_all(read_detections(nms_in), nms_iou), nms_out);
    } else if (*eval) {
      eval_cfg.ap_mode = parse_ap_mode(eval_mode);
      const auto rep = evaluate(read_detections(eval_dets), read_ground_truth(eval_gt), eval_classes, eval_cfg);
      write_eval_report(rep, eval_out);
      std::cout << "mAP " << rep.map << "\n";
    } else if (*run) {
      RunConfig cfg;
      bool seed_in_config = false;
      if (!run_config.empty()) {
        for (const auto& [k, v] : parse_key_values(detail::slurp(run_config))) {
          cfg.set(k, v);
          seed_in_config = seed_in_config || k == "seed";
        }
      }
      for (const auto& kv : run_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        seed_in_config = seed_in_config || kv.substr(0, eq) == "seed";
      }
      if (!run_train.empty()) cfg.train_path = run_train;
      if (!run_test.empty()) cfg.test_path = run_test;
      if (!run_train_gt.empty()) cfg.train_gt_path = run_train_gt;
      if (!run_test_gt.empty()) cfg.test_gt_path = run_test_gt;
      if (!run_roles.empty()) cfg.roles_path = run_roles;
      if (!run_out.empty()) cfg.out_dir = run_out;
      if (!run_variant.empty()) cfg.variant = parse_variant(run_variant);
      if (!run_negative_edit.empty()) cfg.negative_edit = parse_negative_edit(run_negative_edit);
      if (seed_flag || !seed_in_config) cfg.seed = resolve_seed(seed_flag);
      if (cfg.train_path.empty() || cfg.test_path.empty())
        throw ConfigError("run needs train and test datasets");
      const auto report = run_pipeline(cfg);
      std::cout << report.dump(2) << "\n";
    } else if (*pca) {
      const auto d = read_dataset(pca_in);
      const auto res = pca_project(flatten(d));
      std::vector<std::uint32_t> labels;
      for (const auto& s : d) labels.push_back(s.class_id);
      std::ostringstream s;
      write_pca_csv(s, res, labels);
      write_text(pca_out, s.str());
    } else if (*rank) {
      for (auto j : rank_channel_activations(read_dataset(rank_in), rank_channel, rank_k)) std::cout << j << "\n";
    } else if (*drops) {
      std::ostringstream s;
      export_drops(s, parse_masks_csv(detail::slurp(drops_masks)), read_dataset(drops_in), drops_k);
      write_text(drops_out, s.str());
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
