#pragma once

// End-to-end experiment: kurtosis statistics -> variance profile -> per-class
// masks -> edited / merged training sets -> one-vs-rest SVMs and box
// regressors -> scoring, NMS and AP on the test split.
//
// Variants:
//   original     train on unedited features
//   edited_only  train on edited features only
//   merged       train on original + edited features
//   random_edit  train on original + randomly unit-dropped features

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "featedit/box_regression.hpp"
#include "featedit/channel_stats.hpp"
#include "featedit/detection_eval.hpp"
#include "featedit/edit.hpp"
#include "featedit/errors.hpp"
#include "featedit/feature_io.hpp"
#include "featedit/linear_models.hpp"
#include "featedit/rng.hpp"
#include "featedit/synth.hpp"
#include "featedit/types.hpp"

namespace featedit {

enum class Variant { original, edited_only, merged, random_edit };

/// Which mask edits the negatives fed to class c's classifier.
enum class NegativeEdit { classifier_class, own_class, none };

inline const char* to_string(Variant v) {
  switch (v) {
    case Variant::original: return "original";
    case Variant::edited_only: return "edited_only";
    case Variant::merged: return "merged";
    case Variant::random_edit: return "random_edit";
  }
  return "?";
}

inline const char* to_string(NegativeEdit n) {
  switch (n) {
    case NegativeEdit::classifier_class: return "classifier-class";
    case NegativeEdit::own_class: return "own-class";
    case NegativeEdit::none: return "none";
  }
  return "?";
}

inline const char* to_string(ApMode m) {
  return m == ApMode::eleven_point ? "eleven_point" : "continuous";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "original") return Variant::original;
  if (s == "edited_only" || s == "edited-only") return Variant::edited_only;
  if (s == "merged") return Variant::merged;
  if (s == "random_edit" || s == "random-edit") return Variant::random_edit;
  throw ConfigError("unknown variant '" + s + "'");
}

inline NegativeEdit parse_negative_edit(const std::string& s) {
  if (s == "classifier-class" || s == "classifier_class") return NegativeEdit::classifier_class;
  if (s == "own-class" || s == "own_class") return NegativeEdit::own_class;
  if (s == "none") return NegativeEdit::none;
  throw ConfigError("unknown negative-edit policy '" + s + "'");
}

inline ApMode parse_ap_mode(const std::string& s) {
  if (s == "eleven_point" || s == "11point") return ApMode::eleven_point;
  if (s == "continuous") return ApMode::continuous;
  throw ConfigError("unknown ap mode '" + s + "'");
}

struct RunConfig {
  std::filesystem::path train_path, test_path;
  std::filesystem::path train_gt_path, test_gt_path;  // empty: use sample boxes
  std::filesystem::path roles_path;                   // synth sidecar, optional
  std::filesystem::path out_dir = "run_out";
  Variant variant = Variant::merged;
  NegativeEdit negative_edit = NegativeEdit::classifier_class;
  EditConfig edit;
  SvmConfig svm;
  EvalConfig eval;
  double random_drop_ratio = 0.5;
  double ridge_lambda = 1.0;
  double regress_min_iou = 0.6;
  bool regress = true;
  std::uint64_t seed = 0;

  /// Canonical `key=value` lines; also the on-disk config format.
  std::string to_text() const {
    std::map<std::string, std::string> kv;
    auto num = [](double v) { return detail::format_double(v); };
    kv["train"] = train_path.string();
    kv["test"] = test_path.string();
    kv["train_gt"] = train_gt_path.string();
    kv["test_gt"] = test_gt_path.string();
    kv["roles"] = roles_path.string();
    kv["out"] = out_dir.string();
    kv["variant"] = to_string(variant);
    kv["negative_edit"] = to_string(negative_edit);
    kv["intra_frac"] = num(edit.intra_frac);
    kv["inter_frac"] = num(edit.inter_frac);
    kv["svm_lambda"] = num(svm.reg_lambda);
    kv["svm_epochs"] = std::to_string(svm.epochs);
    kv["svm_tolerance"] = num(svm.tolerance);
    kv["positive_weight"] = num(svm.positive_weight);
    kv["nms_iou"] = num(eval.nms_iou);
    kv["match_iou"] = num(eval.match_iou);
    kv["ap_mode"] = to_string(eval.ap_mode);
    kv["random_drop_ratio"] = num(random_drop_ratio);
    kv["ridge_lambda"] = num(ridge_lambda);
    kv["regress_min_iou"] = num(regress_min_iou);
    kv["regress"] = regress ? "1" : "0";
    kv["seed"] = std::to_string(seed);
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
  }

  /// Applies one `key=value` setting.
  void set(const std::string& key, const std::string& value) {
    auto as_double = [&] {
      double v;
      if (!detail::parse_field(value, v)) throw ConfigError("bad number for " + key + ": " + value);
      return v;
    };
    auto as_uint = [&] {
      std::uint64_t v;
      if (!detail::parse_field(value, v)) throw ConfigError("bad integer for " + key + ": " + value);
      return v;
    };
    if (key == "train") train_path = value;
    else if (key == "test") test_path = value;
    else if (key == "train_gt") train_gt_path = value;
    else if (key == "test_gt") test_gt_path = value;
    else if (key == "roles") roles_path = value;
    else if (key == "out") out_dir = value;
    else if (key == "variant") variant = parse_variant(value);
    else if (key == "negative_edit") negative_edit = parse_negative_edit(value);
    else if (key == "intra_frac") edit.intra_frac = as_double();
    else if (key == "inter_frac") edit.inter_frac = as_double();
    else if (key == "svm_lambda") svm.reg_lambda = as_double();
    else if (key == "svm_epochs") svm.epochs = as_uint();
    else if (key == "svm_tolerance") svm.tolerance = as_double();
    else if (key == "positive_weight") svm.positive_weight = as_double();
    else if (key == "nms_iou") eval.nms_iou = as_double();
    else if (key == "match_iou") eval.match_iou = as_double();
    else if (key == "ap_mode") eval.ap_mode = parse_ap_mode(value);
    else if (key == "random_drop_ratio") random_drop_ratio = as_double();
    else if (key == "ridge_lambda") ridge_lambda = as_double();
    else if (key == "regress_min_iou") regress_min_iou = as_double();
    else if (key == "regress") regress = as_uint() != 0;
    else if (key == "seed") seed = as_uint();
    else throw ConfigError("unknown config key '" + key + "'");
  }

  void validate() const {
    edit.validate();
    svm.validate();
    eval.validate();
    if (!(random_drop_ratio >= 0.0 && random_drop_ratio < 1.0))
      throw ConfigError("random_drop_ratio must lie in [0, 1)");
    if (!(ridge_lambda > 0.0)) throw ConfigError("ridge_lambda must be > 0");
  }
};

/// Splits a flat key=value file into ordered pairs; `#` starts a comment line.
inline std::vector<std::pair<std::string, std::string>> parse_key_values(const std::string& text) {
  auto trim = [](const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  std::vector<std::pair<std::string, std::string>> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

inline RunConfig parse_run_config(const std::string& text, RunConfig cfg = {}) {
  for (const auto& [k, v] : parse_key_values(text)) cfg.set(k, v);
  return cfg;
}

/// FNV-1a 64-bit.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Stage failures keep the original error family and name the stage.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& cause)
      : Error(cause.kind(), "stage '" + stage + "': " + cause.what()), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto run_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, e);
  }
}

/// Training set for class `c`'s classifier under the chosen variant.
inline Dataset training_set_for(std::uint32_t c, const Dataset& train, const RunConfig& cfg,
                                const std::vector<EditMask>& masks, const Dataset* random_copy) {
  if (cfg.variant == Variant::original) return train;
  if (cfg.variant == Variant::random_edit) return merge_datasets(train, *random_copy);

  Dataset edited(train.num_classes(), train.channels(), train.spatial());
  switch (cfg.negative_edit) {
    case NegativeEdit::classifier_class:
      edited = edit_dataset_with(train, masks.at(c));
      break;
    case NegativeEdit::own_class:
      edited = edit_dataset(train, masks);
      break;
    case NegativeEdit::none:
      edited.reserve(train.size());
      for (const auto& s : train) {
        LabeledSample e = s;
        if (s.class_id == c) e.feature = apply_mask(s.feature, masks.at(c));
        edited.push_back(std::move(e));
      }
      break;
  }
  return cfg.variant == Variant::merged ? merge_datasets(train, edited) : edited;
}

namespace detail {

/// Best-overlapping same-class ground truth for a sample, if any.
inline std::optional<GroundTruthRecord> match_gt(const LabeledSample& s,
                                                 const std::vector<GroundTruthRecord>& gts,
                                                 double min_iou) {
  std::optional<GroundTruthRecord> best;
  double best_iou = min_iou;
  for (const auto& g : gts) {
    if (g.image_id != s.image_id || g.class_id != s.class_id) continue;
    const double o = iou(s.box, g.box);
    if (o >= best_iou) {
      best_iou = o;
      best = g;
    }
  }
  return best;
}

}  // namespace detail

struct ExperimentInputs {
  Dataset train, test;
  std::vector<GroundTruthRecord> train_gt, test_gt;
  std::optional<SynthSpec> roles;
};

struct ExperimentResult {
  std::map<std::string, std::string> stage_status;
  ChannelStatsMatrix stats;
  std::optional<VarianceProfile> profile;
  std::vector<EditMask> masks;
  std::vector<LinearModel> models;
  std::vector<BoxRegressor> regressors;
  std::vector<DetectionRecord> raw_detections, detections;
  EvalReport eval;
  double test_accuracy = 0;  // argmax of one-vs-rest scores against labels
  std::optional<RecoveryStats> recovery;
  nlohmann::json diagnostics;
};

/// The whole experiment in memory; deterministic in (inputs, cfg).
inline ExperimentResult run_experiment(const ExperimentInputs& in, const RunConfig& cfg) {
  cfg.validate();
  const auto& train = in.train;
  const auto& test = in.test;
  if (!train.same_geometry(test)) throw ShapeError("train and test geometry differ");
  const std::uint32_t T = train.num_classes();
  ExperimentResult r;

  r.stats = run_stage("stats", [&] { return stats_matrix(train); });
  r.stage_status["stats"] = "done";

  std::optional<Dataset> random_copy;
  if (cfg.variant == Variant::edited_only || cfg.variant == Variant::merged) {
    run_stage("edit", [&] {
      std::vector<std::uint32_t> labels;
      for (const auto& s : train) labels.push_back(s.class_id);
      r.profile = variance_profile(r.stats, labels, T);
      r.masks = build_masks(*r.profile, cfg.edit);
      const auto inter = drop_distribution(r.profile->inter);
      nlohmann::json diag;
      diag["inter_entropy"] = inter.undefined ? nlohmann::json() : nlohmann::json(shannon_entropy(inter));
      for (const auto& m : r.masks) {
        const auto intra = drop_distribution(r.profile->intra.row(m.class_id));
        nlohmann::json c;
        c["class_id"] = m.class_id;
        c["dropped"] = m.dropped_count();
        c["intra_entropy"] = intra.undefined ? nlohmann::json() : nlohmann::json(shannon_entropy(intra));
        c["intra_mass_kept"] = intra.undefined ? nlohmann::json() : nlohmann::json(mask_expectation(intra, m));
        c["inter_mass_kept"] = inter.undefined ? nlohmann::json() : nlohmann::json(mask_expectation(inter, m));
        diag["classes"].push_back(c);
      }
      r.diagnostics = diag;
      return 0;
    });
    r.stage_status["edit"] = "done";
    if (in.roles) r.recovery = score_recovery(*in.roles, r.masks);
  } else if (cfg.variant == Variant::random_edit) {
    random_copy = run_stage("edit", [&] {
      return random_edit_dataset(train, cfg.random_drop_ratio, mix_seed(cfg.seed, 0xED17));
    });
    r.stage_status["edit"] = "random";
  } else {
    r.stage_status["edit"] = "skipped";
  }

  run_stage("train", [&] {
    for (std::uint32_t c = 0; c < T; ++c) {
      const Dataset set = training_set_for(c, train, cfg, r.masks, random_copy ? &*random_copy : nullptr);
      SvmConfig svm = cfg.svm;
      svm.seed = mix_seed(cfg.seed, c);
      r.models.push_back(train_svm(set, c, svm));
    }
    return 0;
  });
  r.stage_status["train"] = "done";

  if (cfg.regress) {
    run_stage("regress", [&] {
      for (std::uint32_t c = 0; c < T; ++c) {
        std::vector<std::vector<double>> rows;
        std::vector<BoxDelta> targets;
        for (const auto& s : train) {
          if (s.class_id != c) continue;
          auto g = detail::match_gt(s, in.train_gt, cfg.regress_min_iou);
          if (!g) continue;
          rows.emplace_back(s.feature.values().begin(), s.feature.values().end());
          targets.push_back(box_targets(s.box, g->box));
        }
        BoxRegressor reg;
        if (rows.empty()) {
          reg.weights.fill(std::vector<double>(train.feature_size(), 0.0));
          reg.ridge_lambda = cfg.ridge_lambda;
          reg.class_id = c;
        } else {
          Matrix x(rows.size(), train.feature_size());
          for (std::size_t n = 0; n < rows.size(); ++n)
            std::copy(rows[n].begin(), rows[n].end(), x.row(n).begin());
          reg = train_regressor(x, targets, cfg.ridge_lambda, c);
        }
        r.regressors.push_back(std::move(reg));
      }
      return 0;
    });
    r.stage_status["regress"] = "done";
  } else {
    r.stage_status["regress"] = "skipped";
  }

  run_stage("predict", [&] {
    std::size_t correct = 0;
    std::vector<double> x(test.feature_size());
    for (const auto& s : test) {
      std::copy(s.feature.values().begin(), s.feature.values().end(), x.begin());
      std::uint32_t best_class = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::uint32_t c = 0; c < T; ++c) {
        const double sc = score(r.models[c], x);
        if (sc > best_score) {
          best_score = sc;
          best_class = c;
        }
        Box box = s.box;
        if (cfg.regress) box = apply_transform(s.box, r.regressors[c].predict(x));
        r.raw_detections.push_back({s.image_id, c, sc, box});
      }
      correct += best_class == s.class_id;
    }
    r.test_accuracy = test.empty() ? 0.0 : double(correct) / double(test.size());
    return 0;
  });
  r.stage_status["predict"] = "done";

  r.detections = run_stage("nms", [&] { return nms_all(r.raw_detections, cfg.eval.nms_iou); });
  r.stage_status["nms"] = "done";

  r.eval = run_stage("eval", [&] { return evaluate(r.detections, in.test_gt, T, cfg.eval); });
  r.stage_status["eval"] = "done";
  return r;
}

/// Writes `drops.csv` (class_id,channel,reason,rank,sample_index): for each
/// dropped channel, the samples that activate it most in the central window.
inline void export_drops(std::ostream& out, std::span<const EditMask> masks, const Dataset& d,
                         std::size_t top_k = 9) {
  out << "class_id,channel,reason,rank,sample_index\n";
  for (const auto& m : masks)
    for (std::size_t c = 0; c < m.channels(); ++c) {
      if (m.keep[c]) continue;
      const auto ranked = rank_channel_activations(d, c, top_k);
      for (std::size_t r = 0; r < ranked.size(); ++r)
        out << m.class_id << ',' << c << ',' << drop_reason(m, c) << ',' << r << ',' << ranked[r]
            << '\n';
    }
}

inline nlohmann::json report_json(const ExperimentResult& r, const RunConfig& cfg) {
  nlohmann::json j;
  j["variant"] = to_string(cfg.variant);
  j["negative_edit"] = to_string(cfg.negative_edit);
  j["stages"] = r.stage_status;
  j["map"] = r.eval.map;
  j["test_accuracy"] = r.test_accuracy;
  for (const auto& c : r.eval.per_class)
    j["per_class"].push_back({{"class_id", c.class_id},
                              {"ap", c.ap},
                              {"num_gt", c.num_gt},
                              {"num_tp", c.num_tp},
                              {"num_fp", c.num_fp}});
  for (const auto& m : r.masks)
    j["masks"].push_back({{"class_id", m.class_id},
                          {"dropped_intra", m.dropped_intra},
                          {"dropped_inter", m.dropped_inter}});
  if (r.recovery)
    j["recovery"] = {{"noisy_recall", r.recovery->noisy_recall()},
                     {"flat_recall", r.recovery->flat_recall()},
                     {"friendly_drop_rate", r.recovery->friendly_drop_rate()}};
  if (!r.diagnostics.is_null()) j["diagnostics"] = r.diagnostics;
  return j;
}

inline std::string file_checksum(const std::filesystem::path& p) {
  return hex64(fnv1a(detail::slurp(p)));
}

inline ExperimentInputs load_inputs(const RunConfig& cfg) {
  return run_stage("load", [&] {
    ExperimentInputs in;
    in.train = read_dataset(cfg.train_path);
    in.test = read_dataset(cfg.test_path);
    in.train_gt = cfg.train_gt_path.empty() ? ground_truth_of(in.train) : read_ground_truth(cfg.train_gt_path);
    in.test_gt = cfg.test_gt_path.empty() ? ground_truth_of(in.test) : read_ground_truth(cfg.test_gt_path);
    if (!cfg.roles_path.empty()) {
      try {
        in.roles = spec_from_json(nlohmann::json::parse(detail::slurp(cfg.roles_path)));
      } catch (const nlohmann::json::exception& e) {
        throw SpecError(std::string("cannot parse roles sidecar: ") + e.what());
      }
    }
    return in;
  });
}

/// Runs the experiment from files and persists every intermediate plus
/// `report.json` and `manifest.json` under cfg.out_dir. Returns the report.
inline nlohmann::json run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const auto in = load_inputs(cfg);
  const auto r = run_experiment(in, cfg);
  const auto& out = cfg.out_dir;

  std::vector<std::filesystem::path> written;
  run_stage("write", [&] {
    std::filesystem::create_directories(out / "models");
    auto text = [&](const std::filesystem::path& rel, const std::string& body) {
      detail::spill(out / rel, body);
      written.push_back(rel);
    };
    text("config.txt", cfg.to_text());
    {
      std::ostringstream s;
      write_stats_csv(s, r.stats);
      text("stats.csv", s.str());
    }
    if (!r.masks.empty()) {
      std::ostringstream m, d;
      write_masks_csv(m, r.masks);
      export_drops(d, r.masks, in.train);
      text("masks.csv", m.str());
      text("drops.csv", d.str());
    }
    for (const auto& m : r.models) {
      const auto rel = std::filesystem::path("models") / ("class" + std::to_string(m.class_id) + ".lmod");
      detail::spill(out / rel, encode_model(m));
      written.push_back(rel);
    }
    for (const auto& g : r.regressors) {
      const auto rel = std::filesystem::path("models") / ("class" + std::to_string(g.class_id) + ".lreg");
      detail::spill(out / rel, encode_regressor(g));
      written.push_back(rel);
    }
    text("detections_raw.csv", format_detections(r.raw_detections));
    text("detections.csv", format_detections(r.detections));
    write_eval_report(r.eval, out);
    written.push_back("eval.csv");
    for (const auto& c : r.eval.per_class) written.push_back("pr_class" + std::to_string(c.class_id) + ".csv");
    text("report.json", report_json(r, cfg).dump(2) + "\n");
    return 0;
  });

  nlohmann::json manifest;
  manifest["config"] = cfg.to_text();
  manifest["config_hash"] = hex64(fnv1a(cfg.to_text()));
  manifest["seeds"]["master"] = cfg.seed;
  for (std::uint32_t c = 0; c < in.train.num_classes(); ++c)
    manifest["seeds"]["svm_class" + std::to_string(c)] = mix_seed(cfg.seed, c);
  if (cfg.variant == Variant::random_edit) manifest["seeds"]["random_edit"] = mix_seed(cfg.seed, 0xED17);
  manifest["inputs"]["train"] = file_checksum(cfg.train_path);
  manifest["inputs"]["test"] = file_checksum(cfg.test_path);
  if (!cfg.train_gt_path.empty()) manifest["inputs"]["train_gt"] = file_checksum(cfg.train_gt_path);
  if (!cfg.test_gt_path.empty()) manifest["inputs"]["test_gt"] = file_checksum(cfg.test_gt_path);
  if (!cfg.roles_path.empty()) manifest["inputs"]["roles"] = file_checksum(cfg.roles_path);
  for (const auto& rel : written) manifest["outputs"][rel.generic_string()] = file_checksum(out / rel);
  detail::spill(out / "manifest.json", manifest.dump(2) + "\n");
  return report_json(r, cfg);
}

}  // namespace featedit
