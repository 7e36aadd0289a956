#include "tml/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "tml/cam.hpp"
#include "tml/common.hpp"

namespace tml {

namespace {

using njson = nlohmann::json;
using ojson = nlohmann::ordered_json;

void expect_keys(const njson& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

template <typename T>
T get_or(const njson& obj, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const njson::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

std::map<int, double> parse_histogram(const njson& obj, const char* key,
                                      const std::map<int, double>& fallback) {
  if (!obj.contains(key)) return fallback;
  std::map<int, double> h;
  for (auto it = obj.at(key).begin(); it != obj.at(key).end(); ++it) {
    int k = 0;
    try {
      k = std::stoi(it.key());
    } catch (const std::exception&) {
      throw ConfigError(std::string(key) + ": key '" + it.key() + "' is not an integer");
    }
    h[k] = it.value().get<double>();
  }
  return h;
}

constexpr const char* kSizeNames[3] = {"small", "medium", "large"};
constexpr const char* kMorphNames[3] = {"sessile", "pedunculated", "undefined"};

void parse_dataset(const njson& j, DatasetSection& out) {
  expect_keys(j,
              {"num_procedures", "frac_with_events", "events_per_procedure_dist",
               "frames_per_event_dist", "size_morphology_mix", "negative_frames_per_procedure",
               "frame_size", "channels", "distractor_rate", "path"},
              "dataset");
  GeneratorConfig& g = out.gen;
  g.num_procedures = get_or(j, "num_procedures", g.num_procedures);
  g.frac_with_events = get_or(j, "frac_with_events", g.frac_with_events);
  g.events_per_procedure_dist = parse_histogram(j, "events_per_procedure_dist", g.events_per_procedure_dist);
  g.frames_per_event_dist = parse_histogram(j, "frames_per_event_dist", g.frames_per_event_dist);
  if (j.contains("size_morphology_mix")) {
    const njson& mix = j.at("size_morphology_mix");
    expect_keys(mix, {"small", "medium", "large"}, "dataset.size_morphology_mix");
    for (int s = 0; s < 3; ++s) {
      if (!mix.contains(kSizeNames[s])) {
        throw ConfigError(std::string("size_morphology_mix missing '") + kSizeNames[s] + "'");
      }
      const njson& row = mix.at(kSizeNames[s]);
      expect_keys(row, {"sessile", "pedunculated", "undefined"},
                  std::string("dataset.size_morphology_mix.") + kSizeNames[s]);
      for (int m = 0; m < 3; ++m) {
        g.size_morphology_mix[static_cast<size_t>(s)][static_cast<size_t>(m)] =
            get_or(row, kMorphNames[m], 0.0);
      }
    }
  }
  g.negative_frames_per_procedure =
      get_or(j, "negative_frames_per_procedure", g.negative_frames_per_procedure);
  g.frame_size = get_or(j, "frame_size", g.frame_size);
  g.channels = get_or(j, "channels", g.channels);
  g.distractor_rate = get_or(j, "distractor_rate", g.distractor_rate);
  out.path = get_or<std::string>(j, "path", out.path);
}

void parse_train(const njson& j, TrainSection& out) {
  expect_keys(j,
              {"method", "margin", "embedding_head", "learning_rate", "epochs", "stage2_epochs",
               "weight_decay", "normalize_embeddings", "batch_size", "positive_fraction",
               "augment", "val_fold"},
              "train");
  TrainConfig& t = out.cfg;
  if (j.contains("method")) t.method = train_method_from_string(j.at("method").get<std::string>());
  t.margin = get_or(j, "margin", t.margin);
  t.embedding_head = get_or(j, "embedding_head", t.embedding_head);
  t.learning_rate = get_or(j, "learning_rate", t.learning_rate);
  t.epochs = get_or(j, "epochs", t.epochs);
  t.stage2_epochs = get_or(j, "stage2_epochs", t.stage2_epochs);
  t.weight_decay = get_or(j, "weight_decay", t.weight_decay);
  t.normalize_embeddings = get_or(j, "normalize_embeddings", t.normalize_embeddings);
  t.plan.batch_size = get_or(j, "batch_size", t.plan.batch_size);
  t.plan.positive_fraction = get_or(j, "positive_fraction", t.plan.positive_fraction);
  t.plan.augment = get_or(j, "augment", t.plan.augment);
  out.val_fold = get_or(j, "val_fold", out.val_fold);
}

void parse_eval(const njson& j, EvalSection& out) {
  expect_keys(j, {"threshold", "recall_targets", "min_negative_ratio", "folds"}, "eval");
  out.cfg.threshold = get_or(j, "threshold", out.cfg.threshold);
  out.cfg.recall_targets = get_or(j, "recall_targets", out.cfg.recall_targets);
  out.cfg.min_negative_ratio = get_or(j, "min_negative_ratio", out.cfg.min_negative_ratio);
  out.folds = get_or(j, "folds", out.folds);
}

void parse_sweep(const njson& j, SweepSection& out) {
  expect_keys(j, {"margins", "embedding_sizes", "degrees", "repeats"}, "sweep");
  out.margins = get_or(j, "margins", out.margins);
  out.embedding_sizes = get_or(j, "embedding_sizes", out.embedding_sizes);
  out.degrees = get_or(j, "degrees", out.degrees);
  out.repeats = get_or(j, "repeats", out.repeats);
}

void parse_cam(const njson& j, CamSection& out) {
  expect_keys(j, {"target_specificity", "dilation_px", "max_gallery"}, "cam");
  out.target_specificity = get_or(j, "target_specificity", out.target_specificity);
  out.dilation_px = get_or(j, "dilation_px", out.dilation_px);
  out.max_gallery = get_or(j, "max_gallery", out.max_gallery);
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}

Dataset load_configured_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.path.empty()) {
    throw ConfigError("dataset.path not set: run gen-data first and point dataset.path at its output");
  }
  return load_dataset(cfg.dataset.path);
}

std::string mean_std_cell(const MeanStd& ms) {
  return format_double(ms.mean) + "±" + format_double(ms.stdev);
}

std::string target_tag(double t) { return format_double(t); }

// fold rows plus one aggregate row, matching the published table layout
std::string cv_metrics_csv(const CvReport& rep, const EvalConfig& eval_cfg) {
  std::ostringstream out;
  out << "fold,auc,accuracy,sensitivity,specificity,precision";
  for (double t : eval_cfg.recall_targets) {
    out << ",recall_at_" << target_tag(t) << ",threshold_at_" << target_tag(t);
  }
  out << ",test_positives,test_negatives\n";
  for (const FoldReport& f : rep.folds) {
    out << f.fold << ',' << format_double(f.auc) << ',' << format_double(f.at_threshold.accuracy)
        << ',' << format_double(f.at_threshold.sensitivity) << ','
        << format_double(f.at_threshold.specificity) << ','
        << format_double(f.at_threshold.precision);
    for (double t : eval_cfg.recall_targets) {
      const OperatingPoint& op = f.recall_at.at(t);
      out << ',' << format_double(op.recall) << ',' << format_double(op.threshold);
    }
    out << ',' << f.test_positives << ',' << f.test_negatives << '\n';
  }
  long long pos = 0, neg = 0;
  for (const FoldReport& f : rep.folds) {
    pos += f.test_positives;
    neg += f.test_negatives;
  }
  out << "aggregate," << mean_std_cell(rep.auc) << ',' << mean_std_cell(rep.accuracy) << ','
      << mean_std_cell(rep.sensitivity) << ',' << mean_std_cell(rep.specificity) << ','
      << mean_std_cell(rep.precision);
  for (double t : eval_cfg.recall_targets) out << ',' << mean_std_cell(rep.recall_at.at(t)) << ',';
  out << pos << ',' << neg << '\n';
  return out.str();
}

std::string events_csv(const CvReport& rep) {
  std::ostringstream out;
  out << "target_specificity,scope,group,total,detected,rate\n";
  for (const auto& [target, er] : rep.events_at) {
    out << target_tag(target) << ",overall,all," << er.total_events << ',' << er.detected_events
        << ',' << format_double(er.overall_rate()) << '\n';
    for (const EventGroupRow& row : er.by_size) {
      out << target_tag(target) << ",size," << row.group << ',' << row.total << ',' << row.detected
          << ',' << format_double(row.rate()) << '\n';
    }
    for (const EventGroupRow& row : er.by_morphology) {
      out << target_tag(target) << ",morphology," << row.group << ',' << row.total << ','
          << row.detected << ',' << format_double(row.rate()) << '\n';
    }
  }
  return out.str();
}

std::string roc_csv(const RocCurve& curve) {
  std::ostringstream out;
  out << "threshold,fpr,tpr\n";
  for (const RocPoint& p : curve.points) {
    out << format_double(p.threshold) << ',' << format_double(p.fpr) << ',' << format_double(p.tpr)
        << '\n';
  }
  return out.str();
}

std::string scores_csv(const std::vector<ScoredFrame>& scored) {
  std::ostringstream out;
  out << "procedure_id,frame_index,label,event_id,score\n";
  for (const ScoredFrame& s : scored) {
    out << s.procedure_id << ',' << s.frame_index << ',' << s.label << ',' << s.event_id << ','
        << format_double(s.score) << '\n';
  }
  return out.str();
}

ojson mean_std_json(const MeanStd& ms) { return {{"mean", ms.mean}, {"std", ms.stdev}}; }

// shared by the margin and embedding sweeps: cross-validate per value
std::string value_sweep_csv(const std::string& value_column, const std::vector<double>& values,
                            const std::vector<CvReport>& reports, const EvalConfig& eval_cfg) {
  std::ostringstream out;
  out << value_column << ",auc_mean,auc_std";
  for (double t : eval_cfg.recall_targets) {
    out << ",recall_at_" << target_tag(t) << "_mean,recall_at_" << target_tag(t) << "_std";
  }
  out << '\n';
  for (size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]) << ',' << format_double(reports[i].auc.mean) << ','
        << format_double(reports[i].auc.stdev);
    for (double t : eval_cfg.recall_targets) {
      const MeanStd& ms = reports[i].recall_at.at(t);
      out << ',' << format_double(ms.mean) << ',' << format_double(ms.stdev);
    }
    out << '\n';
  }
  return out.str();
}

struct CamExport {
  std::string kind;
  int rank;
  ScoredFrame frame;
  int hit = -1;  // -1 unknown (no mask), else 0/1
};

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
  njson j;
  try {
    j = njson::parse(json_text);
  } catch (const njson::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  expect_keys(j, {"dataset", "train", "eval", "sweep", "cam", "seed"}, "config root");

  ExperimentConfig cfg;
  cfg.seed = get_or<uint64_t>(j, "seed", cfg.seed);
  if (j.contains("dataset")) parse_dataset(j.at("dataset"), cfg.dataset);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("eval")) parse_eval(j.at("eval"), cfg.eval);
  if (j.contains("sweep")) parse_sweep(j.at("sweep"), cfg.sweep);
  if (j.contains("cam")) parse_cam(j.at("cam"), cfg.cam);

  cfg.dataset.gen.seed = cfg.seed;
  cfg.train.cfg.seed = cfg.seed;
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  if (path.empty()) return parse_experiment_config("{}");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_experiment_config(ss.str());
}

ojson resolved_config_json(const ExperimentConfig& cfg) {
  ojson j;
  j["seed"] = cfg.seed;

  ojson ds;
  const GeneratorConfig& g = cfg.dataset.gen;
  ds["num_procedures"] = g.num_procedures;
  ds["frac_with_events"] = g.frac_with_events;
  ojson epd, fpd;
  for (auto& [k, p] : g.events_per_procedure_dist) epd[std::to_string(k)] = p;
  for (auto& [k, p] : g.frames_per_event_dist) fpd[std::to_string(k)] = p;
  ds["events_per_procedure_dist"] = epd;
  ds["frames_per_event_dist"] = fpd;
  ojson mix;
  for (int s = 0; s < 3; ++s) {
    ojson row;
    for (int m = 0; m < 3; ++m) {
      row[kMorphNames[m]] = g.size_morphology_mix[static_cast<size_t>(s)][static_cast<size_t>(m)];
    }
    mix[kSizeNames[s]] = row;
  }
  ds["size_morphology_mix"] = mix;
  ds["negative_frames_per_procedure"] = g.negative_frames_per_procedure;
  ds["frame_size"] = g.frame_size;
  ds["channels"] = g.channels;
  ds["distractor_rate"] = g.distractor_rate;
  ds["path"] = cfg.dataset.path;
  j["dataset"] = ds;

  ojson tr;
  const TrainConfig& t = cfg.train.cfg;
  tr["method"] = to_string(t.method);
  tr["margin"] = t.margin;
  tr["embedding_head"] = t.embedding_head;
  tr["learning_rate"] = t.learning_rate;
  tr["epochs"] = t.epochs;
  tr["stage2_epochs"] = t.stage2_epochs;
  tr["weight_decay"] = t.weight_decay;
  tr["normalize_embeddings"] = t.normalize_embeddings;
  tr["batch_size"] = t.plan.batch_size;
  tr["positive_fraction"] = t.plan.positive_fraction;
  tr["augment"] = t.plan.augment;
  tr["val_fold"] = cfg.train.val_fold;
  j["train"] = tr;

  ojson ev;
  ev["threshold"] = cfg.eval.cfg.threshold;
  ev["recall_targets"] = cfg.eval.cfg.recall_targets;
  ev["min_negative_ratio"] = cfg.eval.cfg.min_negative_ratio;
  ev["folds"] = cfg.eval.folds;
  j["eval"] = ev;

  ojson sw;
  sw["margins"] = cfg.sweep.margins;
  sw["embedding_sizes"] = cfg.sweep.embedding_sizes;
  sw["degrees"] = cfg.sweep.degrees;
  sw["repeats"] = cfg.sweep.repeats;
  j["sweep"] = sw;

  ojson cm;
  cm["target_specificity"] = cfg.cam.target_specificity;
  cm["dilation_px"] = cfg.cam.dilation_px;
  cm["max_gallery"] = cfg.cam.max_gallery;
  j["cam"] = cm;
  return j;
}

uint64_t fnv1a64(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_run_record(const std::filesystem::path& out_dir, const std::string& command,
                      const ExperimentConfig& cfg, int jobs) {
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path record = out_dir / "run.json";
  if (std::filesystem::exists(record)) {
    throw ConfigError("run directory " + out_dir.string() +
                      " already contains run.json (runs are append-only); choose a fresh --out");
  }
  const ojson resolved = resolved_config_json(cfg);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx",
                static_cast<unsigned long long>(fnv1a64(resolved.dump())));
  ojson j;
  j["command"] = command;
  j["version"] = "0.1.0";
  j["seed"] = cfg.seed;
  j["jobs"] = jobs;
  j["config_hash"] = std::string("fnv1a64-") + hash;
  j["config"] = resolved;
  write_text(record, j.dump(2) + "\n");
}

void cmd_gen_data(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs) {
  cfg.dataset.gen.validate();
  write_run_record(out, "gen-data", cfg, jobs);
  const Dataset ds = generate_dataset(cfg.dataset.gen);
  write_dataset(ds, out / "dataset");

  long long frames = 0;
  for (const ProcedureInfo& p : ds.manifest.procedures) frames += p.num_frames;
  const int positives = ds.manifest.num_positive_frames();
  ojson s;
  s["procedures"] = ds.manifest.procedures.size();
  s["event_procedures"] = ds.manifest.num_event_procedures();
  s["events"] = ds.manifest.events.size();
  s["frames"] = frames;
  s["positive_frames"] = positives;
  s["negatives_per_positive"] =
      positives == 0 ? 0.0 : static_cast<double>(frames - positives) / positives;
  write_text(out / "data_summary.json", s.dump(2) + "\n");
}

void cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs) {
  cfg.train.cfg.validate();
  write_run_record(out, "train", cfg, jobs);
  const Dataset ds = load_configured_dataset(cfg);
  const FoldAssignment fa =
      split_by_procedure(ds.manifest, cfg.eval.folds, mix_seed(cfg.seed, 0x5b717));
  if (cfg.train.val_fold < 0 || cfg.train.val_fold >= fa.k) {
    throw ConfigError("val_fold " + std::to_string(cfg.train.val_fold) + " outside 0.." +
                      std::to_string(fa.k - 1));
  }
  const std::vector<int> train_procs = fa.train_procedures(cfg.train.val_fold);
  const std::vector<int>& val_procs = fa.procedures_in_fold[static_cast<size_t>(cfg.train.val_fold)];

  const TrainResult tr = train(cfg.train.cfg, ds, make_train_view(ds.manifest, train_procs));
  save_model(tr.model, out / "model.trm1");
  write_text(out / "history.csv", tr.history.to_csv());

  const std::vector<ScoredFrame> scored = score_procedures(tr.model, ds, val_procs);
  write_text(out / "val_scores.csv", scores_csv(scored));
  ojson s;
  s["val_fold"] = cfg.train.val_fold;
  s["val_auc"] = roc_and_auc(scored).auc;
  s["epochs_run"] = tr.history.records.size();
  write_text(out / "train_summary.json", s.dump(2) + "\n");
}

void cmd_eval(const ExperimentConfig& cfg, const std::filesystem::path& out, int jobs) {
  write_run_record(out, "eval", cfg, jobs);
  const Dataset ds = load_configured_dataset(cfg);
  const CvReport rep =
      cross_validate(ds, cfg.train.cfg, cfg.eval.cfg, cfg.eval.folds, cfg.seed, jobs);

  write_text(out / "cv_metrics.csv", cv_metrics_csv(rep, cfg.eval.cfg));
  write_text(out / "cv_events.csv", events_csv(rep));
  for (const FoldReport& f : rep.folds) {
    write_text(out / ("roc_fold" + std::to_string(f.fold) + ".csv"),
               roc_csv(roc_and_auc(f.scored)));
    write_text(out / ("scores_fold" + std::to_string(f.fold) + ".csv"), scores_csv(f.scored));
    write_text(out / ("history_fold" + std::to_string(f.fold) + ".csv"), f.history.to_csv());
  }

  ojson s;
  s["folds"] = cfg.eval.folds;
  s["method"] = to_string(cfg.train.cfg.method);
  s["auc"] = mean_std_json(rep.auc);
  s["accuracy"] = mean_std_json(rep.accuracy);
  s["sensitivity"] = mean_std_json(rep.sensitivity);
  s["specificity"] = mean_std_json(rep.specificity);
  s["precision"] = mean_std_json(rep.precision);
  ojson recalls;
  for (const auto& [t, ms] : rep.recall_at) recalls[target_tag(t)] = mean_std_json(ms);
  s["recall_at_specificity"] = recalls;
  ojson events;
  for (const auto& [t, er] : rep.events_at) {
    events[target_tag(t)] = {{"total", er.total_events},
                             {"detected", er.detected_events},
                             {"rate", er.overall_rate()}};
  }
  s["event_detection"] = events;
  s["warnings"] = rep.warnings;
  write_text(out / "summary.json", s.dump(2) + "\n");
}

void cmd_sweep(const ExperimentConfig& cfg, const std::string& kind,
               const std::filesystem::path& out, int jobs) {
  write_run_record(out, "sweep-" + kind, cfg, jobs);
  const Dataset ds = load_configured_dataset(cfg);

  if (kind == "margin") {
    std::vector<CvReport> reports;
    for (double m : cfg.sweep.margins) {
      TrainConfig t = cfg.train.cfg;
      t.margin = m;
      reports.push_back(cross_validate(ds, t, cfg.eval.cfg, cfg.eval.folds, cfg.seed, jobs));
    }
    write_text(out / "margin_sweep.csv",
               value_sweep_csv("margin", cfg.sweep.margins, reports, cfg.eval.cfg));
  } else if (kind == "embedding") {
    std::vector<double> values;
    std::vector<CvReport> reports;
    for (int e : cfg.sweep.embedding_sizes) {
      TrainConfig t = cfg.train.cfg;
      t.embedding_head = e;
      values.push_back(e);
      reports.push_back(cross_validate(ds, t, cfg.eval.cfg, cfg.eval.folds, cfg.seed, jobs));
    }
    write_text(out / "embedding_sweep.csv",
               value_sweep_csv("embedding_size", values, reports, cfg.eval.cfg));
  } else if (kind == "imbalance") {
    const ImbalanceReport rep = imbalance_sweep(ds, cfg.train.cfg, cfg.eval.cfg,
                                                cfg.sweep.degrees, cfg.sweep.repeats, cfg.seed, jobs);
    std::ostringstream cells;
    cells << "degree,repeat,method,auc\n";
    for (const SweepCell& c : rep.cells) {
      cells << c.degree << ',' << c.repeat << ',' << to_string(c.method) << ','
            << format_double(c.auc) << '\n';
    }
    write_text(out / "imbalance_cells.csv", cells.str());
    std::ostringstream summary;
    summary << "degree,method,auc_mean,auc_std\n";
    for (const ImbalanceRow& r : rep.rows) {
      summary << r.degree << ',' << to_string(r.method) << ',' << format_double(r.auc.mean) << ','
              << format_double(r.auc.stdev) << '\n';
    }
    write_text(out / "imbalance_summary.csv", summary.str());
  } else {
    throw ConfigError("unknown sweep kind '" + kind + "' (expected margin, embedding or imbalance)");
  }
}

void cmd_cam(const ExperimentConfig& cfg, const std::filesystem::path& checkpoint,
             const std::vector<std::pair<int, int>>& frames, const std::filesystem::path& out,
             int jobs) {
  if (cfg.cam.target_specificity < 0.0 || cfg.cam.target_specificity > 1.0) {
    throw ConfigError("cam.target_specificity must lie in [0,1]");
  }
  if (cfg.cam.max_gallery < 0) throw ConfigError("cam.max_gallery must be >= 0");
  write_run_record(out, "cam", cfg, jobs);
  const Dataset ds = load_configured_dataset(cfg);
  const ModelState model = load_model(checkpoint);
  const std::vector<double> weights = effective_weights(model);

  const FoldAssignment fa =
      split_by_procedure(ds.manifest, cfg.eval.folds, mix_seed(cfg.seed, 0x5b717));
  if (cfg.train.val_fold < 0 || cfg.train.val_fold >= fa.k) {
    throw ConfigError("val_fold " + std::to_string(cfg.train.val_fold) + " outside 0.." +
                      std::to_string(fa.k - 1));
  }
  const std::vector<int>& val_procs = fa.procedures_in_fold[static_cast<size_t>(cfg.train.val_fold)];
  const std::vector<ScoredFrame> scored = score_procedures(model, ds, val_procs);
  const OperatingPoint op = recall_at_specificity(scored, cfg.cam.target_specificity);

  const auto by_score_desc = [](const ScoredFrame& a, const ScoredFrame& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.procedure_id != b.procedure_id) return a.procedure_id < b.procedure_id;
    return a.frame_index < b.frame_index;
  };

  std::vector<ScoredFrame> tp, fp, fn;
  for (const ScoredFrame& s : scored) {
    if (s.label == 1 && s.score > op.threshold) tp.push_back(s);
    if (s.label == 0 && s.score > op.threshold) fp.push_back(s);
    if (s.label == 1 && s.score <= op.threshold) fn.push_back(s);
  }
  std::sort(tp.begin(), tp.end(), by_score_desc);
  std::sort(fp.begin(), fp.end(), by_score_desc);
  std::sort(fn.begin(), fn.end(), by_score_desc);

  std::filesystem::create_directories(out / "cam");
  const int side = ds.manifest.frame_size;

  auto cam_of = [&](const ScoredFrame& s) {
    const Image8& img = ds.frames[static_cast<size_t>(s.procedure_id)][static_cast<size_t>(s.frame_index)];
    Tensor frame = to_tensor(img);
    Tensor batch({1, frame.dim(0), frame.dim(1), frame.dim(2)});
    std::copy(frame.data.begin(), frame.data.end(), batch.data.begin());
    const ForwardPass fpass = forward(model, batch);
    const Tensor& maps = feature_maps_of(model, fpass);  // (1,K,h,w)
    Tensor maps3({maps.dim(1), maps.dim(2), maps.dim(3)});
    std::copy(maps.data.begin(), maps.data.end(), maps3.data.begin());
    return upsample_bilinear(compute_cam(maps3, weights), side, side);
  };

  // localization over every true positive, galleries capped separately
  int hits = 0;
  std::vector<std::pair<ScoredFrame, bool>> tp_hits;
  for (const ScoredFrame& s : tp) {
    const bool hit = localization_hit(cam_of(s), ds.mask_of(s.procedure_id, s.frame_index), side,
                                      cfg.cam.dilation_px);
    hits += hit ? 1 : 0;
    tp_hits.emplace_back(s, hit);
  }

  std::vector<CamExport> exports;
  auto add_gallery = [&](const char* kind, const std::vector<ScoredFrame>& list) {
    const int n = std::min<int>(cfg.cam.max_gallery, static_cast<int>(list.size()));
    for (int i = 0; i < n; ++i) exports.push_back({kind, i, list[static_cast<size_t>(i)], -1});
  };
  if (frames.empty()) {
    add_gallery("tp", tp);
    add_gallery("fp", fp);
    add_gallery("fn", fn);
  } else {
    int rank = 0;
    for (const auto& [pid, fidx] : frames) {
      if (pid < 0 || pid >= static_cast<int>(ds.manifest.procedures.size()) || fidx < 0 ||
          fidx >= ds.manifest.procedures[static_cast<size_t>(pid)].num_frames) {
        throw ConfigError("frame selector " + std::to_string(pid) + ":" + std::to_string(fidx) +
                          " outside the dataset");
      }
      ScoredFrame s{pid, fidx, ds.manifest.event_of(pid, fidx),
                    ds.manifest.is_positive(pid, fidx) ? 1 : 0, 0.0};
      const std::vector<double> sc =
          score_frames(model, {to_tensor(ds.frames[static_cast<size_t>(pid)][static_cast<size_t>(fidx)])});
      s.score = sc[0];
      exports.push_back({"sel", rank++, s, -1});
    }
  }

  std::ostringstream gallery;
  gallery << "kind,rank,procedure_id,frame_index,label,score,localization_hit\n";
  for (CamExport& e : exports) {
    const Tensor cam = cam_of(e.frame);
    if (e.frame.label == 1) {
      e.hit = localization_hit(cam, ds.mask_of(e.frame.procedure_id, e.frame.frame_index), side,
                               cfg.cam.dilation_px)
                  ? 1
                  : 0;
    }
    const std::string stem = e.kind + std::to_string(e.rank) + "_proc" +
                             std::to_string(e.frame.procedure_id) + "_frame" +
                             std::to_string(e.frame.frame_index);
    export_overlay(ds.frames[static_cast<size_t>(e.frame.procedure_id)]
                            [static_cast<size_t>(e.frame.frame_index)],
                   cam, out / "cam" / (stem + ".ppm"));
    write_text(out / "cam" / (stem + "_cam.csv"), cam_to_csv(cam));
    gallery << e.kind << ',' << e.rank << ',' << e.frame.procedure_id << ',' << e.frame.frame_index
            << ',' << e.frame.label << ',' << format_double(e.frame.score) << ',';
    if (e.hit >= 0) gallery << e.hit;
    gallery << '\n';
  }
  write_text(out / "cam_gallery.csv", gallery.str());

  ojson s;
  s["target_specificity"] = cfg.cam.target_specificity;
  s["threshold"] = op.threshold;
  s["achieved_specificity"] = op.specificity;
  s["val_fold"] = cfg.train.val_fold;
  s["true_positives"] = tp.size();
  s["false_positives"] = fp.size();
  s["false_negatives"] = fn.size();
  s["localization_hits"] = hits;
  s["localization_rate"] = tp.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(tp.size());
  write_text(out / "cam_summary.json", s.dump(2) + "\n");
}

}  // namespace tml
