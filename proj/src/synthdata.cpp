#include "tml/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "tml/common.hpp"

namespace tml {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Frame pixels are kept in float while a frame is composed, then quantized.
struct Canvas {
  int side;
  std::vector<double> rgb;  // (3, side, side)
  double& at(int c, int y, int x) { return rgb[(static_cast<size_t>(c) * side + y) * side + x]; }
};

struct BaseColor {
  double r, g, b;
};

BaseColor draw_mucosa_color(Rng& rng) {
  return {rng.uniform(0.55, 0.75), rng.uniform(0.35, 0.50), rng.uniform(0.28, 0.42)};
}

void render_background(Canvas& cv, const BaseColor& base, Rng& rng) {
  const int n = cv.side;
  // two low-frequency waves give the mucosa its folds
  double f1x = rng.uniform(0.03, 0.09), f1y = rng.uniform(0.03, 0.09), p1 = rng.uniform(0.0, 2 * kPi);
  double f2x = rng.uniform(0.06, 0.16), f2y = rng.uniform(0.06, 0.16), p2 = rng.uniform(0.0, 2 * kPi);
  double a1 = rng.uniform(0.03, 0.07), a2 = rng.uniform(0.02, 0.05);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double w = a1 * std::sin(2 * kPi * (f1x * x + f1y * y) + p1) +
                 a2 * std::sin(2 * kPi * (f2x * x - f2y * y) + p2);
      double noise = rng.uniform(-0.03, 0.03);
      cv.at(0, y, x) = clamp01(base.r + w + noise);
      cv.at(1, y, x) = clamp01(base.g + 0.8 * w + noise);
      cv.at(2, y, x) = clamp01(base.b + 0.7 * w + noise);
    }
  }
}

// Soft-edged elliptical alpha at normalized distance d: 1 inside, fading to
// 0 at d = 1.15. Mask membership is alpha >= 0.5, i.e. d <= 1.
double ellipse_alpha(double d) { return clamp01((1.15 - d) / 0.30); }

struct Lobe {
  double cy, cx;     // center
  double a, b;       // semi-axes
  double theta;      // rotation
};

double lobe_dist(const Lobe& l, double y, double x) {
  double dy = y - l.cy, dx = x - l.cx;
  double u = (dx * std::cos(l.theta) + dy * std::sin(l.theta)) / l.a;
  double v = (-dx * std::sin(l.theta) + dy * std::cos(l.theta)) / l.b;
  return std::sqrt(u * u + v * v);
}

// Fixed shape parameters for one event; the per-frame center drifts.
struct PolypShape {
  Morphology morphology;
  double radius;
  double axis_ratio;   // a = r*s, b = r/s keeps the area near pi*r^2
  double theta;
  double stalk_dir;    // pedunculated only
  std::array<double, 3> lobe_scale;   // undefined only
  std::array<double, 3> lobe_angle;
  int lobes;
  double dr, dg, db;   // color shift against the mucosa
};

PolypShape draw_polyp_shape(SizeClass size, Morphology morph, Rng& rng) {
  PolypShape s;
  s.morphology = morph;
  auto [rlo, rhi] = size_class_radius(size);
  s.radius = rng.uniform(rlo, rhi);
  s.axis_ratio = rng.uniform(0.85, 1.2);
  s.theta = rng.uniform(0.0, kPi);
  s.stalk_dir = rng.uniform(0.0, 2 * kPi);
  s.lobes = 2 + static_cast<int>(rng.index(2));
  for (int i = 0; i < 3; ++i) {
    s.lobe_scale[i] = rng.uniform(0.55, 0.75);
    s.lobe_angle[i] = rng.uniform(0.0, 2 * kPi);
  }
  s.dr = rng.uniform(0.14, 0.24);
  s.dg = -rng.uniform(0.04, 0.12);
  s.db = -rng.uniform(0.02, 0.08);
  return s;
}

// Alpha field of the polyp at (y,x) given its current center.
double polyp_alpha(const PolypShape& s, double cy, double cx, double y, double x) {
  double alpha = 0.0;
  switch (s.morphology) {
    case Morphology::Sessile: {
      Lobe l{cy, cx, s.radius * s.axis_ratio, s.radius / s.axis_ratio, s.theta};
      alpha = ellipse_alpha(lobe_dist(l, y, x));
      break;
    }
    case Morphology::Pedunculated: {
      Lobe body{cy, cx, s.radius * s.axis_ratio, s.radius / s.axis_ratio, s.theta};
      alpha = ellipse_alpha(lobe_dist(body, y, x));
      // thin stalk from the body edge outward; may clip at the frame border
      double sy = std::sin(s.stalk_dir), sx = std::cos(s.stalk_dir);
      double t0 = 0.8 * s.radius, t1 = 1.8 * s.radius;
      double py = y - cy, px = x - cx;
      double along = py * sy + px * sx;
      double across = std::abs(px * sy - py * sx);
      if (along >= t0 && along <= t1) {
        double stalk = clamp01((1.3 - across / 0.9) / 0.6);
        alpha = std::max(alpha, stalk);
      }
      break;
    }
    case Morphology::Undefined: {
      for (int i = 0; i < s.lobes; ++i) {
        double off = 0.45 * s.radius;
        double ly = cy + off * std::sin(s.lobe_angle[i]);
        double lx = cx + off * std::cos(s.lobe_angle[i]);
        double lr = s.radius * s.lobe_scale[i];
        Lobe l{ly, lx, lr * s.axis_ratio, lr / s.axis_ratio, s.theta + i};
        alpha = std::max(alpha, ellipse_alpha(lobe_dist(l, y, x)));
      }
      break;
    }
  }
  return alpha;
}

void render_polyp(Canvas& cv, std::vector<uint8_t>& mask, const PolypShape& s, double cy,
                  double cx, const BaseColor& base, Rng& rng) {
  const int n = cv.side;
  double pr = clamp01(base.r + s.dr), pg = clamp01(base.g + s.dg), pb = clamp01(base.b + s.db);
  int reach = static_cast<int>(std::ceil(2.0 * s.radius)) + 2;
  int y0 = std::max(0, static_cast<int>(cy) - reach), y1 = std::min(n - 1, static_cast<int>(cy) + reach);
  int x0 = std::max(0, static_cast<int>(cx) - reach), x1 = std::min(n - 1, static_cast<int>(cx) + reach);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double alpha = polyp_alpha(s, cy, cx, y, x);
      if (alpha <= 0.0) continue;
      double tex = rng.uniform(-0.02, 0.02);
      cv.at(0, y, x) = clamp01((1 - alpha) * cv.at(0, y, x) + alpha * (pr + tex));
      cv.at(1, y, x) = clamp01((1 - alpha) * cv.at(1, y, x) + alpha * (pg + tex));
      cv.at(2, y, x) = clamp01((1 - alpha) * cv.at(2, y, x) + alpha * (pb + tex));
      if (alpha >= 0.5) mask[static_cast<size_t>(y) * n + x] = 1;
    }
  }
}

void render_distractor(Canvas& cv, Rng& rng) {
  const int n = cv.side;
  bool bubble = rng.bernoulli(0.5);
  double r = rng.uniform(2.0, bubble ? 4.5 : 5.0);
  int margin = static_cast<int>(std::ceil(1.3 * r)) + 1;
  double cy = rng.uniform(margin, n - 1 - margin);
  double cx = rng.uniform(margin, n - 1 - margin);
  double shift = rng.uniform(0.08, 0.14);
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double d = std::hypot(y - cy, x - cx) / r;
      if (bubble) {
        // bright specular ring, a capsule-imaging artifact
        double ring = std::exp(-((d - 1.0) * (d - 1.0)) / 0.08);
        double v = shift * 1.4 * ring;
        cv.at(0, y, x) = clamp01(cv.at(0, y, x) + v);
        cv.at(1, y, x) = clamp01(cv.at(1, y, x) + v);
        cv.at(2, y, x) = clamp01(cv.at(2, y, x) + v);
      } else {
        // weak reddish patch, far lower contrast than a real event blob
        double patch = clamp01((1.1 - d) / 0.5) * 0.35;
        cv.at(0, y, x) = clamp01(cv.at(0, y, x) + shift * patch);
        cv.at(1, y, x) = clamp01(cv.at(1, y, x) - 0.4 * shift * patch);
      }
    }
  }
}

Image8 quantize(const Canvas& cv) {
  Image8 img{3, cv.side, cv.side, std::vector<uint8_t>(cv.rgb.size())};
  for (size_t i = 0; i < cv.rgb.size(); ++i) {
    img.px[i] = static_cast<uint8_t>(std::lround(clamp01(cv.rgb[i]) * 255.0));
  }
  return img;
}

int body_margin(double radius) { return static_cast<int>(std::ceil(1.2 * radius)) + 1; }

// Smallest frame side that can host the largest blob of a size class.
int required_frame_size(SizeClass s) {
  auto [lo, hi] = size_class_radius(s);
  (void)lo;
  return 2 * body_margin(hi) + 1;
}

void validate_histogram(const std::map<int, double>& h, const char* name) {
  if (h.empty()) throw ConfigError(std::string(name) + ": empty histogram");
  double sum = 0.0;
  for (auto& [k, p] : h) {
    if (k < 1) throw ConfigError(std::string(name) + ": support values must be >= 1");
    if (p < 0.0) throw ConfigError(std::string(name) + ": negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw ConfigError(std::string(name) + ": probabilities sum to " + std::to_string(sum) +
                      ", expected 1");
  }
}

template <typename T>
T draw_from_histogram(const std::map<int, double>& h, Rng& rng) {
  std::vector<double> w;
  std::vector<int> keys;
  for (auto& [k, p] : h) {
    keys.push_back(k);
    w.push_back(p);
  }
  return static_cast<T>(keys[rng.categorical(w)]);
}

struct ProcedureData {
  ProcedureInfo info;
  std::vector<EventAnnotation> events;  // event_id local, rebased later
  std::vector<Image8> frames;
  std::map<int, std::vector<uint8_t>> masks;  // frame index -> mask
};

ProcedureData generate_procedure(const GeneratorConfig& cfg, int proc_id) {
  Rng rng(mix_seed(cfg.seed, static_cast<uint64_t>(proc_id)));
  ProcedureData out;
  out.info.id = proc_id;

  const int n = cfg.frame_size;
  BaseColor base = draw_mucosa_color(rng);

  struct PlannedEvent {
    PolypShape shape;
    int num_frames;
    SizeClass size;
    Morphology morph;
  };
  std::vector<PlannedEvent> planned;
  if (rng.bernoulli(cfg.frac_with_events)) {
    int m = draw_from_histogram<int>(cfg.events_per_procedure_dist, rng);
    for (int e = 0; e < m; ++e) {
      int f = draw_from_histogram<int>(cfg.frames_per_event_dist, rng);
      std::vector<double> w;
      w.reserve(9);
      for (int si = 0; si < 3; ++si)
        for (int mi = 0; mi < 3; ++mi) w.push_back(cfg.size_morphology_mix[si][mi]);
      size_t cell = rng.categorical(w);
      auto size = static_cast<SizeClass>(cell / 3);
      auto morph = static_cast<Morphology>(cell % 3);
      planned.push_back({draw_polyp_shape(size, morph, rng), f, size, morph});
    }
  }

  // Timeline: events occupy consecutive runs separated by negative gaps.
  int total_event_frames = 0;
  for (auto& e : planned) total_event_frames += e.num_frames;
  int negatives = cfg.negative_frames_per_procedure;
  out.info.num_frames = negatives + total_event_frames;

  std::vector<int> cuts;
  for (size_t i = 0; i < planned.size(); ++i) cuts.push_back(static_cast<int>(rng.index(negatives + 1)));
  std::sort(cuts.begin(), cuts.end());

  // event start positions in the final timeline
  std::vector<int> starts;
  int consumed = 0;
  for (size_t i = 0; i < planned.size(); ++i) {
    starts.push_back(cuts[i] + consumed);
    consumed += planned[i].num_frames;
  }

  out.frames.resize(static_cast<size_t>(out.info.num_frames));
  std::vector<char> is_event_frame(static_cast<size_t>(out.info.num_frames), 0);
  for (size_t e = 0; e < planned.size(); ++e) {
    EventAnnotation ann;
    ann.event_id = static_cast<int>(e);
    ann.procedure_id = proc_id;
    ann.size_class = planned[e].size;
    ann.morphology = planned[e].morph;
    for (int f = 0; f < planned[e].num_frames; ++f) {
      ann.frame_indices.push_back(starts[e] + f);
      is_event_frame[static_cast<size_t>(starts[e] + f)] = 1;
    }
    out.events.push_back(std::move(ann));
  }

  // render, walking the timeline in order; each event's blob drifts between
  // consecutive frames like a tracked structure
  size_t next_event = 0;
  double walk_y = 0.0, walk_x = 0.0;
  for (int f = 0; f < out.info.num_frames; ++f) {
    Canvas cv{n, std::vector<double>(3u * n * n)};
    render_background(cv, base, rng);
    if (is_event_frame[static_cast<size_t>(f)]) {
      while (next_event < planned.size() && starts[next_event] + planned[next_event].num_frames <= f)
        ++next_event;
      const PlannedEvent& ev = planned[next_event];
      int margin = body_margin(ev.shape.radius);
      if (2 * margin + 1 > n) {
        throw ConfigError("frame_size " + std::to_string(n) + " too small to render size class '" +
                          to_string(ev.size) + "' (needs >= " + std::to_string(2 * margin + 1) + ")");
      }
      double lo = margin, hi = n - 1.0 - margin;
      if (f == starts[next_event]) {
        walk_y = rng.uniform(lo, hi);
        walk_x = rng.uniform(lo, hi);
      } else {
        walk_y = std::clamp(walk_y + rng.uniform(-1.2, 1.2), lo, hi);
        walk_x = std::clamp(walk_x + rng.uniform(-1.2, 1.2), lo, hi);
      }
      std::vector<uint8_t> mask(static_cast<size_t>(n) * n, 0);
      render_polyp(cv, mask, ev.shape, walk_y, walk_x, base, rng);
      out.masks[f] = std::move(mask);
      out.info.positive_frames.push_back(f);
    } else if (rng.bernoulli(cfg.distractor_rate)) {
      render_distractor(cv, rng);
    }
    out.frames[static_cast<size_t>(f)] = quantize(cv);
  }
  return out;
}

}  // namespace

const char* to_string(SizeClass s) {
  switch (s) {
    case SizeClass::Small: return "small";
    case SizeClass::Medium: return "medium";
    case SizeClass::Large: return "large";
  }
  return "?";
}

const char* to_string(Morphology m) {
  switch (m) {
    case Morphology::Sessile: return "sessile";
    case Morphology::Pedunculated: return "pedunculated";
    case Morphology::Undefined: return "undefined";
  }
  return "?";
}

SizeClass size_class_from_string(const std::string& s) {
  if (s == "small") return SizeClass::Small;
  if (s == "medium") return SizeClass::Medium;
  if (s == "large") return SizeClass::Large;
  throw ConfigError("unknown size class: " + s);
}

Morphology morphology_from_string(const std::string& s) {
  if (s == "sessile") return Morphology::Sessile;
  if (s == "pedunculated") return Morphology::Pedunculated;
  if (s == "undefined") return Morphology::Undefined;
  throw ConfigError("unknown morphology: " + s);
}

std::pair<double, double> size_class_radius(SizeClass s) {
  switch (s) {
    case SizeClass::Small: return {2.0, 3.0};
    case SizeClass::Medium: return {4.0, 5.0};
    case SizeClass::Large: return {6.0, 8.0};
  }
  return {0, 0};
}

void GeneratorConfig::validate() const {
  if (num_procedures < 2) throw ConfigError("num_procedures must be >= 2");
  if (frac_with_events < 0.0 || frac_with_events > 1.0)
    throw ConfigError("frac_with_events must lie in [0,1]");
  if (frame_size < 16) throw ConfigError("frame_size must be >= 16");
  if (channels != 3) throw ConfigError("channels must be 3");
  if (negative_frames_per_procedure < 1)
    throw ConfigError("negative_frames_per_procedure must be >= 1");
  if (distractor_rate < 0.0 || distractor_rate > 1.0)
    throw ConfigError("distractor_rate must lie in [0,1]");
  validate_histogram(events_per_procedure_dist, "events_per_procedure_dist");
  validate_histogram(frames_per_event_dist, "frames_per_event_dist");
  double mix_sum = 0.0;
  for (auto& row : size_morphology_mix)
    for (double p : row) {
      if (p < 0.0) throw ConfigError("size_morphology_mix: negative probability");
      mix_sum += p;
    }
  if (std::abs(mix_sum - 1.0) > 1e-9)
    throw ConfigError("size_morphology_mix: probabilities sum to " + std::to_string(mix_sum) +
                      ", expected 1");
  if (frac_with_events > 0.0) {
    for (int si = 0; si < 3; ++si) {
      double row = size_morphology_mix[si][0] + size_morphology_mix[si][1] + size_morphology_mix[si][2];
      if (row > 0.0 && frame_size < required_frame_size(static_cast<SizeClass>(si))) {
        throw ConfigError("frame_size " + std::to_string(frame_size) +
                          " too small to render size class '" +
                          to_string(static_cast<SizeClass>(si)) + "' (needs >= " +
                          std::to_string(required_frame_size(static_cast<SizeClass>(si))) + ")");
      }
    }
  }
}

bool DatasetManifest::is_positive(int procedure_id, int frame_index) const {
  return frame_event_.count({procedure_id, frame_index}) > 0;
}

int DatasetManifest::event_of(int procedure_id, int frame_index) const {
  auto it = frame_event_.find({procedure_id, frame_index});
  return it == frame_event_.end() ? -1 : it->second;
}

int DatasetManifest::num_positive_frames() const { return static_cast<int>(frame_event_.size()); }

int DatasetManifest::num_event_procedures() const {
  int n = 0;
  for (auto& p : procedures) n += p.positive_frames.empty() ? 0 : 1;
  return n;
}

void DatasetManifest::rebuild_index() {
  frame_event_.clear();
  for (auto& e : events) {
    if (e.frame_indices.empty()) throw ConfigError("event " + std::to_string(e.event_id) + " has zero frames");
    for (int f : e.frame_indices) frame_event_[{e.procedure_id, f}] = e.event_id;
  }
}

const std::vector<uint8_t>& Dataset::mask_of(int procedure_id, int frame_index) const {
  auto it = masks.find({procedure_id, frame_index});
  if (it == masks.end()) {
    throw std::runtime_error("no mask for procedure " + std::to_string(procedure_id) + " frame " +
                             std::to_string(frame_index));
  }
  return it->second;
}

Dataset generate_dataset(const GeneratorConfig& config) {
  config.validate();
  Dataset ds;
  ds.manifest.frame_size = config.frame_size;
  ds.manifest.channels = config.channels;
  ds.manifest.seed = config.seed;

  int next_event_id = 0;
  for (int p = 0; p < config.num_procedures; ++p) {
    ProcedureData pd = generate_procedure(config, p);
    for (auto& e : pd.events) {
      e.event_id = next_event_id++;
      ds.manifest.events.push_back(e);
    }
    for (auto& [f, m] : pd.masks) ds.masks[{p, f}] = std::move(m);
    ds.manifest.procedures.push_back(std::move(pd.info));
    ds.frames.push_back(std::move(pd.frames));
  }
  ds.manifest.rebuild_index();
  return ds;
}

std::string manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "tml-dataset-v1";
  j["frame_size"] = m.frame_size;
  j["channels"] = m.channels;
  j["seed"] = m.seed;
  j["procedures"] = nlohmann::ordered_json::array();
  for (auto& p : m.procedures) {
    j["procedures"].push_back({{"id", p.id},
                               {"num_frames", p.num_frames},
                               {"positive_frames", p.positive_frames}});
  }
  j["events"] = nlohmann::ordered_json::array();
  for (auto& e : m.events) {
    j["events"].push_back({{"event_id", e.event_id},
                           {"procedure_id", e.procedure_id},
                           {"frame_indices", e.frame_indices},
                           {"size_class", to_string(e.size_class)},
                           {"morphology_class", to_string(e.morphology)}});
  }
  return j.dump(2) + "\n";
}

DatasetManifest manifest_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("manifest parse error: ") + e.what());
  }
  if (j.value("format", "") != "tml-dataset-v1") throw ConfigError("manifest: unknown format tag");
  DatasetManifest m;
  m.frame_size = j.at("frame_size").get<int>();
  m.channels = j.at("channels").get<int>();
  m.seed = j.at("seed").get<uint64_t>();
  for (auto& pj : j.at("procedures")) {
    ProcedureInfo p;
    p.id = pj.at("id").get<int>();
    p.num_frames = pj.at("num_frames").get<int>();
    p.positive_frames = pj.at("positive_frames").get<std::vector<int>>();
    m.procedures.push_back(std::move(p));
  }
  for (auto& ej : j.at("events")) {
    EventAnnotation e;
    e.event_id = ej.at("event_id").get<int>();
    e.procedure_id = ej.at("procedure_id").get<int>();
    e.frame_indices = ej.at("frame_indices").get<std::vector<int>>();
    e.size_class = size_class_from_string(ej.at("size_class").get<std::string>());
    e.morphology = morphology_from_string(ej.at("morphology_class").get<std::string>());
    m.events.push_back(std::move(e));
  }
  m.rebuild_index();
  return m;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write " + (dir / "manifest.json").string());
  mf << manifest_to_json(ds.manifest);
  mf.close();
  for (auto& p : ds.manifest.procedures) {
    for (int f = 0; f < p.num_frames; ++f) {
      std::string stem = "proc" + std::to_string(p.id) + "_frame" + std::to_string(f);
      write_ppm(dir / (stem + ".ppm"), ds.frames[static_cast<size_t>(p.id)][static_cast<size_t>(f)]);
    }
    for (int f : p.positive_frames) {
      const auto& mask = ds.mask_of(p.id, f);
      Image8 img{1, ds.manifest.frame_size, ds.manifest.frame_size,
                 std::vector<uint8_t>(mask.size())};
      for (size_t i = 0; i < mask.size(); ++i) img.px[i] = mask[i] ? 255 : 0;
      std::string stem = "proc" + std::to_string(p.id) + "_frame" + std::to_string(f);
      write_pgm(dir / (stem + "_mask.pgm"), img);
    }
  }
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream mf(dir / "manifest.json", std::ios::binary);
  if (!mf) throw ConfigError("no manifest.json under " + dir.string());
  std::stringstream ss;
  ss << mf.rdbuf();
  Dataset ds;
  ds.manifest = manifest_from_json(ss.str());
  for (auto& p : ds.manifest.procedures) {
    std::vector<Image8> frames;
    for (int f = 0; f < p.num_frames; ++f) {
      std::string stem = "proc" + std::to_string(p.id) + "_frame" + std::to_string(f);
      frames.push_back(read_ppm(dir / (stem + ".ppm")));
    }
    for (int f : p.positive_frames) {
      std::string stem = "proc" + std::to_string(p.id) + "_frame" + std::to_string(f);
      Image8 img = read_pgm(dir / (stem + "_mask.pgm"));
      std::vector<uint8_t> mask(img.px.size());
      for (size_t i = 0; i < img.px.size(); ++i) mask[i] = img.px[i] >= 128 ? 1 : 0;
      ds.masks[{p.id, f}] = std::move(mask);
    }
    ds.frames.push_back(std::move(frames));
  }
  return ds;
}

Augmentation draw_augmentation(Rng& rng) {
  Augmentation a;
  a.quarter_turns = static_cast<int>(rng.index(4));
  a.flip_h = rng.bernoulli(0.5);
  a.flip_v = rng.bernoulli(0.5);
  a.brightness = rng.uniform(0.8, 1.2);
  return a;
}

namespace {

// (y,x) position in the source image for output position (y,x); rotation is
// applied first, then flips.
std::pair<int, int> source_pixel(int y, int x, int n, const Augmentation& aug) {
  if (aug.flip_v) y = n - 1 - y;
  if (aug.flip_h) x = n - 1 - x;
  // invert the counterclockwise rotation
  for (int t = 0; t < aug.quarter_turns; ++t) {
    int ny = x;
    int nx = n - 1 - y;
    y = ny;
    x = nx;
  }
  return {y, x};
}

}  // namespace

Tensor apply_augmentation(const Tensor& chw, const Augmentation& aug) {
  if (chw.rank() != 3 || chw.dim(1) != chw.dim(2)) {
    throw std::invalid_argument("apply_augmentation: need square (c,h,w) tensor");
  }
  const int c = chw.dim(0), n = chw.dim(1);
  Tensor out({c, n, n});
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      auto [sy, sx] = source_pixel(y, x, n, aug);
      for (int ch = 0; ch < c; ++ch) {
        out.at(ch, y, x) = clamp01(chw.at(ch, sy, sx) * aug.brightness);
      }
    }
  }
  return out;
}

std::vector<uint8_t> apply_augmentation_mask(const std::vector<uint8_t>& mask, int side,
                                             const Augmentation& aug) {
  std::vector<uint8_t> out(mask.size());
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      auto [sy, sx] = source_pixel(y, x, side, aug);
      out[static_cast<size_t>(y) * side + x] = mask[static_cast<size_t>(sy) * side + sx];
    }
  }
  return out;
}

Tensor augment_frame(const Tensor& chw, Rng& rng) {
  return apply_augmentation(chw, draw_augmentation(rng));
}

std::vector<int> FoldAssignment::train_procedures(int test_fold) const {
  std::vector<int> out;
  for (size_t p = 0; p < fold_of_procedure.size(); ++p) {
    if (fold_of_procedure[p] != test_fold) out.push_back(static_cast<int>(p));
  }
  return out;
}

FoldAssignment split_by_procedure(const DatasetManifest& manifest, int k, uint64_t seed) {
  if (k < 2) throw ConfigError("split_by_procedure: k must be >= 2");
  const int np = static_cast<int>(manifest.procedures.size());
  if (np < k) throw ConfigError("split_by_procedure: fewer procedures than folds");

  std::vector<int> bearing, rest;
  for (auto& p : manifest.procedures) {
    (p.positive_frames.empty() ? rest : bearing).push_back(p.id);
  }
  if (static_cast<int>(bearing.size()) < k) {
    throw ConfigError("split_by_procedure: only " + std::to_string(bearing.size()) +
                      " event-bearing procedures for " + std::to_string(k) + " folds");
  }

  Rng rng(mix_seed(seed, 0xf01d));
  rng.shuffle(bearing);
  rng.shuffle(rest);

  FoldAssignment fa;
  fa.k = k;
  fa.fold_of_procedure.assign(static_cast<size_t>(np), -1);
  fa.procedures_in_fold.resize(static_cast<size_t>(k));
  int slot = 0;
  for (int id : bearing) fa.fold_of_procedure[static_cast<size_t>(id)] = slot++ % k;
  for (int id : rest) fa.fold_of_procedure[static_cast<size_t>(id)] = slot++ % k;
  for (int id = 0; id < np; ++id) {
    fa.procedures_in_fold[static_cast<size_t>(fa.fold_of_procedure[static_cast<size_t>(id)])].push_back(id);
  }
  return fa;
}

}  // namespace tml
