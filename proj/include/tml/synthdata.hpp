#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tml/image.hpp"
#include "tml/rng.hpp"
#include "tml/tensor.hpp"

namespace tml {

enum class SizeClass { Small = 0, Medium = 1, Large = 2 };
enum class Morphology { Sessile = 0, Pedunculated = 1, Undefined = 2 };

const char* to_string(SizeClass s);
const char* to_string(Morphology m);
SizeClass size_class_from_string(const std::string& s);
Morphology morphology_from_string(const std::string& s);

// Blob radius bands in pixels per size class (min, max). Disjoint by
// construction so rendered areas separate cleanly at 32x32.
std::pair<double, double> size_class_radius(SizeClass s);

struct GeneratorConfig {
  int num_procedures = 40;
  double frac_with_events = 0.45;
  // Event count distribution for procedures that carry at least one event.
  std::map<int, double> events_per_procedure_dist = {{1, 0.55}, {2, 0.30}, {3, 0.15}};
  std::map<int, double> frames_per_event_dist = {
      {2, 0.25}, {3, 0.30}, {4, 0.20}, {5, 0.15}, {6, 0.10}};
  // Joint mix over [size][morphology], rows Small/Medium/Large, cols
  // Sessile/Pedunculated/Undefined.
  std::array<std::array<double, 3>, 3> size_morphology_mix = {{
      {65.0 / 165, 4.0 / 165, 19.0 / 165},
      {29.0 / 165, 4.0 / 165, 20.0 / 165},
      {8.0 / 165, 3.0 / 165, 13.0 / 165},
  }};
  int negative_frames_per_procedure = 256;
  int frame_size = 32;
  int channels = 3;
  double distractor_rate = 0.05;  // fraction of negative frames with a decoy
  uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

struct EventAnnotation {
  int event_id = 0;
  int procedure_id = 0;
  std::vector<int> frame_indices;  // consecutive within the procedure
  SizeClass size_class = SizeClass::Small;
  Morphology morphology = Morphology::Sessile;
};

struct ProcedureInfo {
  int id = 0;
  int num_frames = 0;
  std::vector<int> positive_frames;  // sorted
};

struct DatasetManifest {
  int frame_size = 32;
  int channels = 3;
  uint64_t seed = 0;
  std::vector<ProcedureInfo> procedures;
  std::vector<EventAnnotation> events;

  // A frame is positive iff it belongs to an event.
  bool is_positive(int procedure_id, int frame_index) const;
  // Event id of a positive frame, or -1.
  int event_of(int procedure_id, int frame_index) const;
  int num_positive_frames() const;
  int num_event_procedures() const;
  void rebuild_index();

 private:
  std::map<std::pair<int, int>, int> frame_event_;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<std::vector<Image8>> frames;                     // [procedure][frame]
  std::map<std::pair<int, int>, std::vector<uint8_t>> masks;   // positive frames, 0/1 per pixel

  const std::vector<uint8_t>& mask_of(int procedure_id, int frame_index) const;
};

// Deterministic for a fixed config: procedure p is generated from the child
// seed mix_seed(config.seed, p), so per-procedure generation is order
// independent. Pixel values are quantized to the 8-bit grid, making the
// on-disk P6 round trip exact.
Dataset generate_dataset(const GeneratorConfig& config);

// Manifest as JSON with stable key order, frames as proc{P}_frame{F}.ppm,
// masks as proc{P}_frame{F}_mask.pgm.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

std::string manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const std::string& text);

// One draw of the training-time augmentation: a quarter turn, independent
// flips, multiplicative brightness in [0.8, 1.2].
struct Augmentation {
  int quarter_turns = 0;  // 0..3 counterclockwise
  bool flip_h = false;
  bool flip_v = false;
  double brightness = 1.0;
};

Augmentation draw_augmentation(Rng& rng);
// Pixels: geometry + brightness, clipped to [0,1]. Requires square frames.
Tensor apply_augmentation(const Tensor& chw, const Augmentation& aug);
// Masks transform with the same geometry, no brightness.
std::vector<uint8_t> apply_augmentation_mask(const std::vector<uint8_t>& mask, int side,
                                             const Augmentation& aug);
Tensor augment_frame(const Tensor& chw, Rng& rng);

struct FoldAssignment {
  int k = 0;
  std::vector<int> fold_of_procedure;               // indexed by procedure id
  std::vector<std::vector<int>> procedures_in_fold; // sorted ids per fold

  std::vector<int> train_procedures(int test_fold) const;
};

// Stratified grouped split: whole procedures only, event-bearing counts per
// fold differ by at most one. Deterministic for a fixed seed.
FoldAssignment split_by_procedure(const DatasetManifest& manifest, int k, uint64_t seed);

}  // namespace tml
