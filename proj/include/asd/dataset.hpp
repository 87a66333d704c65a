#pragma once

// DCASE-layout datasets: filename grammar, 16-bit PCM WAV I/O, directory
// scanning, ground-truth CSVs and a synthetic dataset generator.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace asd::dataset {

namespace fs = std::filesystem;

inline constexpr int kDefaultSampleRate = 16000;

enum class Domain { Source, Target, Unknown };
enum class Split { Train, Test };
enum class Label { Normal, Anomaly, Unknown };

std::string_view to_string(Domain d);
std::string_view to_string(Split s);
std::string_view to_string(Label l);
Domain parse_domain(std::string_view s);  // throws InvalidConfig
Label parse_label(std::string_view s);

struct ClipMeta {
  std::string machine_type;
  int section = 0;
  Domain domain = Domain::Unknown;
  Split split = Split::Train;
  Label label = Label::Unknown;
  std::string clip_id;
  std::string attributes;  // opaque tail after the clip index, may be empty
  fs::path path;

  bool operator==(const ClipMeta&) const = default;
};

// Accepts two forms:
//   section_NN_{source|target}_{train|test}_{normal|anomaly}_IDX[_attrs].wav
//   section_NN_IDX[_attrs].wav      (blind test clip: domain/label unknown)
// On failure throws MalformedName with Error::index() = failing 1-based token
// (0 when the .wav extension is missing).
ClipMeta parse_filename(std::string_view name);

// Inverse of parse_filename. A test clip with unknown domain and label
// renders in the blind form.
std::string render_filename(const ClipMeta& meta);

struct AudioClip {
  std::vector<double> samples;
  int sample_rate = kDefaultSampleRate;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

// Mono 16-bit PCM only; samples are int16 / 32768.
AudioClip read_wav(const fs::path& path);
std::vector<std::int16_t> read_wav_pcm16(const fs::path& path, int* sample_rate = nullptr);
void write_wav_pcm16(const fs::path& path, std::span<const std::int16_t> samples, int sample_rate);
// Clamps to [-1, 1] and rounds to int16.
void write_wav(const fs::path& path, const AudioClip& clip);
std::vector<std::int16_t> quantize_pcm16(std::span<const double> samples);

using CountKey = std::tuple<std::string, int, Domain, Split, Label>;

struct DatasetManifest {
  fs::path root;
  std::vector<ClipMeta> clips;  // sorted by path
  std::map<CountKey, int> counts;

  std::vector<std::string> machine_types() const;
  std::vector<int> sections(const std::string& machine_type) const;
  std::vector<ClipMeta> select(const std::string& machine_type, int section, Split split) const;
  int count(const std::string& machine_type, int section, Domain d, Split s, Label l) const;

  void recount();
};

// Scans <root>/<machine_type>/{train,test}/*.wav. Paths in the manifest are
// absolute; ground-truth CSVs use paths relative to root.
DatasetManifest scan_dataset(const fs::path& root);

struct GroundTruthRow {
  std::string path;  // relative to the dataset root, generic separators
  std::string machine_type;
  int section = 0;
  Domain domain = Domain::Unknown;
  Label label = Label::Unknown;
};

void write_ground_truth(const fs::path& csv, std::span<const GroundTruthRow> rows);
std::vector<GroundTruthRow> read_ground_truth(const fs::path& csv);

// Fills domain/label of test clips from ground truth (evaluation/test use only).
void attach_ground_truth(DatasetManifest& manifest, std::span<const GroundTruthRow> rows);

std::string relative_key(const fs::path& root, const fs::path& path);

enum class AnomalyKind { NoiseBurst, HarmonicDrop };

std::string_view to_string(AnomalyKind k);
AnomalyKind parse_anomaly_kind(std::string_view s);

struct MachineSynth {
  std::string name;
  double fundamental_hz = 220.0;
  std::vector<double> harmonic_amplitudes{1.0, 0.6, 0.4, 0.25};
  AnomalyKind anomaly = AnomalyKind::NoiseBurst;
};

struct SynthSpec {
  std::vector<MachineSynth> machines;
  int sections = 1;
  int train_source = 99;
  int train_target = 1;
  int test_normal_per_domain = 20;
  int test_anomaly_per_domain = 20;
  double duration_s = 2.0;
  int sample_rate = kDefaultSampleRate;
  double pitch_factor = 1.25;     // target-domain frequency multiplier
  double tone_level = 0.05;       // peak amplitude per unit harmonic weight
  double noise_level = 0.003;     // white-noise standard deviation
  double anomaly_snr_db = -5.0;   // burst SNR relative to the clip's normal signal
  double burst_fraction = 0.5;    // fraction of the clip covered by a noise burst
  bool ground_truth_labels_in_test_names = false;

  static SynthSpec desk_default();
  void validate() const;  // throws InvalidSpec
};

struct SynthResult {
  std::vector<GroundTruthRow> ground_truth;
  std::map<CountKey, int> requested;
};

inline constexpr const char* kGroundTruthFile = "ground_truth.csv";

// Writes <out>/<machine>/{train,test}/*.wav and <out>/ground_truth.csv.
// Deterministic per seed; each clip draws from its own derived stream.
SynthResult synthesize_dataset(const SynthSpec& spec, std::uint64_t seed, const fs::path& out);

// In-memory generation of a single clip (what synthesize_dataset writes).
AudioClip synthesize_clip(const SynthSpec& spec, std::size_t machine_index, int section, Domain domain,
                          Label label, std::uint64_t stream_seed);

double rms(std::span<const double> samples);

}  // namespace asd::dataset
