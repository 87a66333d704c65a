#include "asd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <sstream>

#include "asd/detail/bytes.hpp"
#include "asd/error.hpp"
#include "asd/io.hpp"
#include "asd/rng.hpp"

namespace asd::dataset {

std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Source: return "source";
    case Domain::Target: return "target";
    case Domain::Unknown: return "unknown";
  }
  return "unknown";
}

std::string_view to_string(Split s) { return s == Split::Train ? "train" : "test"; }

std::string_view to_string(Label l) {
  switch (l) {
    case Label::Normal: return "normal";
    case Label::Anomaly: return "anomaly";
    case Label::Unknown: return "unknown";
  }
  return "unknown";
}

Domain parse_domain(std::string_view s) {
  if (s == "source") return Domain::Source;
  if (s == "target") return Domain::Target;
  if (s == "unknown") return Domain::Unknown;
  throw Error(ErrorCode::InvalidConfig, "unknown domain '" + std::string(s) + "'");
}

Label parse_label(std::string_view s) {
  if (s == "normal") return Label::Normal;
  if (s == "anomaly") return Label::Anomaly;
  if (s == "unknown") return Label::Unknown;
  throw Error(ErrorCode::InvalidConfig, "unknown label '" + std::string(s) + "'");
}

std::string_view to_string(AnomalyKind k) {
  return k == AnomalyKind::NoiseBurst ? "noise_burst" : "harmonic_drop";
}

AnomalyKind parse_anomaly_kind(std::string_view s) {
  if (s == "noise_burst") return AnomalyKind::NoiseBurst;
  if (s == "harmonic_drop") return AnomalyKind::HarmonicDrop;
  throw Error(ErrorCode::InvalidSpec, "unknown anomaly kind '" + std::string(s) + "'");
}

namespace {

bool is_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

std::string join_tail(const std::vector<std::string>& tokens, std::size_t from) {
  std::string out;
  for (std::size_t i = from; i < tokens.size(); ++i) {
    if (i > from) out += '_';
    out += tokens[i];
  }
  return out;
}

[[noreturn]] void malformed(std::string_view name, int token, std::string_view why) {
  throw Error(ErrorCode::MalformedName,
              "'" + std::string(name) + "' token " + std::to_string(token) + ": " + std::string(why), token);
}

}  // namespace

ClipMeta parse_filename(std::string_view name) {
  constexpr std::string_view ext = ".wav";
  if (name.size() <= ext.size() || name.substr(name.size() - ext.size()) != ext)
    malformed(name, 0, "missing .wav extension");
  const auto tokens = io::split(name.substr(0, name.size() - ext.size()), '_');

  ClipMeta meta;
  if (tokens[0] != "section") malformed(name, 1, "expected 'section'");
  if (tokens.size() < 2 || !is_digits(tokens[1])) malformed(name, 2, "section number must be numeric");
  meta.section = std::stoi(tokens[1]);
  if (tokens.size() < 3) malformed(name, 3, "missing domain or clip index");

  if (is_digits(tokens[2])) {
    meta.split = Split::Test;
    meta.domain = Domain::Unknown;
    meta.label = Label::Unknown;
    meta.clip_id = tokens[2];
    meta.attributes = join_tail(tokens, 3);
    return meta;
  }

  if (tokens[2] == "source") {
    meta.domain = Domain::Source;
  } else if (tokens[2] == "target") {
    meta.domain = Domain::Target;
  } else {
    malformed(name, 3, "domain must be source or target");
  }

  if (tokens.size() < 4) malformed(name, 4, "missing split");
  if (tokens[3] == "train") {
    meta.split = Split::Train;
  } else if (tokens[3] == "test") {
    meta.split = Split::Test;
  } else {
    malformed(name, 4, "split must be train or test");
  }

  if (tokens.size() < 5) malformed(name, 5, "missing label");
  if (tokens[4] == "normal") {
    meta.label = Label::Normal;
  } else if (tokens[4] == "anomaly") {
    meta.label = Label::Anomaly;
  } else {
    malformed(name, 5, "label must be normal or anomaly");
  }
  if (meta.split == Split::Train && meta.label != Label::Normal)
    malformed(name, 5, "training clips must be normal");

  if (tokens.size() < 6 || !is_digits(tokens[5])) malformed(name, 6, "clip index must be numeric");
  meta.clip_id = tokens[5];
  meta.attributes = join_tail(tokens, 6);
  return meta;
}

std::string render_filename(const ClipMeta& meta) {
  char section[16];
  std::snprintf(section, sizeof section, "%02d", meta.section);
  std::string out = "section_" + std::string(section) + "_";
  const bool blind = meta.split == Split::Test && meta.domain == Domain::Unknown && meta.label == Label::Unknown;
  if (!blind) {
    if (meta.domain == Domain::Unknown || meta.label == Label::Unknown)
      throw Error(ErrorCode::InvalidSpec, "labeled filename needs both domain and label");
    out += std::string(to_string(meta.domain)) + "_" + std::string(to_string(meta.split)) + "_" +
           std::string(to_string(meta.label)) + "_";
  }
  out += meta.clip_id;
  if (!meta.attributes.empty()) out += "_" + meta.attributes;
  return out + ".wav";
}

// ---------------------------------------------------------------------------
// WAV

std::vector<std::int16_t> read_wav_pcm16(const fs::path& path, int* sample_rate) {
  const auto bytes = io::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size());
  const std::string where = path.string();
  if (!r.has(12)) throw Error(ErrorCode::CorruptHeader, where + ": shorter than a RIFF header");
  if (r.bytes(4) != "RIFF") throw Error(ErrorCode::CorruptHeader, where + ": missing RIFF tag");
  r.u32();
  if (r.bytes(4) != "WAVE") throw Error(ErrorCode::CorruptHeader, where + ": missing WAVE tag");

  bool have_fmt = false;
  std::uint32_t rate = 0;
  while (r.has(8)) {
    const auto id = r.bytes(4);
    const std::uint32_t size = r.u32();
    if (!r.has(size)) throw Error(ErrorCode::CorruptHeader, where + ": chunk '" + std::string(id) + "' truncated");
    if (id == "fmt ") {
      if (size < 16) throw Error(ErrorCode::CorruptHeader, where + ": fmt chunk too small");
      const std::uint16_t format = r.u16();
      const std::uint16_t channels = r.u16();
      rate = r.u32();
      r.u32();  // byte rate
      r.u16();  // block align
      const std::uint16_t bits = r.u16();
      r.skip(size - 16);
      if (format != 1) throw Error(ErrorCode::UnsupportedFormat, where + ": not PCM (format " + std::to_string(format) + ")");
      if (channels != 1)
        throw Error(ErrorCode::UnsupportedFormat, where + ": " + std::to_string(channels) + " channels, need mono");
      if (bits != 16)
        throw Error(ErrorCode::UnsupportedFormat, where + ": " + std::to_string(bits) + "-bit, need 16-bit");
      if (rate == 0) throw Error(ErrorCode::CorruptHeader, where + ": zero sample rate");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorCode::CorruptHeader, where + ": data chunk before fmt chunk");
      std::vector<std::int16_t> samples(size / 2);
      for (auto& s : samples) s = r.i16();
      if (sample_rate) *sample_rate = static_cast<int>(rate);
      return samples;
    } else {
      r.skip(size);
    }
    if (size % 2 == 1 && r.has(1)) r.skip(1);
  }
  throw Error(ErrorCode::CorruptHeader, where + (have_fmt ? ": no data chunk" : ": no fmt chunk"));
}

AudioClip read_wav(const fs::path& path) {
  AudioClip clip;
  const auto pcm = read_wav_pcm16(path, &clip.sample_rate);
  clip.samples.resize(pcm.size());
  std::transform(pcm.begin(), pcm.end(), clip.samples.begin(),
                 [](std::int16_t v) { return static_cast<double>(v) / 32768.0; });
  return clip;
}

void write_wav_pcm16(const fs::path& path, std::span<const std::int16_t> samples, int sample_rate) {
  const auto data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  detail::ByteWriter w;
  w.put_bytes("RIFF");
  w.put_u32(36 + data_bytes);
  w.put_bytes("WAVE");
  w.put_bytes("fmt ");
  w.put_u32(16);
  w.put_u16(1);
  w.put_u16(1);
  w.put_u32(static_cast<std::uint32_t>(sample_rate));
  w.put_u32(static_cast<std::uint32_t>(sample_rate) * 2);
  w.put_u16(2);
  w.put_u16(16);
  w.put_bytes("data");
  w.put_u32(data_bytes);
  for (auto s : samples) w.put_i16(s);
  io::write_file_atomic(path, w.bytes());
}

std::vector<std::int16_t> quantize_pcm16(std::span<const double> samples) {
  std::vector<std::int16_t> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [](double x) {
    const double v = std::round(std::clamp(x, -1.0, 1.0) * 32768.0);
    return static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
  });
  return out;
}

void write_wav(const fs::path& path, const AudioClip& clip) {
  write_wav_pcm16(path, quantize_pcm16(clip.samples), clip.sample_rate);
}

// ---------------------------------------------------------------------------
// Manifest

std::vector<std::string> DatasetManifest::machine_types() const {
  std::set<std::string> types;
  for (const auto& c : clips) types.insert(c.machine_type);
  return {types.begin(), types.end()};
}

std::vector<int> DatasetManifest::sections(const std::string& machine_type) const {
  std::set<int> s;
  for (const auto& c : clips)
    if (c.machine_type == machine_type) s.insert(c.section);
  return {s.begin(), s.end()};
}

std::vector<ClipMeta> DatasetManifest::select(const std::string& machine_type, int section, Split split) const {
  std::vector<ClipMeta> out;
  for (const auto& c : clips)
    if (c.machine_type == machine_type && c.section == section && c.split == split) out.push_back(c);
  return out;
}

int DatasetManifest::count(const std::string& machine_type, int section, Domain d, Split s, Label l) const {
  const auto it = counts.find({machine_type, section, d, s, l});
  return it == counts.end() ? 0 : it->second;
}

void DatasetManifest::recount() {
  counts.clear();
  for (const auto& c : clips) ++counts[{c.machine_type, c.section, c.domain, c.split, c.label}];
}

std::string relative_key(const fs::path& root, const fs::path& path) {
  return path.lexically_relative(root).generic_string();
}

DatasetManifest scan_dataset(const fs::path& root) {
  if (!fs::is_directory(root)) throw Error(ErrorCode::EmptyDataset, root.string() + " is not a directory");
  DatasetManifest manifest;
  manifest.root = root;

  std::vector<fs::path> machine_dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) machine_dirs.push_back(entry.path());
  std::sort(machine_dirs.begin(), machine_dirs.end());

  for (const auto& dir : machine_dirs) {
    const std::string machine = dir.filename().string();
    for (const Split split : {Split::Train, Split::Test}) {
      const fs::path split_dir = dir / std::string(to_string(split));
      if (!fs::is_directory(split_dir)) continue;
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(split_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".wav") files.push_back(entry.path());
      std::sort(files.begin(), files.end());
      for (const auto& file : files) {
        ClipMeta meta;
        try {
          meta = parse_filename(file.filename().string());
        } catch (const Error& e) {
          throw Error(ErrorCode::MalformedName, file.string() + ": " + e.message(), e.index());
        }
        if (meta.split != split)
          throw Error(ErrorCode::MalformedName,
                      file.string() + ": split in name does not match directory '" + std::string(to_string(split)) + "'", 4);
        meta.machine_type = machine;
        meta.path = file;
        manifest.clips.push_back(std::move(meta));
      }
    }
  }
  if (manifest.clips.empty()) throw Error(ErrorCode::EmptyDataset, "no .wav files under " + root.string());
  manifest.recount();
  return manifest;
}

// ---------------------------------------------------------------------------
// Ground truth

void write_ground_truth(const fs::path& csv, std::span<const GroundTruthRow> rows) {
  std::ostringstream out;
  out << "path,machine_type,section,domain,label\n";
  for (const auto& r : rows)
    out << r.path << ',' << r.machine_type << ',' << r.section << ',' << to_string(r.domain) << ','
        << to_string(r.label) << '\n';
  io::write_text_atomic(csv, out.str());
}

std::vector<GroundTruthRow> read_ground_truth(const fs::path& csv) {
  const auto bytes = io::read_file(csv);
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::vector<GroundTruthRow> rows;
  bool header = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      if (line != "path,machine_type,section,domain,label")
        throw Error(ErrorCode::CorruptFile, csv.string() + ": unexpected ground-truth header");
      header = false;
      continue;
    }
    const auto f = io::split(line, ',');
    if (f.size() != 5) throw Error(ErrorCode::CorruptFile, csv.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    try {
      rows.push_back({f[0], f[1], std::stoi(f[2]), parse_domain(f[3]), parse_label(f[4])});
    } catch (const std::exception& e) {
      throw Error(ErrorCode::CorruptFile, csv.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return rows;
}

void attach_ground_truth(DatasetManifest& manifest, std::span<const GroundTruthRow> rows) {
  std::map<std::string, const GroundTruthRow*> by_path;
  for (const auto& r : rows) by_path[r.path] = &r;
  std::vector<std::string> missing;
  for (auto& clip : manifest.clips) {
    if (clip.split != Split::Test) continue;
    const auto it = by_path.find(relative_key(manifest.root, clip.path));
    if (it == by_path.end()) {
      missing.push_back(relative_key(manifest.root, clip.path));
      continue;
    }
    clip.domain = it->second->domain;
    clip.label = it->second->label;
  }
  if (!missing.empty()) throw Error(ErrorCode::UnmatchedClip, "no ground truth for " + missing.front());
  manifest.recount();
}

// ---------------------------------------------------------------------------
// Synthesis

SynthSpec SynthSpec::desk_default() {
  SynthSpec spec;
  spec.machines = {
      MachineSynth{"fan", 220.0, {1.0, 0.6, 0.4, 0.25}, AnomalyKind::NoiseBurst},
      MachineSynth{"valve", 310.0, {1.0, 0.5, 0.35, 0.2, 0.1}, AnomalyKind::NoiseBurst},
  };
  return spec;
}

void SynthSpec::validate() const {
  auto bad = [](const std::string& why) { throw Error(ErrorCode::InvalidSpec, why); };
  if (machines.empty()) bad("no machine types");
  if (sections <= 0) bad("sections must be positive");
  if (train_source <= 0 || train_target <= 0) bad("training counts must be positive");
  if (train_source != 99 * train_target) bad("source:target training ratio must be 99:1");
  if (test_normal_per_domain <= 0 || test_anomaly_per_domain <= 0) bad("test counts must be positive");
  if (!(pitch_factor > 0.0)) bad("pitch factor must be positive");
  if (!(duration_s > 0.0)) bad("duration must be positive");
  if (sample_rate <= 0) bad("sample rate must be positive");
  if (!(burst_fraction > 0.0 && burst_fraction <= 1.0)) bad("burst fraction must be in (0, 1]");
  std::set<std::string> names;
  for (const auto& m : machines) {
    if (m.name.empty() || m.name.find_first_of("/\\_,") != std::string::npos) bad("invalid machine name '" + m.name + "'");
    if (!names.insert(m.name).second) bad("duplicate machine name '" + m.name + "'");
    if (!(m.fundamental_hz > 0.0)) bad("fundamental must be positive");
    if (m.harmonic_amplitudes.empty()) bad("machine '" + m.name + "' has no harmonics");
  }
}

double rms(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

AudioClip synthesize_clip(const SynthSpec& spec, std::size_t machine_index, int section, Domain domain, Label label,
                          std::uint64_t stream_seed) {
  const MachineSynth& machine = spec.machines.at(machine_index);
  Rng rng(stream_seed);
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.sample_rate));
  const double fs = spec.sample_rate;

  double f0 = machine.fundamental_hz * (1.0 + 0.07 * section) * (1.0 + 0.002 * rng.normal());
  if (domain == Domain::Target) f0 *= spec.pitch_factor;

  const std::size_t harmonics = machine.harmonic_amplitudes.size();
  std::size_t dropped = harmonics;
  if (label == Label::Anomaly && machine.anomaly == AnomalyKind::HarmonicDrop)
    dropped = static_cast<std::size_t>(rng.below(harmonics));

  std::vector<double> tone(n, 0.0);
  for (std::size_t k = 0; k < harmonics; ++k) {
    const double amp = spec.tone_level * machine.harmonic_amplitudes[k] * (1.0 + 0.05 * rng.normal());
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double freq = f0 * static_cast<double>(k + 1);
    if (k == dropped || freq >= 0.95 * fs / 2.0) continue;
    const double w = 2.0 * std::numbers::pi * freq / fs;
    for (std::size_t i = 0; i < n; ++i) tone[i] += amp * std::sin(w * static_cast<double>(i) + phase);
  }

  AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) clip.samples[i] = tone[i] + spec.noise_level * rng.normal();

  if (label == Label::Anomaly && machine.anomaly == AnomalyKind::NoiseBurst) {
    const double burst_std = rms(tone) * std::pow(10.0, -spec.anomaly_snr_db / 20.0);
    const auto len = std::max<std::size_t>(1, static_cast<std::size_t>(spec.burst_fraction * static_cast<double>(n)));
    const std::size_t start = len >= n ? 0 : static_cast<std::size_t>(rng.below(n - len + 1));
    for (std::size_t i = start; i < start + len && i < n; ++i) clip.samples[i] += burst_std * rng.normal();
  }
  for (auto& s : clip.samples) s = std::clamp(s, -1.0, 1.0);
  return clip;
}

SynthResult synthesize_dataset(const SynthSpec& spec, std::uint64_t seed, const fs::path& out) {
  spec.validate();
  SynthResult result;

  for (std::size_t m = 0; m < spec.machines.size(); ++m) {
    const std::string& name = spec.machines[m].name;
    for (int section = 0; section < spec.sections; ++section) {
      auto stream = [&](Domain d, Split s, Label l, int idx) {
        return derive_seed({seed, m, static_cast<std::uint64_t>(section), static_cast<std::uint64_t>(d),
                            static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(l),
                            static_cast<std::uint64_t>(idx)});
      };

      for (const Domain d : {Domain::Source, Domain::Target}) {
        const int count = d == Domain::Source ? spec.train_source : spec.train_target;
        for (int i = 0; i < count; ++i) {
          char idx[16];
          std::snprintf(idx, sizeof idx, "%04d", i);
          ClipMeta meta{name, section, d, Split::Train, Label::Normal, idx, "", {}};
          write_wav(out / name / "train" / render_filename(meta),
                    synthesize_clip(spec, m, section, d, Label::Normal, stream(d, Split::Train, Label::Normal, i)));
          ++result.requested[{name, section, d, Split::Train, Label::Normal}];
        }
      }

      struct TestItem {
        Domain domain;
        Label label;
        int idx;
      };
      std::vector<TestItem> items;
      for (const Domain d : {Domain::Source, Domain::Target}) {
        for (int i = 0; i < spec.test_normal_per_domain; ++i) items.push_back({d, Label::Normal, i});
        for (int i = 0; i < spec.test_anomaly_per_domain; ++i) items.push_back({d, Label::Anomaly, i});
      }
      // Blind indices are a seeded permutation so the index leaks nothing.
      std::vector<int> order(items.size());
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
      Rng perm(derive_seed({seed, m, static_cast<std::uint64_t>(section), 0xb1d0ULL}));
      perm.shuffle(std::span<int>(order));

      for (std::size_t k = 0; k < items.size(); ++k) {
        const TestItem& item = items[k];
        char idx[16];
        std::snprintf(idx, sizeof idx, "%04d", spec.ground_truth_labels_in_test_names ? item.idx : order[k]);
        ClipMeta meta{name, section, Domain::Unknown, Split::Test, Label::Unknown, idx, "", {}};
        if (spec.ground_truth_labels_in_test_names) {
          meta.domain = item.domain;
          meta.label = item.label;
        }
        const std::string file = render_filename(meta);
        write_wav(out / name / "test" / file,
                  synthesize_clip(spec, m, section, item.domain, item.label,
                                  stream(item.domain, Split::Test, item.label, item.idx)));
        result.ground_truth.push_back({name + "/test/" + file, name, section, item.domain, item.label});
        ++result.requested[{name, section, item.domain, Split::Test, item.label}];
      }
    }
  }

  std::sort(result.ground_truth.begin(), result.ground_truth.end(),
            [](const GroundTruthRow& a, const GroundTruthRow& b) { return a.path < b.path; });
  write_ground_truth(out / kGroundTruthFile, result.ground_truth);
  return result;
}

}  // namespace asd::dataset
