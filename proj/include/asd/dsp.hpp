#pragma once

// Log-mel front end: STFT power, mel filterbank, dB conversion, context
// stacking and per-dimension standardization.

#include <complex>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "asd/dataset.hpp"
#include "asd/linalg.hpp"

namespace asd::dsp {

struct StftConfig {
  int frame_length = 1024;  // 64 ms at 16 kHz, also the FFT size
  int hop = 512;

  void validate() const;
  int bins() const { return frame_length / 2 + 1; }
  int frame_count(std::size_t samples) const;
};

struct MelConfig {
  int n_mels = 128;
  double f_min = 0.0;
  double f_max = 8000.0;
  double log_floor = 1e-12;

  void validate(int sample_rate) const;
};

struct FeatureConfig {
  StftConfig stft;
  MelConfig mel;
  int context = 5;
  int sample_rate = dataset::kDefaultSampleRate;

  int dims() const { return mel.n_mels * context; }
  void validate() const;
};

// In-place radix-2 FFT; size must be a power of two.
void fft(std::vector<std::complex<double>>& data);

Vector hann_window(int length);

// T x (frame_length/2 + 1). Frame t starts at t * hop; the trailing
// partial frame is dropped.
Matrix stft_power(std::span<const double> samples, const StftConfig& cfg);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// n_mels x (fft_size/2 + 1), HTK mel scale, triangular, unit peaks.
Matrix mel_filterbank(const MelConfig& cfg, int sample_rate, int fft_size);

// T x n_mels, 10 * log10(filterbank . power + floor).
Matrix log_mel(const Matrix& power, const MelConfig& cfg, int sample_rate);
Matrix log_mel(const Matrix& power, const Matrix& filterbank, double log_floor);

struct FeatureMatrix {
  Matrix values;  // (T - context + 1) x (n_mels * context)
  std::string source_clip;
};

// Row i = concat(logmel[i], ..., logmel[i + context - 1]).
FeatureMatrix stack_frames(const Matrix& logmel, int context = 5);

// Full pipeline for one clip, before normalization. Rejects clips whose
// sample rate differs from cfg.sample_rate.
FeatureMatrix extract_features(const dataset::AudioClip& clip, const FeatureConfig& cfg, std::string clip_id = {});

struct Normalizer {
  Vector mean;
  Vector stddev;

  static constexpr double kStdFloor = 1e-8;

  Matrix apply(const Matrix& x) const;
  void apply_inplace(Matrix& x) const;
};

// Population statistics over all rows of all matrices.
Normalizer fit_normalizer(std::span<const Matrix> features);

// Optional on-disk cache: {u32 rows, u32 cols} then row-major float32, LE.
void write_feature_cache(const std::filesystem::path& path, const Matrix& features);
Matrix read_feature_cache(const std::filesystem::path& path);

}  // namespace asd::dsp
