#include "asd/dsp.hpp"

#include <bit>
#include <cmath>
#include <numbers>

#include "asd/detail/bytes.hpp"
#include "asd/error.hpp"
#include "asd/io.hpp"

namespace asd::dsp {

void StftConfig::validate() const {
  if (frame_length <= 0 || !std::has_single_bit(static_cast<unsigned>(frame_length)))
    throw Error(ErrorCode::InvalidConfig, "frame length must be a power of two");
  if (hop <= 0 || hop > frame_length) throw Error(ErrorCode::InvalidConfig, "hop must be in [1, frame_length]");
}

int StftConfig::frame_count(std::size_t samples) const {
  if (samples < static_cast<std::size_t>(frame_length)) return 0;
  return static_cast<int>((samples - static_cast<std::size_t>(frame_length)) / static_cast<std::size_t>(hop)) + 1;
}

void MelConfig::validate(int sample_rate) const {
  if (n_mels <= 0) throw Error(ErrorCode::InvalidConfig, "n_mels must be positive");
  if (!(f_min >= 0.0 && f_min < f_max && f_max <= sample_rate / 2.0))
    throw Error(ErrorCode::InvalidConfig, "need 0 <= f_min < f_max <= sample_rate / 2");
  if (!(log_floor > 0.0)) throw Error(ErrorCode::InvalidConfig, "log floor must be positive");
}

void FeatureConfig::validate() const {
  stft.validate();
  mel.validate(sample_rate);
  if (context < 1) throw Error(ErrorCode::InvalidConfig, "context must be >= 1");
}

void fft(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  if (n == 0 || !std::has_single_bit(n)) throw Error(ErrorCode::ShapeMismatch, "FFT size must be a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < len / 2; ++k) {
        // Twiddles computed directly rather than by recurrence to avoid drift.
        const std::complex<double> w(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
      }
    }
  }
}

Vector hann_window(int length) {
  // Periodic Hann, as used for spectral analysis.
  Vector w(length);
  for (int i = 0; i < length; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / length);
  return w;
}

Matrix stft_power(std::span<const double> samples, const StftConfig& cfg) {
  cfg.validate();
  const int frames = cfg.frame_count(samples.size());
  if (frames == 0)
    throw Error(ErrorCode::ClipTooShort, std::to_string(samples.size()) + " samples < frame length " +
                                             std::to_string(cfg.frame_length));
  const Vector window = hann_window(cfg.frame_length);
  const int bins = cfg.bins();
  Matrix power(frames, bins);
  std::vector<std::complex<double>> buf(static_cast<std::size_t>(cfg.frame_length));
  for (int t = 0; t < frames; ++t) {
    const std::size_t start = static_cast<std::size_t>(t) * static_cast<std::size_t>(cfg.hop);
    for (int i = 0; i < cfg.frame_length; ++i) buf[static_cast<std::size_t>(i)] = samples[start + i] * window[i];
    fft(buf);
    for (int k = 0; k < bins; ++k) power(t, k) = std::norm(buf[static_cast<std::size_t>(k)]);
  }
  return power;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

Matrix mel_filterbank(const MelConfig& cfg, int sample_rate, int fft_size) {
  cfg.validate(sample_rate);
  const int bins = fft_size / 2 + 1;
  const double lo = hz_to_mel(cfg.f_min);
  const double hi = hz_to_mel(cfg.f_max);
  std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));

  Matrix fb = Matrix::Zero(cfg.n_mels, bins);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double left = edges[static_cast<std::size_t>(m)];
    const double center = edges[static_cast<std::size_t>(m) + 1];
    const double right = edges[static_cast<std::size_t>(m) + 2];
    for (int k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / fft_size;
      const double up = (f - left) / (center - left);
      const double down = (right - f) / (right - center);
      fb(m, k) = std::max(0.0, std::min(up, down));
    }
    if (!(fb.row(m).sum() > 0.0))
      throw Error(ErrorCode::InvalidConfig, "mel band " + std::to_string(m) + " covers no FFT bin; use fewer bands or a longer frame");
  }
  return fb;
}

Matrix log_mel(const Matrix& power, const Matrix& filterbank, double log_floor) {
  if (power.cols() != filterbank.cols())
    throw Error(ErrorCode::ShapeMismatch, "power spectrum has " + std::to_string(power.cols()) + " bins, filterbank " +
                                              std::to_string(filterbank.cols()));
  Matrix mel = power * filterbank.transpose();
  return mel.unaryExpr([log_floor](double v) { return 10.0 * std::log10(v + log_floor); });
}

Matrix log_mel(const Matrix& power, const MelConfig& cfg, int sample_rate) {
  const int fft_size = static_cast<int>(power.cols() - 1) * 2;
  return log_mel(power, mel_filterbank(cfg, sample_rate, fft_size), cfg.log_floor);
}

FeatureMatrix stack_frames(const Matrix& logmel, int context) {
  if (context < 1) throw Error(ErrorCode::InvalidConfig, "context must be >= 1");
  const auto frames = logmel.rows();
  if (frames < context)
    throw Error(ErrorCode::ClipTooShort, std::to_string(frames) + " frames < context " + std::to_string(context));
  const auto bands = logmel.cols();
  FeatureMatrix out;
  out.values.resize(frames - context + 1, bands * context);
  for (Eigen::Index i = 0; i < out.values.rows(); ++i)
    for (int j = 0; j < context; ++j) out.values.row(i).segment(j * bands, bands) = logmel.row(i + j);
  return out;
}

FeatureMatrix extract_features(const dataset::AudioClip& clip, const FeatureConfig& cfg, std::string clip_id) {
  cfg.validate();
  if (clip.sample_rate != cfg.sample_rate)
    throw Error(ErrorCode::UnsupportedFormat, "sample rate " + std::to_string(clip.sample_rate) + " Hz, expected " +
                                                  std::to_string(cfg.sample_rate) + " Hz (no resampling)");
  const Matrix power = stft_power(clip.samples, cfg.stft);
  FeatureMatrix fm = stack_frames(log_mel(power, cfg.mel, cfg.sample_rate), cfg.context);
  fm.source_clip = std::move(clip_id);
  return fm;
}

Matrix Normalizer::apply(const Matrix& x) const {
  Matrix out = x;
  apply_inplace(out);
  return out;
}

void Normalizer::apply_inplace(Matrix& x) const {
  if (x.cols() != mean.size())
    throw Error(ErrorCode::ShapeMismatch, "normalizer has " + std::to_string(mean.size()) + " dims, input " +
                                              std::to_string(x.cols()));
  x.rowwise() -= mean.transpose();
  x.array().rowwise() /= stddev.transpose().array();
}

Normalizer fit_normalizer(std::span<const Matrix> features) {
  Eigen::Index rows = 0;
  Eigen::Index cols = -1;
  for (const auto& m : features) {
    if (m.rows() == 0) continue;
    if (cols >= 0 && m.cols() != cols) throw Error(ErrorCode::ShapeMismatch, "feature matrices differ in width");
    cols = m.cols();
    rows += m.rows();
  }
  if (rows < 2) throw Error(ErrorCode::InsufficientData, "normalizer needs at least 2 rows, got " + std::to_string(rows));

  Normalizer n;
  n.mean = Vector::Zero(cols);
  for (const auto& m : features)
    if (m.rows() > 0) n.mean += m.colwise().sum().transpose();
  n.mean /= static_cast<double>(rows);

  Vector var = Vector::Zero(cols);
  for (const auto& m : features)
    if (m.rows() > 0) var += (m.rowwise() - n.mean.transpose()).array().square().colwise().sum().matrix().transpose();
  var /= static_cast<double>(rows);
  n.stddev = var.array().sqrt().max(Normalizer::kStdFloor).matrix();
  return n;
}

void write_feature_cache(const std::filesystem::path& path, const Matrix& features) {
  detail::ByteWriter w;
  w.put_u32(static_cast<std::uint32_t>(features.rows()));
  w.put_u32(static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index i = 0; i < features.rows(); ++i)
    for (Eigen::Index j = 0; j < features.cols(); ++j) w.put_f32(static_cast<float>(features(i, j)));
  io::write_file_atomic(path, w.bytes());
}

Matrix read_feature_cache(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  detail::ByteReader r(bytes.data(), bytes.size());
  if (!r.has(8)) throw Error(ErrorCode::CorruptFile, path.string() + ": feature cache header truncated");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (r.remaining() != static_cast<std::size_t>(rows) * cols * 4)
    throw Error(ErrorCode::CorruptFile, path.string() + ": payload size does not match header");
  Matrix m(rows, cols);
  for (std::uint32_t i = 0; i < rows; ++i)
    for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = r.f32();
  return m;
}

}  // namespace asd::dsp
