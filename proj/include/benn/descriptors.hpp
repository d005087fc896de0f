#pragma once

// Microstructure descriptors for square two-phase images.
// Pixel convention: 1 = solid phase, 0 = void phase.

#include <complex>
#include <filesystem>
#include <span>
#include <vector>

#include "benn/autodiff.hpp"

namespace benn {

/// b(x) = sigmoid(steepness * (x - threshold))
struct BinarizeConfig {
  double steepness = 100.0;
  double threshold = 0.5;

  void validate() const;
};

/// Square image with pixel values in [0, 1].
class BinaryImage {
 public:
  BinaryImage() = default;
  explicit BinaryImage(Tensor pixels);

  const Tensor& pixels() const { return pixels_; }
  std::size_t side() const { return pixels_.dim(0); }

 private:
  Tensor pixels_{Shape{0, 0}};
};

/// Radially averaged autocorrelation; values[r] for integer lag radius r = 0..R.
struct TpcfCurve {
  std::vector<double> values;

  std::size_t max_radius() const { return values.empty() ? 0 : values.size() - 1; }
  /// Curve for the void phase given the solid fraction phi: 1 - 2 phi + S2(r).
  TpcfCurve void_phase(double solid_fraction) const;

  void save_csv(const std::filesystem::path& path) const;
  static TpcfCurve load_csv(const std::filesystem::path& path);
};

Tensor binarize_soft(const Tensor& x, const BinarizeConfig& cfg);
Var binarize_soft(Var x, const BinarizeConfig& cfg);

/// Void fraction, mean of (1 - pixel).
double porosity(const Tensor& img);
Var porosity(Var img);

/// In-place radix-2 FFT. Length must be a power of two. The inverse is unscaled.
void fft(std::span<std::complex<double>> data, bool inverse);
/// 2-D FFT of a row-major rows x cols buffer (both powers of two). Unscaled inverse.
void fft2d(std::vector<std::complex<double>>& data, std::size_t rows, std::size_t cols, bool inverse);

/// |FFT2(img)|^2, row-major, same shape as img.
Tensor power_spectrum(const Tensor& img);

/// Circular autocorrelation divided by the pixel count, so that lag (0,0)
/// holds the mean of squared pixels. FFT route: sides must be powers of two.
Tensor autocorr_fft(const Tensor& img);
/// On-tape FFT route; the backward pass is also spectral.
Var autocorr_fft(Var img);

/// Same quantity by explicit summation; differentiable on-tape version included.
/// Capped at 64x64 pixels.
Tensor autocorr_direct(const Tensor& img);
Var autocorr_direct(Var img);

/// For each integer r in 0..floor(H/2), the mean of field cells whose wrapped
/// lag distance sqrt(min(dy,H-dy)^2 + min(dx,W-dx)^2) rounds (half up) to r.
TpcfCurve radial_average(const Tensor& field);
Var radial_average(Var field);

/// radial_average(autocorr(binarize_soft(img))). `differentiable` selects the
/// direct summation path; otherwise the FFT path is used.
TpcfCurve tpcf(const Tensor& img, const BinarizeConfig& cfg, bool differentiable = false);
/// On-tape: spectral autocorrelation for power-of-two sides, direct summation otherwise.
Var tpcf(Var img, const BinarizeConfig& cfg);

/// Plain-text PGM (P2), maxval 255, pixel = round(255 * value).
void write_pgm(const std::filesystem::path& path, const Tensor& img);
Tensor read_pgm(const std::filesystem::path& path);

bool is_power_of_two(std::size_t n);

}  // namespace benn
