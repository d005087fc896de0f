#pragma once

// Deterministic synthetic data for the regression, beam and microstructure experiments.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "benn/autodiff.hpp"
#include "benn/descriptors.hpp"

namespace benn {

struct Dataset {
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const { return x.size(); }
  Tensor inputs() const;   // [N x 1]
  Tensor targets() const;  // [N]
};

struct Region {
  double x_lo = 0.0;
  double x_hi = 0.0;
  double noise_sd = 0.0;
  std::size_t n_points = 0;
};

/// y = p0 x^2 + p1 x + p2 + 0.15 sin(2 pi x) + N(0, sd_region)
struct RegressionConfig {
  double p0 = 0.2;
  double p1 = 0.05;
  double p2 = 0.01;
  std::vector<Region> regions{{-3.0, -2.0, 0.01, 32}, {2.0, 3.0, 0.1, 32}};
  std::uint64_t seed = 0;

  void validate() const;
};

double regression_truth(double x, const RegressionConfig& cfg);
Dataset gen_regression(const RegressionConfig& cfg);

/// Two-span beam of length 2L pinned at 0 and 2L, loaded at L, with an overhang to 3L.
struct BeamConfig {
  double youngs_modulus = 200e9;  // Pa
  double inertia = 1e-4;          // m^4
  double length = 1.0;            // L, m
  double load = 2000.0;           // N
  std::size_t n_obs = 10;
  /// Observation windows in units of L; points are split evenly between them.
  std::vector<std::pair<double, double>> obs_regions{{0.5, 1.3}};
  /// Measurement noise in units of the deflection scale P L^3 / (E I).
  double noise_sd = 0.001;
  std::uint64_t seed = 0;

  void validate() const;
  /// P L^3 / (E I): dividing deflections by this makes them O(1).
  double deflection_scale() const { return load * length * length * length / (youngs_modulus * inertia); }
};

/// Deflection in metres for 0 <= x <= 3L.
double beam_deflection(double x, const BeamConfig& cfg);
/// x in metres, y in metres.
Dataset gen_beam(const BeamConfig& cfg);

struct MicrostructureConfig {
  std::size_t size = 32;
  std::size_t n_samples = 25;
  double correlation_length = 3.0;  // pixels
  double target_porosity = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Gaussian white noise, smoothed periodically by an isotropic Gaussian kernel
/// of width correlation_length, thresholded at the per-image quantile that
/// leaves round(target_porosity * N) void pixels.
std::vector<BinaryImage> gen_microstructures(const MicrostructureConfig& cfg);

/// CSV with header `x,y`, 17 significant digits.
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Writes image_NNN.pgm, manifest.csv (index,file,porosity) and manifest.json into `dir`.
void save_microstructures(const std::filesystem::path& dir, const std::vector<BinaryImage>& images,
                          const MicrostructureConfig& cfg);
std::vector<BinaryImage> load_microstructures(const std::filesystem::path& dir);

}  // namespace benn
