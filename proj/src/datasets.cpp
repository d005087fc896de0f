#include "benn/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "benn/random.hpp"
#include "json.hpp"

namespace benn {

Tensor Dataset::inputs() const { return Tensor(Shape{x.size(), 1}, x); }
Tensor Dataset::targets() const { return Tensor(Shape{y.size()}, y); }

// --- regression -----------------------------------------------------------------

void RegressionConfig::validate() const {
  if (regions.empty()) throw Error("regression: at least one region is required");
  for (const Region& r : regions) {
    if (!(r.x_lo < r.x_hi)) throw Error("regression: region needs x_lo < x_hi");
    if (r.noise_sd < 0.0) throw Error("regression: noise_sd must be >= 0");
    if (r.n_points == 0) throw Error("regression: n_points must be >= 1");
  }
}

double regression_truth(double x, const RegressionConfig& cfg) {
  return cfg.p0 * x * x + cfg.p1 * x + cfg.p2 + 0.15 * std::sin(2.0 * std::numbers::pi * x);
}

Dataset gen_regression(const RegressionConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  Dataset d;
  for (const Region& r : cfg.regions) {
    std::uniform_real_distribution<double> ux(r.x_lo, r.x_hi);
    std::normal_distribution<double> noise(0.0, 1.0);
    for (std::size_t i = 0; i < r.n_points; ++i) {
      const double x = ux(rng);
      d.x.push_back(x);
      d.y.push_back(regression_truth(x, cfg) + r.noise_sd * noise(rng));
    }
  }
  return d;
}

// --- beam -------------------------------------------------------------------------

void BeamConfig::validate() const {
  if (!(youngs_modulus > 0 && inertia > 0 && length > 0 && load > 0))
    throw Error("beam: E, I, L and P must be positive");
  if (n_obs == 0) throw Error("beam: n_obs must be >= 1");
  if (obs_regions.empty()) throw Error("beam: at least one observation region is required");
  for (auto [lo, hi] : obs_regions)
    if (!(lo >= 0.0 && hi <= 3.0 && lo < hi)) throw Error("beam: observation region must lie within [0, 3L]");
  if (noise_sd < 0.0) throw Error("beam: noise_sd must be >= 0");
}

double beam_deflection(double x, const BeamConfig& cfg) {
  const double L = cfg.length;
  if (x < 0.0 || x > 3.0 * L) throw DomainError("beam_deflection: x outside [0, 3L]");
  const double ei = cfg.youngs_modulus * cfg.inertia;
  const double P = cfg.load;
  if (x <= 2.0 * L) return -P / (8.0 * ei) * x * x * x + P * L / (4.0 * ei) * x * x;
  return P / (6.0 * ei) * x * x * x - 3.0 * P * L / (2.0 * ei) * x * x + 7.0 * P * L * L / (2.0 * ei) * x -
         7.0 * P * L * L * L / (3.0 * ei);
}

Dataset gen_beam(const BeamConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double scale = cfg.deflection_scale();
  Dataset d;
  const std::size_t k = cfg.obs_regions.size();
  for (std::size_t r = 0; r < k; ++r) {
    const std::size_t n = cfg.n_obs / k + (r < cfg.n_obs % k ? 1 : 0);
    std::uniform_real_distribution<double> ux(cfg.obs_regions[r].first * cfg.length,
                                              cfg.obs_regions[r].second * cfg.length);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = ux(rng);
      d.x.push_back(x);
      d.y.push_back(beam_deflection(x, cfg) + cfg.noise_sd * scale * noise(rng));
    }
  }
  return d;
}

// --- microstructures ----------------------------------------------------------------

void MicrostructureConfig::validate() const {
  if (size != 16 && size != 32 && size != 64) throw Error("microstructure: size must be 16, 32 or 64");
  if (n_samples == 0) throw Error("microstructure: n_samples must be >= 1");
  if (!(correlation_length > 0.0)) throw Error("microstructure: correlation_length must be > 0");
  if (!(target_porosity > 0.0 && target_porosity < 1.0)) throw Error("microstructure: target_porosity must be in (0,1)");
}

namespace {

// Separable periodic Gaussian blur.
Tensor smooth_periodic(const Tensor& field, double width) {
  const std::size_t n = field.dim(0);
  const auto radius = static_cast<long>(std::min<double>(std::ceil(3.0 * width), static_cast<double>(n / 2)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  for (long i = -radius; i <= radius; ++i)
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * static_cast<double>(i * i) / (width * width));
  const auto ln = static_cast<long>(n);
  auto wrap = [ln](long i) { return static_cast<std::size_t>(((i % ln) + ln) % ln); };
  Tensor tmp(field.shape()), out(field.shape());
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * field.at(y, wrap(static_cast<long>(x) + i));
      tmp.at(y, x) = acc;
    }
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double acc = 0.0;
      for (long i = -radius; i <= radius; ++i)
        acc += k[static_cast<std::size_t>(i + radius)] * tmp.at(wrap(static_cast<long>(y) + i), x);
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace

std::vector<BinaryImage> gen_microstructures(const MicrostructureConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::size_t n = cfg.size;
  const std::size_t pixels = n * n;
  const auto n_void = static_cast<std::size_t>(std::llround(cfg.target_porosity * static_cast<double>(pixels)));
  std::vector<BinaryImage> out;
  out.reserve(cfg.n_samples);
  std::vector<std::size_t> order(pixels);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    Tensor field = smooth_periodic(randn(Shape{n, n}, rng), cfg.correlation_length);
    for (std::size_t i = 0; i < pixels; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return field[a] < field[b]; });
    Tensor img(Shape{n, n}, 1.0);
    for (std::size_t i = 0; i < n_void; ++i) img[order[i]] = 0.0;
    out.emplace_back(std::move(img));
  }
  return out;
}

// --- I/O ---------------------------------------------------------------------------

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "x,y\n" << std::setprecision(17);
  for (std::size_t i = 0; i < data.size(); ++i) out << data.x[i] << ',' << data.y[i] << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  const std::string file = path.string();
  std::string line;
  if (!std::getline(in, line) || line != "x,y") throw ParseError(file, 1, "expected header 'x,y'");
  Dataset d;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw ParseError(file, lineno, "expected two comma-separated values");
    try {
      std::size_t u1 = 0, u2 = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      const double x = std::stod(a, &u1);
      const double y = std::stod(b, &u2);
      if (u1 != a.size() || u2 != b.size()) throw std::invalid_argument("trailing characters");
      d.x.push_back(x);
      d.y.push_back(y);
    } catch (const std::exception&) {
      throw ParseError(file, lineno, "malformed number in '" + line + "'");
    }
  }
  return d;
}

void save_microstructures(const std::filesystem::path& dir, const std::vector<BinaryImage>& images,
                          const MicrostructureConfig& cfg) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.csv");
  if (!manifest) throw Error("cannot write " + (dir / "manifest.csv").string());
  manifest << "index,file,porosity\n" << std::setprecision(17);
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::ostringstream name;
    name << "image_" << std::setw(3) << std::setfill('0') << i << ".pgm";
    write_pgm(dir / name.str(), images[i].pixels());
    manifest << i << ',' << name.str() << ',' << porosity(images[i].pixels()) << '\n';
  }
  nlohmann::json j{{"size", cfg.size},
                   {"n_samples", images.size()},
                   {"correlation_length", cfg.correlation_length},
                   {"target_porosity", cfg.target_porosity},
                   {"seed", cfg.seed},
                   {"normalization", 255}};
  std::ofstream(dir / "manifest.json") << j.dump(2) << '\n';
}

std::vector<BinaryImage> load_microstructures(const std::filesystem::path& dir) {
  const auto path = dir / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "index,file,porosity")
    throw ParseError(path.string(), 1, "expected header 'index,file,porosity'");
  std::vector<BinaryImage> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto c1 = line.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos) throw ParseError(path.string(), lineno, "expected 'index,file,porosity'");
    out.emplace_back(read_pgm(dir / line.substr(c1 + 1, c2 - c1 - 1)));
  }
  return out;
}

}  // namespace benn
