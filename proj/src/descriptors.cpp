#include "benn/descriptors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

namespace benn {

namespace {

constexpr std::size_t kDirectMaxPixels = 64 * 64;

void require_square(const Tensor& t, const char* who) {
  if (t.rank() != 2 || t.dim(0) != t.dim(1) || t.dim(0) == 0)
    throw ShapeError(std::string(who) + ": expected a non-empty square image, got " + shape_string(t.shape()));
}

void require_unit_range(const Tensor& t, const char* who) {
  for (double v : t.data())
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(who) + ": pixel value outside [0,1]");
}

// Bin index per lag cell, or -1 for lags beyond R.
struct RadialBins {
  std::vector<long> bin;
  std::vector<double> count;
};

RadialBins make_bins(std::size_t side) {
  const std::size_t r_max = side / 2;
  RadialBins b;
  b.bin.assign(side * side, -1);
  b.count.assign(r_max + 1, 0.0);
  for (std::size_t dy = 0; dy < side; ++dy) {
    const double ry = static_cast<double>(std::min(dy, side - dy));
    for (std::size_t dx = 0; dx < side; ++dx) {
      const double rx = static_cast<double>(std::min(dx, side - dx));
      const auto r = static_cast<std::size_t>(std::floor(std::sqrt(ry * ry + rx * rx) + 0.5));
      if (r > r_max) continue;
      b.bin[dy * side + dx] = static_cast<long>(r);
      b.count[r] += 1.0;
    }
  }
  return b;
}

// Image tiled 2x2 so that wrapped index (y + dy) % H is a plain offset.
std::vector<double> tile2x2(const Tensor& img) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  std::vector<double> t(4 * h * w);
  for (std::size_t y = 0; y < 2 * h; ++y)
    for (std::size_t x = 0; x < 2 * w; ++x) t[y * 2 * w + x] = img.at(y % h, x % w);
  return t;
}

Tensor autocorr_sum(const Tensor& img) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  const std::vector<double> t = tile2x2(img);
  const double* ip = img.data().data();
  Tensor out(Shape{h, w});
  const double norm = 1.0 / static_cast<double>(h * w);
  for (std::size_t dy = 0; dy < h; ++dy) {
    for (std::size_t dx = 0; dx < w; ++dx) {
      double acc = 0.0;
      for (std::size_t y = 0; y < h; ++y) {
        const double* row = ip + y * w;
        const double* shifted = t.data() + (y + dy) * 2 * w + dx;
        for (std::size_t x = 0; x < w; ++x) acc += row[x] * shifted[x];
      }
      out.at(dy, dx) = acc * norm;
    }
  }
  return out;
}

}  // namespace

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void BinarizeConfig::validate() const {
  if (!(steepness > 0.0)) throw Error("binarize: steepness must be > 0");
}

BinaryImage::BinaryImage(Tensor pixels) : pixels_(std::move(pixels)) {
  require_square(pixels_, "BinaryImage");
  require_unit_range(pixels_, "BinaryImage");
}

TpcfCurve TpcfCurve::void_phase(double solid_fraction) const {
  TpcfCurve out;
  for (double v : values) out.values.push_back(1.0 - 2.0 * solid_fraction + v);
  return out;
}

void TpcfCurve::save_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "radius,value\n" << std::setprecision(17);
  for (std::size_t r = 0; r < values.size(); ++r) out << r << ',' << values[r] << '\n';
}

TpcfCurve TpcfCurve::load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  const std::string file = path.string();
  if (!std::getline(in, line) || line != "radius,value") throw ParseError(file, 1, "expected header 'radius,value'");
  TpcfCurve c;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::size_t r;
    char comma;
    double v;
    if (!(ss >> r >> comma >> v) || comma != ',') throw ParseError(file, lineno, "expected 'radius,value'");
    if (r != c.values.size()) throw ParseError(file, lineno, "radii must be consecutive from 0");
    c.values.push_back(v);
  }
  return c;
}

// --- binarization / porosity --------------------------------------------------

Tensor binarize_soft(const Tensor& x, const BinarizeConfig& cfg) {
  cfg.validate();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double z = cfg.steepness * (x[i] - cfg.threshold);
    out[i] = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  }
  return out;
}

Var binarize_soft(Var x, const BinarizeConfig& cfg) {
  cfg.validate();
  return sigmoid(scale(shift(x, -cfg.threshold), cfg.steepness));
}

double porosity(const Tensor& img) {
  if (img.numel() == 0) throw ShapeError("porosity: empty image");
  double s = 0.0;
  for (double v : img.data()) s += 1.0 - v;
  return s / static_cast<double>(img.numel());
}

Var porosity(Var img) { return shift(scale(mean(img), -1.0), 1.0); }

// --- FFT ----------------------------------------------------------------------

void fft(std::span<std::complex<double>> a, bool inverse) {
  const std::size_t n = a.size();
  if (!is_power_of_two(n)) throw ShapeError("fft: length " + std::to_string(n) + " is not a power of two");
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const auto u = a[i + k];
        const auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

void fft2d(std::vector<std::complex<double>>& data, std::size_t rows, std::size_t cols, bool inverse) {
  if (data.size() != rows * cols) throw ShapeError("fft2d: buffer size mismatch");
  for (std::size_t r = 0; r < rows; ++r) fft(std::span(data).subspan(r * cols, cols), inverse);
  std::vector<std::complex<double>> column(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) column[r] = data[r * cols + c];
    fft(column, inverse);
    for (std::size_t r = 0; r < rows; ++r) data[r * cols + c] = column[r];
  }
}

Tensor power_spectrum(const Tensor& img) {
  require_square(img, "power_spectrum");
  const std::size_t n = img.dim(0);
  if (!is_power_of_two(n)) throw ShapeError("power_spectrum: side " + std::to_string(n) + " is not a power of two");
  std::vector<std::complex<double>> buf(img.data().begin(), img.data().end());
  fft2d(buf, n, n, false);
  Tensor out(img.shape());
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = std::norm(buf[i]);
  return out;
}

Tensor autocorr_fft(const Tensor& img) {
  require_square(img, "autocorr_fft");
  const std::size_t n = img.dim(0);
  if (!is_power_of_two(n)) throw ShapeError("autocorr_fft: side " + std::to_string(n) + " is not a power of two");
  Tensor ps = power_spectrum(img);
  std::vector<std::complex<double>> buf(ps.data().begin(), ps.data().end());
  fft2d(buf, n, n, true);
  // Unscaled inverse carries a factor N^2; the per-pixel normalization is another N^2.
  const double norm = 1.0 / static_cast<double>(n * n) / static_cast<double>(n * n);
  Tensor out(img.shape());
  for (std::size_t i = 0; i < buf.size(); ++i) out[i] = buf[i].real() * norm;
  return out;
}

Var autocorr_fft(Var img) {
  Tensor out = autocorr_fft(img.value());
  return img.tape().record("autocorr_fft", std::move(out), {img}, [img](const Tensor& g, std::span<Tensor* const> gin) {
    // dA(l)/dI(p) = (I(p+l) + I(p-l)) / N^2, i.e. correlation plus convolution
    // of I with G; in frequency space that is 2 Re(G^) I^.
    const Tensor& x = img.value();
    const std::size_t n = x.dim(0);
    std::vector<std::complex<double>> gi(g.data().begin(), g.data().end());
    std::vector<std::complex<double>> xi(x.data().begin(), x.data().end());
    fft2d(gi, n, n, false);
    fft2d(xi, n, n, false);
    for (std::size_t i = 0; i < xi.size(); ++i) xi[i] *= 2.0 * gi[i].real();
    fft2d(xi, n, n, true);
    const double norm = 1.0 / static_cast<double>(n * n) / static_cast<double>(n * n);
    Tensor& gp = *gin[0];
    for (std::size_t i = 0; i < xi.size(); ++i) gp[i] += xi[i].real() * norm;
  });
}

// --- direct autocorrelation -----------------------------------------------------

Tensor autocorr_direct(const Tensor& img) {
  require_square(img, "autocorr_direct");
  if (img.numel() > kDirectMaxPixels) throw ShapeError("autocorr_direct: image larger than 64x64");
  return autocorr_sum(img);
}

Var autocorr_direct(Var img) {
  const Tensor& x = img.value();
  require_square(x, "autocorr_direct");
  if (x.numel() > kDirectMaxPixels) throw ShapeError("autocorr_direct: image larger than 64x64");
  Tensor out = autocorr_sum(x);
  return img.tape().record("autocorr", std::move(out), {img}, [img](const Tensor& g, std::span<Tensor* const> gin) {
    // dA(l)/dI(p) = (I(p+l) + I(p-l)) / (H W)
    const Tensor& xv = img.value();
    const std::size_t h = xv.dim(0), w = xv.dim(1);
    const std::vector<double> t = tile2x2(xv);
    const double norm = 1.0 / static_cast<double>(h * w);
    double* gp = gin[0]->data().data();
    for (std::size_t ly = 0; ly < h; ++ly) {
      for (std::size_t lx = 0; lx < w; ++lx) {
        const double gl = g.at(ly, lx) * norm;
        if (gl == 0.0) continue;
        for (std::size_t y = 0; y < h; ++y) {
          const double* fwd = t.data() + (y + ly) * 2 * w + lx;
          const double* bwd = t.data() + (y + h - ly) * 2 * w + (w - lx);
          double* grow = gp + y * w;
          for (std::size_t x = 0; x < w; ++x) grow[x] += gl * (fwd[x] + bwd[x]);
        }
      }
    }
  });
}

// --- radial averaging -----------------------------------------------------------

TpcfCurve radial_average(const Tensor& field) {
  require_square(field, "radial_average");
  const RadialBins b = make_bins(field.dim(0));
  TpcfCurve c;
  c.values.assign(b.count.size(), 0.0);
  for (std::size_t i = 0; i < field.numel(); ++i)
    if (b.bin[i] >= 0) c.values[static_cast<std::size_t>(b.bin[i])] += field[i];
  for (std::size_t r = 0; r < c.values.size(); ++r) c.values[r] /= b.count[r];
  return c;
}

Var radial_average(Var field) {
  const Tensor& f = field.value();
  require_square(f, "radial_average");
  RadialBins b = make_bins(f.dim(0));
  TpcfCurve c = radial_average(f);
  Tensor out = Tensor::vector(c.values);
  return field.tape().record("radial_average", std::move(out), {field},
                             [b = std::move(b)](const Tensor& g, std::span<Tensor* const> gin) {
                               Tensor& gf = *gin[0];
                               for (std::size_t i = 0; i < gf.numel(); ++i) {
                                 if (b.bin[i] < 0) continue;
                                 const auto r = static_cast<std::size_t>(b.bin[i]);
                                 gf[i] += g[r] / b.count[r];
                               }
                             });
}

TpcfCurve tpcf(const Tensor& img, const BinarizeConfig& cfg, bool differentiable) {
  Tensor b = binarize_soft(img, cfg);
  return radial_average(differentiable ? autocorr_direct(b) : autocorr_fft(b));
}

Var tpcf(Var img, const BinarizeConfig& cfg) {
  Var b = binarize_soft(img, cfg);
  return radial_average(is_power_of_two(img.shape().at(0)) ? autocorr_fft(b) : autocorr_direct(b));
}

// --- PGM ------------------------------------------------------------------------

void write_pgm(const std::filesystem::path& path, const Tensor& img) {
  if (img.rank() != 2) throw ShapeError("write_pgm: image must be rank 2");
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const std::size_t h = img.dim(0), w = img.dim(1);
  out << "P2\n" << w << ' ' << h << "\n255\n";
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double v = std::clamp(img.at(y, x), 0.0, 1.0);
      out << (x ? " " : "") << static_cast<int>(std::lround(255.0 * v));
    }
    out << '\n';
  }
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  const std::string file = path.string();
  // Token stream with line tracking; '#' starts a comment.
  std::vector<std::pair<std::string, std::size_t>> tokens;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) tokens.emplace_back(tok, lineno);
  }
  if (tokens.empty() || tokens[0].first != "P2") throw ParseError(file, tokens.empty() ? 1 : tokens[0].second, "expected 'P2' magic");
  auto number = [&](std::size_t k) -> long {
    if (k >= tokens.size()) throw ParseError(file, lineno, "unexpected end of file");
    try {
      std::size_t used = 0;
      const long v = std::stol(tokens[k].first, &used);
      if (used != tokens[k].first.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      throw ParseError(file, tokens[k].second, "expected an integer, got '" + tokens[k].first + "'");
    }
  };
  const long w = number(1), h = number(2), maxval = number(3);
  if (w <= 0 || h <= 0) throw ParseError(file, tokens[1].second, "bad image size");
  if (maxval != 255) throw ParseError(file, tokens[3].second, "maxval must be 255");
  const auto n = static_cast<std::size_t>(w * h);
  if (tokens.size() != 4 + n) throw ParseError(file, tokens.back().second, "expected " + std::to_string(n) + " pixels");
  Tensor img(Shape{static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
  for (std::size_t i = 0; i < n; ++i) {
    const long v = number(4 + i);
    if (v < 0 || v > 255) throw ParseError(file, tokens[4 + i].second, "pixel out of range");
    img[i] = static_cast<double>(v) / 255.0;
  }
  return img;
}

}  // namespace benn
