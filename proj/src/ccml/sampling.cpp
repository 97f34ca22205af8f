#include "ccml/sampling.hpp"

#include <cmath>
#include <numbers>

namespace ccml {

namespace {
constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
}

double radical_inverse(unsigned long long i, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (i > 0) {
    r += f * static_cast<double>(i % base);
    i /= base;
    f *= inv;
  }
  return r;
}

Vec halton(unsigned long long i, int dim) {
  if (dim > static_cast<int>(std::size(kPrimes))) throw DimensionError("halton: dimension too large");
  Vec p(dim);
  for (int k = 0; k < dim; ++k) p[k] = radical_inverse(i + 1, kPrimes[k]);
  return p;
}

std::vector<Vec> sphere_directions(int dim, int count) {
  std::vector<Vec> out;
  if (dim <= 0 || count <= 0) return out;
  if (dim == 1) {
    out.push_back(Vec::Constant(1, 1.0));
    out.push_back(Vec::Constant(1, -1.0));
    return out;
  }
  out.reserve(count);
  const double pi = std::numbers::pi;
  if (dim == 2) {
    for (int i = 0; i < count; ++i) {
      double a = 2.0 * pi * (i + 0.5) / count;
      Vec v(2);
      v << std::cos(a), std::sin(a);
      out.push_back(v);
    }
    return out;
  }
  if (dim == 3) {
    const double golden = pi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
      double z = 1.0 - 2.0 * (i + 0.5) / count;
      double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      double a = golden * i;
      Vec v(3);
      v << r * std::cos(a), r * std::sin(a), z;
      out.push_back(v);
    }
    return out;
  }
  const int pairs = (dim + 1) / 2;
  unsigned long long i = 0;
  while (static_cast<int>(out.size()) < count) {
    Vec u = halton(i++, 2 * pairs);
    Vec g(dim);
    for (int k = 0; k < dim; ++k) {
      double u1 = std::max(u[2 * (k / 2)], 1e-300);
      double u2 = u[2 * (k / 2) + 1];
      double rad = std::sqrt(-2.0 * std::log(u1));
      g[k] = (k % 2 == 0) ? rad * std::cos(2 * pi * u2) : rad * std::sin(2 * pi * u2);
    }
    double nrm = g.norm();
    if (nrm > 1e-12) out.push_back(g / nrm);
  }
  return out;
}

std::vector<Vec> box_points(const Vec& lo, const Vec& hi, int count, unsigned long long start) {
  std::vector<Vec> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    Vec u = halton(start + i, static_cast<int>(lo.size()));
    out.push_back(lo + (hi - lo).cwiseProduct(u));
  }
  return out;
}

std::vector<Vec> ball_points(const Vec& c, double r, int count, unsigned long long start) {
  std::vector<Vec> out;
  out.reserve(count);
  const int dim = static_cast<int>(c.size());
  unsigned long long i = start;
  while (static_cast<int>(out.size()) < count) {
    Vec u = 2.0 * halton(i++, dim) - Vec::Ones(dim);
    if (u.squaredNorm() <= 1.0) out.push_back(c + r * u);
  }
  return out;
}

std::vector<Vec> grid_points(const Vec& lo, const Vec& hi, int per_axis) {
  const int dim = static_cast<int>(lo.size());
  std::vector<Vec> out;
  std::vector<int> idx(dim, 0);
  while (true) {
    Vec p(dim);
    for (int k = 0; k < dim; ++k)
      p[k] = per_axis == 1 ? 0.5 * (lo[k] + hi[k]) : lo[k] + (hi[k] - lo[k]) * idx[k] / (per_axis - 1);
    out.push_back(p);
    int k = 0;
    while (k < dim && ++idx[k] == per_axis) idx[k++] = 0;
    if (k == dim) break;
  }
  return out;
}

}  // namespace ccml
