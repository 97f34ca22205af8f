#pragma once

#include "ccml/common.hpp"

namespace ccml {

// Radical inverse of i in the given prime base.
double radical_inverse(unsigned long long i, int base);

// Halton point number i (skipping the origin) in [0,1)^dim.
Vec halton(unsigned long long i, int dim);

// Deterministic, roughly uniform unit directions in R^dim.
// dim 1 gives {+1,-1}; dim 2 equally spaced angles; dim 3 a Fibonacci
// lattice; higher dims Box-Muller on Halton points.
std::vector<Vec> sphere_directions(int dim, int count);

// Deterministic points in the box [lo,hi] (Halton, offset by `start`).
std::vector<Vec> box_points(const Vec& lo, const Vec& hi, int count, unsigned long long start = 0);

// Deterministic points in the closed Euclidean ball of radius r around c.
std::vector<Vec> ball_points(const Vec& c, double r, int count, unsigned long long start = 0);

// Regular grid with `per_axis` points per axis spanning [lo,hi].
std::vector<Vec> grid_points(const Vec& lo, const Vec& hi, int per_axis);

}  // namespace ccml
