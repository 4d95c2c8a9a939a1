#pragma once

#include <cmath>
#include <cstddef>

namespace binclust {

struct Minimum {
  double x;
  double value;
};

// Golden-section search for the minimum of a convex function on [lo, hi].
// Stops once the bracket is narrower than `tol` or after `max_iter` steps.
// Both endpoints are also evaluated so boundary minima are returned exactly.
template <typename F>
Minimum golden_section_minimize(F&& f, double lo, double hi,
                                double tol = 1e-9, std::size_t max_iter = 200) {
  if (!(hi > lo)) return {lo, f(lo)};
  constexpr double kInvPhi = 0.6180339887498949;
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = f(c);
  double fd = f(d);
  for (std::size_t it = 0; it < max_iter && (b - a) > tol; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = f(d);
    }
  }
  Minimum best{0.5 * (a + b), f(0.5 * (a + b))};
  if (const double v = f(lo); v < best.value) best = {lo, v};
  if (const double v = f(hi); v < best.value) best = {hi, v};
  return best;
}

}  // namespace binclust
