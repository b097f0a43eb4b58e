#include "genealogy/random.hpp"

#include <cmath>
#include <stdexcept>

namespace genealogy {

double Rng::exponential(double rate) {
  if (!(rate > 0)) throw std::invalid_argument("exponential: rate must be > 0");
  return -std::log(uniform01_pos()) / rate;
}

int Rng::pick_cumulative(std::span<const double> cumulative) {
  if (cumulative.empty()) throw std::invalid_argument("pick_cumulative: empty");
  double total = cumulative.back();
  if (!(total > 0)) throw std::invalid_argument("pick_cumulative: total mass 0");
  double u = uniform01() * total;
  int lo = 0, hi = int(cumulative.size()) - 1;
  while (lo < hi) {
    int mid = (lo + hi) / 2;
    if (cumulative[mid] <= u)
      lo = mid + 1;
    else
      hi = mid;
  }
  return lo;
}

}  // namespace genealogy
