// Built with -ffast-math so the inversion loop uses the vectorized log.
#include <cmath>
#include <cstdint>

#include "genealogy/random.hpp"

namespace genealogy {

void fill_unit_exponentials(Rng& rng, double* out, int n) {
  for (int i = 0; i < n; ++i) out[i] = double((rng.next_u64() >> 11) + 1);
  for (int i = 0; i < n; ++i) out[i] = -std::log(out[i] * 0x1.0p-53);
}

}  // namespace genealogy
