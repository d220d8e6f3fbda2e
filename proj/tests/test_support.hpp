#pragma once

#include <random>
#include <vector>

#include "jetspray/bundle.hpp"
#include "jetspray/multidual.hpp"

namespace jetspray::testing {

inline std::mt19937_64& rng() {
    static std::mt19937_64 gen(20240601);
    return gen;
}

inline double uniform(double lo = -1.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(rng());
}

inline int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng()); }

inline Multidual random_multidual(int order, double real_lo = -1.0, double real_hi = 1.0) {
    Multidual a(order, uniform(real_lo, real_hi));
    for (Mask m = 1; m < a.size(); ++m) a[m] = uniform();
    return a;
}

inline BundlePoint random_point(int n, int r) {
    BundlePoint p(n, r);
    for (double& v : p.data()) v = uniform(-2.0, 2.0);
    return p;
}

}  // namespace jetspray::testing
