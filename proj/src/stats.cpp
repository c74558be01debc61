#include "msgtl/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace msgtl {

double wilcoxon_signed_rank_greater(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("wilcoxon: samples differ in length");
    std::vector<double> d;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] != y[i]) d.push_back(x[i] - y[i]);
    }
    const std::size_t n = d.size();
    if (n == 0) return 1.0;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });

    // Doubled midranks keep every rank an integer.
    std::vector<std::size_t> rank2(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
        const std::size_t r2 = (i + 1) + (j + 1);
        for (std::size_t t = i; t <= j; ++t) rank2[order[t]] = r2;
        i = j + 1;
    }
    std::size_t observed = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        total += rank2[i];
        if (d[i] > 0) observed += rank2[i];
    }

    // Null distribution: each rank carries a positive sign with probability 1/2.
    std::vector<double> dist(total + 1, 0.0);
    dist[0] = 1.0;
    std::size_t reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
        reach += rank2[i];
        for (std::size_t s = reach + 1; s-- > 0;) {
            const double add = s >= rank2[i] ? dist[s - rank2[i]] : 0.0;
            dist[s] = 0.5 * (dist[s] + add);
        }
    }
    double p = 0.0;
    for (std::size_t s = observed; s <= total; ++s) p += dist[s];
    return std::min(1.0, p);
}

double kendall_tau_b(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("kendall: samples differ in length");
    const std::size_t n = x.size();
    double concordant = 0, discordant = 0, tie_x = 0, tie_y = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = x[i] - x[j], dy = y[i] - y[j];
            if (dx == 0 && dy == 0) {
                ++tie_x;
                ++tie_y;
            } else if (dx == 0) {
                ++tie_x;
            } else if (dy == 0) {
                ++tie_y;
            } else if ((dx > 0) == (dy > 0)) {
                ++concordant;
            } else {
                ++discordant;
            }
        }
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - (n > 0 ? 1 : 0)) / 2.0;
    const double denom = std::sqrt((pairs - tie_x) * (pairs - tie_y));
    return denom > 0 ? (concordant - discordant) / denom : 0.0;
}

}  // namespace msgtl
