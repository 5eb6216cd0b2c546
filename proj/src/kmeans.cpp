#include "mrf/kmeans.hpp"

#include "mrf/common.hpp"
#include "mrf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrf {

namespace {

double dist2(const double* a, const double* b, std::size_t dim) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
        const double d = a[c] - b[c];
        s += d * d;
    }
    return s;
}

}  // namespace

KMeansResult kmeans(std::span<const double> data, std::size_t rows, std::size_t dim, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter) {
    if (k == 0) throw InvalidArgument("kmeans: k must be >= 1");
    if (max_iter == 0) throw InvalidArgument("kmeans: max_iter must be >= 1");
    if (k > rows)
        throw InvalidArgument("kmeans: k = " + std::to_string(k) + " exceeds " + std::to_string(rows) +
                              " rows");
    if (dim == 0 || data.size() != rows * dim) throw DimensionMismatch("kmeans: data size mismatch");
    for (double v : data)
        if (!std::isfinite(v)) throw InvalidArgument("kmeans: non-finite feature");

    KMeansResult res;
    res.k = k;
    res.dim = dim;
    res.centroids.resize(k * dim);
    const double* X = data.data();

    // k-means++ seeding
    SplitMix64 rng(seed);
    std::vector<double> d2(rows);
    auto pick_first = static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * rows) >> 64);
    std::copy(X + pick_first * dim, X + (pick_first + 1) * dim, res.centroids.begin());
    for (std::size_t i = 0; i < rows; ++i) d2[i] = dist2(X + i * dim, res.centroids.data(), dim);
    for (std::size_t c = 1; c < k; ++c) {
        double total = 0.0;
        for (double v : d2) total += v;
        std::size_t pick = rows - 1;
        if (total > 0.0) {
            const double target = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < rows; ++i) {
                acc += d2[i];
                if (acc > target) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * rows) >> 64);
        }
        double* centre = res.centroids.data() + c * dim;
        std::copy(X + pick * dim, X + (pick + 1) * dim, centre);
        for (std::size_t i = 0; i < rows; ++i) d2[i] = std::min(d2[i], dist2(X + i * dim, centre, dim));
    }

    res.labels.assign(rows, std::numeric_limits<std::size_t>::max());
    for (std::size_t it = 0; it < max_iter; ++it) {
        std::vector<char> changed_flag(rows, 0);
        parallel_for(rows, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                std::size_t arg = 0;
                double b = dist2(X + i * dim, res.centroids.data(), dim);
                for (std::size_t c = 1; c < k; ++c) {
                    const double d = dist2(X + i * dim, res.centroids.data() + c * dim, dim);
                    if (d < b) {
                        b = d;
                        arg = c;
                    }
                }
                if (arg != res.labels[i]) {
                    res.labels[i] = arg;
                    changed_flag[i] = 1;
                }
            }
        });
        bool changed = false;
        for (char f : changed_flag) changed = changed || f;
        res.iterations = it + 1;
        if (!changed) break;
        std::vector<double> sums(k * dim, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < rows; ++i) {
            const std::size_t c = res.labels[i];
            ++counts[c];
            for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += X[i * dim + j];
        }
        for (std::size_t c = 0; c < k; ++c)
            if (counts[c] > 0)
                for (std::size_t j = 0; j < dim; ++j)
                    res.centroids[c * dim + j] = sums[c * dim + j] / static_cast<double>(counts[c]);
    }
    res.inertia = 0.0;
    for (std::size_t i = 0; i < rows; ++i)
        res.inertia += dist2(X + i * dim, res.centroids.data() + res.labels[i] * dim, dim);
    return res;
}

}  // namespace mrf
