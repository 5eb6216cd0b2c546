#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mrf {

struct KMeansResult {
    std::size_t k = 0;
    std::size_t dim = 0;
    std::vector<std::size_t> labels;
    std::vector<double> centroids;  // k x dim, row-major
    double inertia = 0.0;
    std::size_t iterations = 0;
};

// Lloyd's algorithm with k-means++ seeding. `data` holds `rows` points of
// `dim` coordinates, row-major. Stops when no label changes or after
// max_iter rounds. Ties go to the lowest centroid index; a centroid that
// loses all its points keeps its previous position.
KMeansResult kmeans(std::span<const double> data, std::size_t rows, std::size_t dim, std::size_t k,
                    std::uint64_t seed, std::size_t max_iter = 300);

}  // namespace mrf
