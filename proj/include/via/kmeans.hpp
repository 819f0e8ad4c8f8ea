#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "via/rng.hpp"
#include "via/skeleton.hpp"

namespace via {

// Contrastive source selection: cluster sequence descriptors with K-Means,
// then sample sources uniformly outside the driving sequence's cluster.

// Descriptor of a root-centered sequence: per-joint temporal mean and
// standard deviation of every coordinate, concatenated (length 2*V*C).
inline std::vector<double> sequence_descriptor(const SkeletonSequence& seq) {
    const int T = seq.T(), V = seq.V(), C = seq.C();
    std::vector<double> out(static_cast<std::size_t>(2 * V * C), 0.0);
    for (int v = 0; v < V; ++v)
        for (int c = 0; c < C; ++c) {
            double mean = 0.0;
            for (int t = 0; t < T; ++t)
                mean += seq.frames.data[(static_cast<std::size_t>(t) * V + v) * C + c];
            mean /= T;
            double var = 0.0;
            for (int t = 0; t < T; ++t) {
                const double d = seq.frames.data[(static_cast<std::size_t>(t) * V + v) * C + c] - mean;
                var += d * d;
            }
            out[static_cast<std::size_t>(v * C + c)] = mean;
            out[static_cast<std::size_t>(V * C + v * C + c)] = std::sqrt(var / T);
        }
    return out;
}

struct ClusterModel {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<std::vector<double>> centroids;
    std::vector<int> assignments;
    std::vector<double> inertia_log;  // inertia after each assignment step
    int iterations = 0;

    int cluster_of(std::size_t index) const { return assignments.at(index); }
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace detail

// Lloyd's algorithm with k-means++ seeding. Deterministic per (points, k,
// seed). Stops after 100 iterations or when no centroid moves more than
// 1e-6. Empty clusters are repaired by splitting the largest cluster at its
// farthest member.
inline ClusterModel kmeans_fit(const std::vector<std::vector<double>>& points, int k, std::uint64_t seed) {
    if (k < 2) throw std::invalid_argument("kmeans: k must be >= 2");
    const std::size_t n = points.size();
    if (n < static_cast<std::size_t>(k))
        throw std::invalid_argument("kmeans: dataset size " + std::to_string(n) + " below k = " +
                                    std::to_string(k));
    const std::size_t dim = points[0].size();
    Rng rng(seed);

    ClusterModel model;
    model.k = k;
    model.seed = seed;

    // k-means++ seeding
    std::vector<std::vector<double>> centroids;
    centroids.push_back(points[rng.index(n)]);
    std::vector<double> d2(n);
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            for (const auto& c : centroids) best = std::min(best, detail::sq_dist(points[i], c));
            d2[i] = best;
            total += best;
        }
        std::size_t pick = 0;
        if (total <= 0.0) {
            pick = rng.index(n);  // all remaining mass on duplicates
        } else {
            const double r = rng.uniform() * total;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(points[pick]);
    }

    std::vector<int> assign(n, 0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (int iter = 0; iter < 100; ++iter) {
        // assignment (ties to the lowest index)
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::max();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double d = detail::sq_dist(points[i], centroids[static_cast<std::size_t>(c)]);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            assign[i] = arg;
            inertia += best;
        }
        model.inertia_log.push_back(inertia);
        model.iterations = iter + 1;

        // empty-cluster repair: move the centroid to the farthest member of
        // the largest cluster
        counts.assign(static_cast<std::size_t>(k), 0);
        for (std::size_t i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(assign[i])];
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0) continue;
            int largest = 0;
            for (int o = 1; o < k; ++o)
                if (counts[static_cast<std::size_t>(o)] > counts[static_cast<std::size_t>(largest)]) largest = o;
            double far_d = -1.0;
            std::size_t far_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (assign[i] != largest) continue;
                const double d = detail::sq_dist(points[i], centroids[static_cast<std::size_t>(largest)]);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            centroids[static_cast<std::size_t>(c)] = points[far_i];
            assign[far_i] = c;
            counts[static_cast<std::size_t>(c)] = 1;
            --counts[static_cast<std::size_t>(largest)];
        }

        // update step
        double max_shift2 = 0.0;
        std::vector<std::vector<double>> next(static_cast<std::size_t>(k),
                                              std::vector<double>(dim, 0.0));
        for (std::size_t i = 0; i < n; ++i) {
            auto& c = next[static_cast<std::size_t>(assign[i])];
            for (std::size_t d = 0; d < dim; ++d) c[d] += points[i][d];
        }
        for (int c = 0; c < k; ++c) {
            auto& nc = next[static_cast<std::size_t>(c)];
            const double inv = 1.0 / static_cast<double>(counts[static_cast<std::size_t>(c)]);
            for (auto& v : nc) v *= inv;
            max_shift2 = std::max(max_shift2, detail::sq_dist(nc, centroids[static_cast<std::size_t>(c)]));
            centroids[static_cast<std::size_t>(c)] = nc;
        }
        if (std::sqrt(max_shift2) < 1e-6) break;
    }

    // final assignment so the invariant "each point at its nearest centroid"
    // holds for the returned centroids
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::max();
        int arg = 0;
        for (int c = 0; c < k; ++c) {
            const double d = detail::sq_dist(points[i], centroids[static_cast<std::size_t>(c)]);
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        assign[i] = arg;
        inertia += best;
    }
    model.inertia_log.push_back(inertia);
    model.centroids = std::move(centroids);
    model.assignments = std::move(assign);
    return model;
}

inline ClusterModel fit_sequences(const std::vector<const SkeletonSequence*>& seqs, int k,
                                  std::uint64_t seed) {
    std::vector<std::vector<double>> descs;
    descs.reserve(seqs.size());
    for (const auto* s : seqs) descs.push_back(sequence_descriptor(root_center(*s)));
    return kmeans_fit(descs, k, seed);
}

// Uniform draw over every sequence outside the driving sequence's cluster.
inline std::size_t sample_contrastive(std::size_t driving_index, const ClusterModel& model, Rng& rng) {
    const int own = model.cluster_of(driving_index);
    std::size_t eligible = 0;
    for (int a : model.assignments)
        if (a != own) ++eligible;
    if (eligible == 0)
        throw std::runtime_error(
            "no contrastive source outside the driving cluster; lower k or enlarge the dataset");
    std::size_t pick = rng.index(eligible);
    for (std::size_t i = 0; i < model.assignments.size(); ++i) {
        if (model.assignments[i] == own) continue;
        if (pick == 0) return i;
        --pick;
    }
    throw std::logic_error("sample_contrastive: unreachable");
}

}  // namespace via
