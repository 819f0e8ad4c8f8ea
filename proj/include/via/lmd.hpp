#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "via/rng.hpp"
#include "via/tape.hpp"
#include "via/tensor.hpp"

namespace via {

// Latent decomposition into a temporally static "character" component,
// spanned by a learnable orthogonal basis of K < C_out directions, and the
// per-timestep "motion" residual. Magnitudes are projections of the
// temporal mean of the latent onto the basis:
//
//   a_i   = <mean_t r[t], d_i> / |d_i|^2
//   r_c   = sum_i a_i d_i
//   r_m[t]= r[t] - r_c
//
// so recombination r_m[t] + r_c reproduces r exactly and the temporal mean
// of r_m is orthogonal to every basis vector.
namespace lmd {

inline constexpr double kOrthoTol = 1e-6;    // relative off-diagonal tolerance
inline constexpr double kMinNorm = 1e-8;     // rank-deficiency pivot threshold

// The model constraint is K in [1, C); the orthogonalization routines only
// need K <= C to be solvable, so they validate with strict = false.
template <typename S>
void validate_basis_shape(const Tensor<S>& basis, bool strict = true) {
    if (basis.rank() != 2)
        throw std::invalid_argument("basis must be [K, C], got " + shape_str(basis.shape));
    const int K = basis.shape[0], C = basis.shape[1];
    if (K < 1 || K > C || (strict && K == C))
        throw std::invalid_argument("basis size K=" + std::to_string(K) + " must lie in [1, C=" +
                                    std::to_string(C) + (strict ? ")" : "]"));
}

// max_{i != j} |<d_i, d_j>| / (|d_i| |d_j|), and the smallest vector norm.
template <typename S>
double orthogonality_residual(const Tensor<S>& basis, double* min_norm = nullptr) {
    validate_basis_shape(basis, false);
    const int K = basis.shape[0], C = basis.shape[1];
    std::vector<double> norms(static_cast<std::size_t>(K));
    for (int i = 0; i < K; ++i) {
        double n = 0;
        const S* di = basis.data.data() + static_cast<std::size_t>(i) * C;
        for (int c = 0; c < C; ++c) n += static_cast<double>(di[c]) * di[c];
        norms[static_cast<std::size_t>(i)] = std::sqrt(n);
    }
    double worst = 0.0;
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j) {
            const S* di = basis.data.data() + static_cast<std::size_t>(i) * C;
            const S* dj = basis.data.data() + static_cast<std::size_t>(j) * C;
            double d = 0;
            for (int c = 0; c < C; ++c) d += static_cast<double>(di[c]) * dj[c];
            const double denom = norms[static_cast<std::size_t>(i)] * norms[static_cast<std::size_t>(j)];
            if (denom > 0) worst = std::max(worst, std::abs(d) / denom);
        }
    if (min_norm) {
        double mn = norms.empty() ? 0.0 : norms[0];
        for (double n : norms) mn = std::min(mn, n);
        *min_norm = mn;
    }
    return worst;
}

template <typename S>
void validate_basis(const Tensor<S>& basis) {
    double min_norm = 0.0;
    const double res = orthogonality_residual(basis, &min_norm);
    if (min_norm < kMinNorm)
        throw std::invalid_argument("basis vector norm " + std::to_string(min_norm) + " below " +
                                    std::to_string(kMinNorm));
    if (res > kOrthoTol)
        throw std::invalid_argument("basis violates orthogonality tolerance: residual " +
                                    std::to_string(res));
}

// Modified Gram-Schmidt in index order, two passes per vector. Spans are
// preserved. A pivot with norm below kMinNorm is replaced by a fresh random
// direction orthogonal to its predecessors; the return value counts such
// replacements so callers can log them.
template <typename S>
int reorthogonalize(Tensor<S>& basis, Rng& rng) {
    validate_basis_shape(basis, false);
    const int K = basis.shape[0], C = basis.shape[1];
    int reinitialized = 0;
    auto row = [&](int i) { return basis.data.data() + static_cast<std::size_t>(i) * C; };
    auto project_out = [&](S* v, int upto) {
        for (int pass = 0; pass < 2; ++pass)
            for (int j = 0; j < upto; ++j) {
                const S* q = row(j);
                S num = 0, den = 0;
                for (int c = 0; c < C; ++c) {
                    num += v[c] * q[c];
                    den += q[c] * q[c];
                }
                if (den == S(0)) continue;
                const S coef = num / den;
                for (int c = 0; c < C; ++c) v[c] -= coef * q[c];
            }
    };
    for (int i = 0; i < K; ++i) {
        S* v = row(i);
        project_out(v, i);
        double n2 = 0;
        for (int c = 0; c < C; ++c) n2 += static_cast<double>(v[c]) * v[c];
        if (std::sqrt(n2) < kMinNorm) {
            ++reinitialized;
            for (;;) {
                for (int c = 0; c < C; ++c) v[c] = static_cast<S>(rng.normal());
                project_out(v, i);
                n2 = 0;
                for (int c = 0; c < C; ++c) n2 += static_cast<double>(v[c]) * v[c];
                if (std::sqrt(n2) >= kMinNorm) break;
            }
            const S inv = static_cast<S>(1.0 / std::sqrt(n2));
            for (int c = 0; c < C; ++c) v[c] *= inv;
        }
    }
    return reinitialized;
}

// Random Gaussian directions, then Gram-Schmidt. Full rank with
// probability 1.
template <typename S>
Tensor<S> init_basis(int K, int C, Rng& rng) {
    Tensor<S> basis = Tensor<S>::zeros({K, C});
    for (auto& v : basis.data) v = static_cast<S>(rng.normal());
    reorthogonalize(basis, rng);
    return basis;
}

template <typename S>
struct Decomposition {
    Tensor<S> magnitudes;  // [K]
    Tensor<S> character;   // [C]
    Tensor<S> motion;      // [T', C]
};

template <typename S>
Decomposition<S> decompose(const Tensor<S>& latent, const Tensor<S>& basis, bool validate = true) {
    if (latent.rank() != 2)
        throw std::invalid_argument("latent must be [T', C], got " + shape_str(latent.shape));
    validate_basis_shape(basis);
    if (basis.shape[1] != latent.shape[1])
        throw std::invalid_argument("latent " + shape_str(latent.shape) + " and basis " +
                                    shape_str(basis.shape) + " disagree on C");
    if (validate) validate_basis(basis);

    const int T = latent.shape[0], C = latent.shape[1], K = basis.shape[0];
    std::vector<S> mean(static_cast<std::size_t>(C), S(0));
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c) mean[static_cast<std::size_t>(c)] += latent.data[static_cast<std::size_t>(t * C + c)];
    const S inv_t = S(1) / static_cast<S>(T);
    for (auto& v : mean) v *= inv_t;

    Decomposition<S> out;
    out.magnitudes = Tensor<S>::zeros({K});
    out.character = Tensor<S>::zeros({C});
    for (int i = 0; i < K; ++i) {
        const S* d = basis.data.data() + static_cast<std::size_t>(i) * C;
        S num = 0, den = 0;
        for (int c = 0; c < C; ++c) {
            num += mean[static_cast<std::size_t>(c)] * d[c];
            den += d[c] * d[c];
        }
        const S a = num / den;
        out.magnitudes.data[static_cast<std::size_t>(i)] = a;
        for (int c = 0; c < C; ++c) out.character.data[static_cast<std::size_t>(c)] += a * d[c];
    }
    out.motion = latent;
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            out.motion.data[static_cast<std::size_t>(t * C + c)] -= out.character.data[static_cast<std::size_t>(c)];
    return out;
}

template <typename S>
Tensor<S> recombine(const Tensor<S>& motion, const Tensor<S>& character) {
    if (motion.rank() != 2 || character.rank() != 1 || motion.shape[1] != character.shape[0])
        throw std::invalid_argument("recombine: incompatible " + shape_str(motion.shape) + " and " +
                                    shape_str(character.shape));
    Tensor<S> out = motion;
    const int T = motion.shape[0], C = motion.shape[1];
    for (int t = 0; t < T; ++t)
        for (int c = 0; c < C; ++c)
            out.data[static_cast<std::size_t>(t * C + c)] += character.data[static_cast<std::size_t>(c)];
    return out;
}

// Character replacement by explicit magnitudes: recombine(r_m, sum_i a_i d_i).
// With all-zero magnitudes this is the canonical-view generation.
template <typename S>
Tensor<S> manipulate(const Tensor<S>& motion, const Tensor<S>& basis, const std::vector<S>& magnitudes) {
    validate_basis_shape(basis);
    const int K = basis.shape[0], C = basis.shape[1];
    if (static_cast<int>(magnitudes.size()) != K)
        throw std::invalid_argument("manipulate: expected " + std::to_string(K) + " magnitudes, got " +
                                    std::to_string(magnitudes.size()));
    Tensor<S> character = Tensor<S>::zeros({C});
    for (int i = 0; i < K; ++i)
        for (int c = 0; c < C; ++c)
            character.data[static_cast<std::size_t>(c)] +=
                magnitudes[static_cast<std::size_t>(i)] * basis.data[static_cast<std::size_t>(i * C + c)];
    return recombine(motion, character);
}

// --- tape versions: identical math recorded for backprop ---

struct DecompVars {
    Var magnitudes;
    Var character;
    Var motion;
};

template <typename S>
DecompVars decompose(Tape<S>& t, Var latent, Var basis) {
    const auto& lv = t.value(latent);
    const auto& bv = t.value(basis);
    if (lv.rank() != 2 || bv.rank() != 2 || bv.shape[1] != lv.shape[1])
        throw std::invalid_argument("decompose: incompatible latent " + shape_str(lv.shape) +
                                    " and basis " + shape_str(bv.shape));
    const int C = lv.shape[1], K = bv.shape[0];
    Var rbar = mean_axis(t, latent, 0);                                        // [C]
    Var numer = reshape(t, matmul(t, basis, reshape(t, rbar, {C, 1})), {K});   // <rbar, d_i>
    Var denom = sum_axis(t, mul(t, basis, basis), 1);                          // |d_i|^2
    Var mags = div(t, numer, denom);
    Var character = reshape(t, matmul(t, transpose2d(t, basis), reshape(t, mags, {K, 1})), {C});
    Var motion = bias_add(t, latent, neg(t, character));
    return DecompVars{mags, character, motion};
}

template <typename S>
Var recombine(Tape<S>& t, Var motion, Var character) {
    return bias_add(t, motion, character);
}

}  // namespace lmd
}  // namespace via
