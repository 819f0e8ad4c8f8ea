#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace via {

using Shape = std::vector<int>;

inline std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

// Dense row-major tensor. Rank 0 (empty shape) is a scalar holding one
// value. No broadcasting: every op states its exact shape contract.
template <typename S>
struct Tensor {
    Shape shape;
    std::vector<S> data;

    Tensor() = default;
    Tensor(Shape s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        for (int dim : shape)
            if (dim <= 0) throw std::invalid_argument("non-positive dimension in " + shape_str(shape));
    }

    static Tensor zeros(Shape s) {
        const std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<S>(n, S(0)));
    }
    static Tensor full(Shape s, S v) {
        const std::size_t n = numel(s);
        return Tensor(std::move(s), std::vector<S>(n, v));
    }
    static Tensor scalar(S v) { return Tensor(Shape{}, std::vector<S>{v}); }

    std::size_t size() const { return data.size(); }
    int rank() const { return static_cast<int>(shape.size()); }
    bool is_scalar() const { return shape.empty(); }

    S item() const {
        if (data.size() != 1) throw std::invalid_argument("item() on non-scalar tensor " + shape_str(shape));
        return data[0];
    }

    bool all_finite() const {
        for (S v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename T>
    Tensor<T> cast() const {
        std::vector<T> out(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) out[i] = static_cast<T>(data[i]);
        return Tensor<T>(shape, std::move(out));
    }
};

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape) +
                                    " vs " + shape_str(b.shape));
}

}  // namespace via
