#pragma once

#include <cstddef>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace ea {

// Dense row-major tensor of 64-bit floats. Rank 1..3 is all the model needs.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;

    explicit Tensor(std::vector<int> s, double fill = 0.0) : shape(std::move(s)) {
        for (int d : shape) {
            if (d <= 0) throw std::invalid_argument("Tensor: non-positive dimension " + std::to_string(d));
        }
        v.assign(static_cast<std::size_t>(numel_of(shape)), fill);
    }

    static Tensor vec(std::vector<double> data) {
        Tensor t;
        t.shape = {static_cast<int>(data.size())};
        t.v = std::move(data);
        return t;
    }

    static Tensor mat(int rows, int cols, std::vector<double> data) {
        Tensor t;
        t.shape = {rows, cols};
        t.v = std::move(data);
        if (static_cast<int>(t.v.size()) != rows * cols)
            throw std::invalid_argument("Tensor::mat: data size does not match shape");
        return t;
    }

    static long long numel_of(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) n *= d;
        return n;
    }

    int numel() const { return static_cast<int>(v.size()); }
    int rank() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    double& at(int i) { return v[static_cast<std::size_t>(i)]; }
    double at(int i) const { return v[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * dim(1) + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * dim(1) + j]; }
    double& at(int i, int j, int k) {
        return v[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }
    double at(int i, int j, int k) const {
        return v[(static_cast<std::size_t>(i) * dim(1) + j) * dim(2) + k];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + "]";
}

}  // namespace ea
