#include "safembrl/fastfood.hpp"

#include "safembrl/errors.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace safembrl {

void fwht_inplace(Eigen::Ref<Eigen::VectorXd> x) {
    const Eigen::Index n = x.size();
    if (n <= 0 || (n & (n - 1)) != 0)
        throw InvalidInputError("fwht_inplace: size must be a power of two, got " +
                                std::to_string(n));
    for (Eigen::Index h = 1; h < n; h *= 2) {
        for (Eigen::Index i = 0; i < n; i += 2 * h) {
            for (Eigen::Index j = i; j < i + h; ++j) {
                const double a = x[j];
                const double b = x[j + h];
                x[j] = a + b;
                x[j + h] = a - b;
            }
        }
    }
}

namespace {

int next_pow2(int n) {
    int p = 1;
    while (p < n) p *= 2;
    return p;
}

// v <- S H G Pi H B v, all in place; v.size() == d'.
void apply_block(const FastfoodBlock& block, Eigen::VectorXd& v, Eigen::VectorXd& tmp) {
    v.array() *= block.sign.array();
    fwht_inplace(v);
    for (Eigen::Index i = 0; i < v.size(); ++i) tmp[i] = v[block.perm[static_cast<size_t>(i)]];
    v = tmp.cwiseProduct(block.gauss);
    fwht_inplace(v);
    v.array() *= block.scale.array();
}

}  // namespace

FastfoodStack build_stack(int input_dim, int num_features,
                          const Eigen::VectorXd& lengthscales, std::uint64_t seed) {
    if (input_dim < 1)
        throw InvalidInputError("build_stack: input_dim must be >= 1");
    if (num_features < 1)
        throw InvalidInputError("build_stack: num_features must be >= 1");
    if (lengthscales.size() != input_dim)
        throw InvalidInputError("build_stack: lengthscales size " +
                                std::to_string(lengthscales.size()) + " != input_dim " +
                                std::to_string(input_dim));
    if ((lengthscales.array() <= 0.0).any())
        throw InvalidInputError("build_stack: lengthscales must be positive");

    FastfoodStack stack;
    stack.input_dim = input_dim;
    stack.num_features = num_features;
    stack.padded_dim = next_pow2(input_dim);
    stack.seed = seed;
    stack.lengthscales = lengthscales;

    const int d = stack.padded_dim;
    const int num_blocks = (num_features + d - 1) / d;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::gamma_distribution<double> chi_sq(0.5 * d, 2.0);  // c^2 ~ chi^2(d) => c ~ chi(d)

    stack.blocks.reserve(static_cast<size_t>(num_blocks));
    for (int b = 0; b < num_blocks; ++b) {
        FastfoodBlock block;
        block.sign.resize(d);
        for (int i = 0; i < d; ++i) block.sign[i] = unit(rng) < 0.5 ? -1.0 : 1.0;
        block.perm.resize(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) block.perm[static_cast<size_t>(i)] = i;
        for (int i = d - 1; i > 0; --i) {
            std::uniform_int_distribution<int> pick(0, i);
            std::swap(block.perm[static_cast<size_t>(i)],
                      block.perm[static_cast<size_t>(pick(rng))]);
        }
        block.gauss.resize(d);
        for (int i = 0; i < d; ++i) block.gauss[i] = normal(rng);
        const double g_norm = block.gauss.norm();
        if (g_norm == 0.0)
            throw NumericalError("build_stack: degenerate Gaussian diagonal");
        block.scale.resize(d);
        for (int i = 0; i < d; ++i)
            block.scale[i] = std::sqrt(chi_sq(rng)) / (std::sqrt(double(d)) * g_norm);
        stack.blocks.push_back(std::move(block));
    }

    stack.phase.resize(num_features);
    for (int j = 0; j < num_features; ++j)
        stack.phase[j] = 2.0 * std::numbers::pi * unit(rng);

    // Materialize V = W * diag(1/lengthscales) by pushing basis vectors through
    // the block pipeline; rows of the stacked operator are the frequencies w_j.
    stack.frequencies.resize(num_features, input_dim);
    Eigen::VectorXd col(d), tmp(d);
    for (int i = 0; i < input_dim; ++i) {
        const double inv_ell = 1.0 / lengthscales[i];
        for (int b = 0; b < num_blocks; ++b) {
            col.setZero();
            col[i] = inv_ell;
            apply_block(stack.blocks[static_cast<size_t>(b)], col, tmp);
            const int row0 = b * d;
            const int rows = std::min(d, num_features - row0);
            stack.frequencies.col(i).segment(row0, rows) = col.head(rows);
        }
    }
    return stack;
}

Eigen::VectorXd features(const FastfoodStack& stack, const Eigen::VectorXd& x) {
    if (x.size() != stack.input_dim)
        throw InvalidInputError("features: input size " + std::to_string(x.size()) +
                                " != input_dim " + std::to_string(stack.input_dim));
    const double amp = std::sqrt(2.0 / double(stack.num_features));
    return amp * ((stack.frequencies * x + stack.phase).array().cos()).matrix();
}

Eigen::MatrixXd features(const FastfoodStack& stack, const Eigen::MatrixXd& xs) {
    if (xs.rows() != stack.input_dim)
        throw InvalidInputError("features: input rows " + std::to_string(xs.rows()) +
                                " != input_dim " + std::to_string(stack.input_dim));
    const double amp = std::sqrt(2.0 / double(stack.num_features));
    return amp * (((stack.frequencies * xs).colwise() + stack.phase).array().cos()).matrix();
}

}  // namespace safembrl
