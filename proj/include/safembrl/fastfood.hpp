#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace safembrl {

// In-place unnormalized Walsh-Hadamard transform; x.size() must be a power of two.
// Applying it twice multiplies the input by x.size().
void fwht_inplace(Eigen::Ref<Eigen::VectorXd> x);

// One d' x d' structured Gaussian block  S * H * G * Pi * H * B.
struct FastfoodBlock {
    Eigen::VectorXd sign;    // B: +/-1 diagonal
    std::vector<int> perm;   // Pi: (Pi v)[i] = v[perm[i]]
    Eigen::VectorXd gauss;   // G: N(0,1) diagonal
    Eigen::VectorXd scale;   // S: chi(d')-distributed row-norm correction
};

// Stacked Fastfood blocks forming an M x d random frequency matrix, plus the
// uniform phases of the cosine feature map
//   phi_j(x) = sqrt(2/M) * cos(w_j . (x / lengthscales) + b_j).
struct FastfoodStack {
    int input_dim = 0;
    int num_features = 0;  // M
    int padded_dim = 0;    // next power of two >= input_dim
    std::uint64_t seed = 0;
    Eigen::VectorXd lengthscales;  // per-dimension, size input_dim
    std::vector<FastfoodBlock> blocks;
    Eigen::VectorXd phase;        // b, size M, U[0, 2*pi)
    Eigen::MatrixXd frequencies;  // V = W * diag(1/lengthscales), M x input_dim
};

FastfoodStack build_stack(int input_dim, int num_features,
                          const Eigen::VectorXd& lengthscales, std::uint64_t seed);

// Feature map for a single input (size input_dim) or one input per column.
Eigen::VectorXd features(const FastfoodStack& stack, const Eigen::VectorXd& x);
Eigen::MatrixXd features(const FastfoodStack& stack, const Eigen::MatrixXd& xs);

}  // namespace safembrl
