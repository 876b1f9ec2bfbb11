#pragma once

#include "safembrl/fastfood.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace safembrl {

// Regression data; one sample per column. Inputs are state||control vectors,
// targets hold the next state's entries (one row per output dimension).
struct TrainingDataset {
    Eigen::MatrixXd inputs;   // (D+U) x N
    Eigen::MatrixXd targets;  // D x N

    TrainingDataset() = default;
    TrainingDataset(int input_dim, int output_dim)
        : inputs(input_dim, 0), targets(output_dim, 0) {}

    Eigen::Index size() const { return inputs.cols(); }
    void append(const Eigen::VectorXd& x, const Eigen::VectorXd& y);
    void validate() const;
};

// Per-output-dimension Bayesian linear model over a shared Fastfood feature map:
//   A_i = noise_var_i^-1 * Phi Phi^T + signal_var_i^-1 * I
//   w_i = noise_var_i^-1 * A_i^-1 * Phi y_i
struct LgmModel {
    FastfoodStack stack;
    Eigen::MatrixXd weights;                 // M x D
    std::vector<Eigen::MatrixXd> a_inv;      // per output dim, M x M
    Eigen::MatrixXd a_inv_flat;              // M^2 x D, vec(a_inv[i]) columns
    Eigen::MatrixXd freq_sq;                 // elementwise square of stack.frequencies
    Eigen::VectorXd noise_var;               // per output dim
    Eigen::VectorXd signal_var;              // per output dim
    std::int64_t num_samples = 0;

    int input_dim() const { return stack.input_dim; }
    int output_dim() const { return static_cast<int>(weights.cols()); }
    int num_features() const { return stack.num_features; }
};

LgmModel fit(const TrainingDataset& data, const FastfoodStack& stack,
             const Eigen::VectorXd& noise_var, const Eigen::VectorXd& signal_var);

// Per-dimension predictive mean w_i . phi(x) and variance phi(x)^T A_i^-1 phi(x).
std::pair<Eigen::VectorXd, Eigen::VectorXd> predict(const LgmModel& model,
                                                    const Eigen::VectorXd& x);

// Exact log marginal likelihood per output dimension; requires at least one sample.
Eigen::VectorXd log_evidence(const TrainingDataset& data, const FastfoodStack& stack,
                             const Eigen::VectorXd& noise_var,
                             const Eigen::VectorXd& signal_var);

struct HyperGrid {
    std::vector<double> noise_std;          // candidate per-dimension noise scales
    std::vector<double> signal_std;         // candidate per-dimension prior scales
    std::vector<double> lengthscale_scale;  // shared multipliers on base_lengthscales
    // Optional per-output-dimension grids (one list per output dimension); when
    // non-empty they override the shared lists, e.g. to keep a conservative
    // noise floor and a diffuse prior on the dimensions that gate the safety
    // limits while the rest stay evidence-driven.
    std::vector<std::vector<double>> noise_std_per_dim;
    std::vector<std::vector<double>> signal_std_per_dim;
    Eigen::VectorXd base_lengthscales;
    int num_features = 0;
    std::uint64_t stack_seed = 0;
};

struct SelectedHyperparams {
    Eigen::VectorXd noise_var;
    Eigen::VectorXd signal_var;
    Eigen::VectorXd lengthscales;
};

// Grid search maximizing summed log evidence: the shared lengthscale multiplier is
// swept with the feature stack rebuilt under the same seed, and per output
// dimension the (noise, signal) pair is chosen on its own evidence.
SelectedHyperparams select_hyperparameters(const TrainingDataset& data,
                                           const HyperGrid& grid);

// Versioned binary dump of every model field; load reproduces the model bit-exactly.
void save_checkpoint(const LgmModel& model, const std::string& path);
LgmModel load_checkpoint(const std::string& path);

}  // namespace safembrl
