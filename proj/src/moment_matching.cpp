#include "safembrl/moment_matching.hpp"

#include "safembrl/errors.hpp"

#include <cmath>
#include <string>

namespace safembrl {

namespace {
thread_local long long g_clamp_count = 0;
}

long long variance_clamp_count() { return g_clamp_count; }
void reset_variance_clamp_count() { g_clamp_count = 0; }

void BeliefState::validate() const {
    if (mean.size() != var.size())
        throw InvalidInputError("BeliefState: mean and var sizes differ");
    if (num_position < 0 || num_position > mean.size())
        throw InvalidInputError("BeliefState: num_position out of range");
    if (!mean.allFinite() || !var.allFinite())
        throw InvalidInputError("BeliefState: non-finite entries");
    if ((var.array() < 0.0).any())
        throw InvalidInputError("BeliefState: negative variance entry");
}

double BeliefState::position_uncertainty() const {
    if (num_position == 0) return 0.0;
    return var.head(num_position).maxCoeff();
}

BeliefState propagate(const LgmModel& model, const BeliefState& belief,
                      const Eigen::VectorXd& u) {
    belief.validate();
    if (!u.allFinite())
        throw InvalidInputError("propagate: non-finite control");
    const Eigen::Index state_dim = belief.mean.size();
    if (state_dim + u.size() != model.input_dim())
        throw InvalidInputError("propagate: state dim " + std::to_string(state_dim) +
                                " + control dim " + std::to_string(u.size()) +
                                " != model input dim " + std::to_string(model.input_dim()));
    if (model.output_dim() != state_dim)
        throw InvalidInputError("propagate: model output dim != state dim");

    const int m = model.num_features();
    const double amp_sq = 2.0 / double(m);

    // Per-feature phase moments: z_j = w_j . x~ + b_j with x~ ~ N([mu;u], diag([var;0])).
    Eigen::VectorXd input_mean(model.input_dim());
    input_mean << belief.mean, u;
    const Eigen::VectorXd phase_mean = model.stack.frequencies * input_mean + model.stack.phase;
    const Eigen::VectorXd phase_var = model.freq_sq.leftCols(state_dim) * belief.var;

    const Eigen::ArrayXd damp = (-0.5 * phase_var.array()).exp();
    const Eigen::ArrayXd a = damp * phase_mean.array().cos();
    const Eigen::ArrayXd b = damp * phase_mean.array().sin();

    // E[phi] and the next mean (Eq. 5 structure).
    const Eigen::VectorXd q = std::sqrt(amp_sq) * a.matrix();
    Eigen::VectorXd next_mean = model.weights.transpose() * q;

    // Phase cross-covariances C_jk = w_j^T Sigma w_k, then
    // E[phi phi^T]_jk = (2/M) (a_j a_k cosh C_jk + b_j b_k sinh C_jk).
    const auto v_state = model.stack.frequencies.leftCols(state_dim);
    Eigen::MatrixXd cross = v_state * belief.var.asDiagonal() * v_state.transpose();
    Eigen::ArrayXXd exp_c = cross.array().exp();
    Eigen::ArrayXXd cosh_c = 0.5 * (exp_c + exp_c.inverse());
    Eigen::ArrayXXd sinh_c = exp_c - cosh_c;
    Eigen::MatrixXd second_moment =
        amp_sq *
        ((a.matrix() * a.matrix().transpose()).array() * cosh_c +
         (b.matrix() * b.matrix().transpose()).array() * sinh_c)
            .matrix();

    // Law of total variance (Eq. 6 structure):
    //   var_i = tr(A_i^-1 E[phi phi^T]) + w_i^T E[phi phi^T] w_i - mean_i^2.
    const Eigen::Map<const Eigen::VectorXd> sm_flat(second_moment.data(),
                                                    second_moment.size());
    const Eigen::VectorXd traces = model.a_inv_flat.transpose() * sm_flat;
    const Eigen::MatrixXd smw = second_moment * model.weights;
    const Eigen::VectorXd w_sm_w =
        (model.weights.array() * smw.array()).colwise().sum().matrix().transpose();

    Eigen::VectorXd next_var = traces + w_sm_w - next_mean.cwiseAbs2();
    for (Eigen::Index i = 0; i < next_var.size(); ++i) {
        if (next_var[i] < 0.0) {
            if (next_var[i] < -1e-10)
                throw NumericalError("propagate: variance " + std::to_string(next_var[i]) +
                                     " below tolerance for output dimension " +
                                     std::to_string(i));
            next_var[i] = 0.0;
            ++g_clamp_count;
        }
    }

    BeliefState next;
    next.mean = std::move(next_mean);
    next.var = std::move(next_var);
    next.num_position = belief.num_position;
    return next;
}

Eigen::VectorXd pack_state(const BeliefState& belief) {
    Eigen::VectorXd s(2 * belief.mean.size());
    s << belief.mean, belief.var;
    return s;
}

BeliefState unpack_state(const Eigen::VectorXd& s, int num_position) {
    if (s.size() % 2 != 0)
        throw InvalidInputError("unpack_state: expanded state must have even size");
    const Eigen::Index d = s.size() / 2;
    BeliefState belief;
    belief.mean = s.head(d);
    belief.var = s.tail(d);
    belief.num_position = num_position;
    return belief;
}

BeliefState deterministic_dynamics(const LgmModel& model, const BeliefState& belief,
                                   const Eigen::VectorXd& u) {
    return propagate(model, belief, u);
}

}  // namespace safembrl
