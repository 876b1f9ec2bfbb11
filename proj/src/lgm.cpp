#include "safembrl/lgm.hpp"

#include "safembrl/errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>

namespace safembrl {

void TrainingDataset::append(const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != inputs.rows() || y.size() != targets.rows())
        throw InvalidInputError("TrainingDataset::append: sample dimensions do not match");
    if (!x.allFinite() || !y.allFinite())
        throw InvalidInputError("TrainingDataset::append: non-finite sample");
    const Eigen::Index n = inputs.cols();
    inputs.conservativeResize(Eigen::NoChange, n + 1);
    targets.conservativeResize(Eigen::NoChange, n + 1);
    inputs.col(n) = x;
    targets.col(n) = y;
}

void TrainingDataset::validate() const {
    if (inputs.cols() != targets.cols())
        throw InvalidInputError("TrainingDataset: inputs and targets hold different sample counts");
    if (!inputs.allFinite() || !targets.allFinite())
        throw InvalidInputError("TrainingDataset: non-finite entries");
}

namespace {

// Cholesky with escalating diagonal jitter; A is kept consistent with the
// returned factorization. Throws after three failed retries.
Eigen::LLT<Eigen::MatrixXd> chol_with_jitter(Eigen::MatrixXd& A, int dim_label) {
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    double jitter = 1e-10;
    for (int attempt = 0; llt.info() != Eigen::Success && attempt < 3; ++attempt) {
        A.diagonal().array() += jitter;
        jitter *= 10.0;
        llt.compute(A);
    }
    if (llt.info() != Eigen::Success)
        throw NumericalError("lgm: precision matrix not positive definite for output dimension " +
                             std::to_string(dim_label));
    return llt;
}

double evidence_one_dim(Eigen::MatrixXd gram, const Eigen::VectorXd& phi_y, double yty,
                        double n, int m, double noise_var, double signal_var, int dim_label) {
    gram /= noise_var;
    gram.diagonal().array() += 1.0 / signal_var;
    const auto llt = chol_with_jitter(gram, dim_label);
    const double log_det =
        2.0 * llt.matrixLLT().diagonal().array().log().sum();
    const Eigen::VectorXd w = llt.solve(phi_y) / noise_var;
    const double quad = (yty - phi_y.dot(w)) / noise_var;
    return -0.5 * (n * std::log(2.0 * std::numbers::pi) + n * std::log(noise_var) +
                   double(m) * std::log(signal_var) + log_det + quad);
}

void check_variances(const Eigen::VectorXd& noise_var, const Eigen::VectorXd& signal_var,
                     Eigen::Index output_dim) {
    if (noise_var.size() != output_dim || signal_var.size() != output_dim)
        throw InvalidInputError("lgm: variance vectors must have one entry per output dimension");
    if ((noise_var.array() <= 0.0).any() || (signal_var.array() <= 0.0).any())
        throw InvalidInputError("lgm: noise and signal variances must be positive");
}

}  // namespace

LgmModel fit(const TrainingDataset& data, const FastfoodStack& stack,
             const Eigen::VectorXd& noise_var, const Eigen::VectorXd& signal_var) {
    data.validate();
    if (data.inputs.rows() != stack.input_dim)
        throw InvalidInputError("fit: dataset input dimension " +
                                std::to_string(data.inputs.rows()) + " != stack input_dim " +
                                std::to_string(stack.input_dim));
    const Eigen::Index output_dim = data.targets.rows();
    check_variances(noise_var, signal_var, output_dim);

    const int m = stack.num_features;
    LgmModel model;
    model.stack = stack;
    model.freq_sq = stack.frequencies.array().square();
    model.noise_var = noise_var;
    model.signal_var = signal_var;
    model.num_samples = data.size();
    model.weights.resize(m, output_dim);
    model.a_inv.resize(static_cast<size_t>(output_dim));
    model.a_inv_flat.resize(Eigen::Index(m) * m, output_dim);

    const Eigen::MatrixXd phi = features(stack, data.inputs);  // M x N
    const Eigen::MatrixXd gram = phi * phi.transpose();
    const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(m, m);

    for (Eigen::Index i = 0; i < output_dim; ++i) {
        Eigen::MatrixXd a = gram / noise_var[i];
        a.diagonal().array() += 1.0 / signal_var[i];
        const auto llt = chol_with_jitter(a, static_cast<int>(i));
        const Eigen::VectorXd phi_y = phi * data.targets.row(i).transpose();
        model.weights.col(i) = llt.solve(phi_y) / noise_var[i];
        model.a_inv[static_cast<size_t>(i)] = llt.solve(identity);
        model.a_inv_flat.col(i) =
            Eigen::Map<const Eigen::VectorXd>(model.a_inv[static_cast<size_t>(i)].data(),
                                              Eigen::Index(m) * m);
    }
    return model;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> predict(const LgmModel& model,
                                                    const Eigen::VectorXd& x) {
    if (!x.allFinite())
        throw InvalidInputError("predict: non-finite input");
    const Eigen::VectorXd phi = features(model.stack, x);
    Eigen::VectorXd mean = model.weights.transpose() * phi;
    Eigen::VectorXd var(model.output_dim());
    for (int i = 0; i < model.output_dim(); ++i) {
        const double v = phi.dot(model.a_inv[static_cast<size_t>(i)] * phi);
        if (v < -1e-10)
            throw NumericalError("predict: negative variance " + std::to_string(v) +
                                 " for output dimension " + std::to_string(i));
        var[i] = std::max(0.0, v);
    }
    return {std::move(mean), std::move(var)};
}

Eigen::VectorXd log_evidence(const TrainingDataset& data, const FastfoodStack& stack,
                             const Eigen::VectorXd& noise_var,
                             const Eigen::VectorXd& signal_var) {
    data.validate();
    if (data.size() == 0)
        throw InvalidInputError("log_evidence: undefined for an empty dataset");
    if (data.inputs.rows() != stack.input_dim)
        throw InvalidInputError("log_evidence: dataset input dimension != stack input_dim");
    const Eigen::Index output_dim = data.targets.rows();
    check_variances(noise_var, signal_var, output_dim);

    const Eigen::MatrixXd phi = features(stack, data.inputs);
    const Eigen::MatrixXd gram = phi * phi.transpose();
    const double n = double(data.size());

    Eigen::VectorXd out(output_dim);
    for (Eigen::Index i = 0; i < output_dim; ++i) {
        const Eigen::VectorXd phi_y = phi * data.targets.row(i).transpose();
        const double yty = data.targets.row(i).squaredNorm();
        out[i] = evidence_one_dim(gram, phi_y, yty, n, stack.num_features, noise_var[i],
                                  signal_var[i], static_cast<int>(i));
    }
    return out;
}

SelectedHyperparams select_hyperparameters(const TrainingDataset& data, const HyperGrid& grid) {
    data.validate();
    if (data.size() == 0)
        throw InvalidInputError("select_hyperparameters: dataset must be non-empty");
    if (grid.noise_std.empty() || grid.signal_std.empty() || grid.lengthscale_scale.empty())
        throw InvalidInputError("select_hyperparameters: every grid axis needs at least one candidate");
    if (grid.base_lengthscales.size() != data.inputs.rows())
        throw InvalidInputError("select_hyperparameters: base_lengthscales size != input dimension");
    for (double v : grid.noise_std)
        if (v <= 0.0) throw InvalidInputError("select_hyperparameters: noise_std must be positive");
    auto check_per_dim = [&](const std::vector<std::vector<double>>& per_dim, const char* name) {
        if (per_dim.empty()) return;
        if (per_dim.size() != static_cast<std::size_t>(data.targets.rows()))
            throw InvalidInputError(std::string("select_hyperparameters: ") + name +
                                    " size != output dimension");
        for (const auto& dim_grid : per_dim) {
            if (dim_grid.empty())
                throw InvalidInputError(std::string("select_hyperparameters: ") + name +
                                        " entries need >= 1 candidate");
            for (double v : dim_grid)
                if (v <= 0.0)
                    throw InvalidInputError(std::string("select_hyperparameters: ") + name +
                                            " must be positive");
        }
    };
    check_per_dim(grid.noise_std_per_dim, "noise_std_per_dim");
    check_per_dim(grid.signal_std_per_dim, "signal_std_per_dim");
    for (double v : grid.signal_std)
        if (v <= 0.0) throw InvalidInputError("select_hyperparameters: signal_std must be positive");
    for (double v : grid.lengthscale_scale)
        if (v <= 0.0)
            throw InvalidInputError("select_hyperparameters: lengthscale_scale must be positive");

    const Eigen::Index output_dim = data.targets.rows();
    const double n = double(data.size());

    SelectedHyperparams best;
    double best_total = -std::numeric_limits<double>::infinity();
    for (double ls : grid.lengthscale_scale) {
        const Eigen::VectorXd ell = grid.base_lengthscales * ls;
        const auto stack = build_stack(static_cast<int>(data.inputs.rows()), grid.num_features,
                                       ell, grid.stack_seed);
        const Eigen::MatrixXd phi = features(stack, data.inputs);
        const Eigen::MatrixXd gram = phi * phi.transpose();

        Eigen::VectorXd noise_var(output_dim), signal_var(output_dim);
        double total = 0.0;
        for (Eigen::Index i = 0; i < output_dim; ++i) {
            const Eigen::VectorXd phi_y = phi * data.targets.row(i).transpose();
            const double yty = data.targets.row(i).squaredNorm();
            double dim_best = -std::numeric_limits<double>::infinity();
            const auto& dim_noise = grid.noise_std_per_dim.empty()
                                        ? grid.noise_std
                                        : grid.noise_std_per_dim[static_cast<std::size_t>(i)];
            const auto& dim_signal = grid.signal_std_per_dim.empty()
                                         ? grid.signal_std
                                         : grid.signal_std_per_dim[static_cast<std::size_t>(i)];
            for (double ns : dim_noise)
                for (double ss : dim_signal) {
                    const double ev = evidence_one_dim(gram, phi_y, yty, n, grid.num_features,
                                                       ns * ns, ss * ss, static_cast<int>(i));
                    if (ev > dim_best) {
                        dim_best = ev;
                        noise_var[i] = ns * ns;
                        signal_var[i] = ss * ss;
                    }
                }
            total += dim_best;
        }
        if (total > best_total) {
            best_total = total;
            best.noise_var = noise_var;
            best.signal_var = signal_var;
            best.lengthscales = ell;
        }
    }
    return best;
}

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'M', 'B', 'L', 'G', 'M', '0', '1'};

void write_i64(std::ostream& os, std::int64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::int64_t read_i64(std::istream& is) {
    std::int64_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), sizeof v))
        throw IoError("checkpoint: truncated file");
    return v;
}

void write_doubles(std::ostream& os, const double* p, std::int64_t count) {
    write_i64(os, count);
    os.write(reinterpret_cast<const char*>(p), count * std::int64_t(sizeof(double)));
}

void read_doubles(std::istream& is, double* p, std::int64_t expected) {
    const std::int64_t count = read_i64(is);
    if (count != expected)
        throw IoError("checkpoint: array length " + std::to_string(count) + " != expected " +
                      std::to_string(expected));
    if (!is.read(reinterpret_cast<char*>(p), count * std::int64_t(sizeof(double))))
        throw IoError("checkpoint: truncated array");
}

}  // namespace

void save_checkpoint(const LgmModel& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("save_checkpoint: cannot open " + path);
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const auto& st = model.stack;
    write_i64(os, st.input_dim);
    write_i64(os, st.num_features);
    write_i64(os, st.padded_dim);
    write_i64(os, std::int64_t(st.seed));
    write_i64(os, model.output_dim());
    write_i64(os, model.num_samples);
    write_doubles(os, st.lengthscales.data(), st.lengthscales.size());
    write_i64(os, std::int64_t(st.blocks.size()));
    for (const auto& b : st.blocks) {
        write_doubles(os, b.sign.data(), b.sign.size());
        write_i64(os, std::int64_t(b.perm.size()));
        for (int idx : b.perm) write_i64(os, idx);
        write_doubles(os, b.gauss.data(), b.gauss.size());
        write_doubles(os, b.scale.data(), b.scale.size());
    }
    write_doubles(os, st.phase.data(), st.phase.size());
    write_doubles(os, st.frequencies.data(), st.frequencies.size());
    write_doubles(os, model.weights.data(), model.weights.size());
    for (const auto& a : model.a_inv) write_doubles(os, a.data(), a.size());
    write_doubles(os, model.noise_var.data(), model.noise_var.size());
    write_doubles(os, model.signal_var.data(), model.signal_var.size());
    if (!os) throw IoError("save_checkpoint: write failed for " + path);
}

LgmModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("load_checkpoint: cannot open " + path);
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw IoError("load_checkpoint: bad header in " + path);

    LgmModel model;
    auto& st = model.stack;
    st.input_dim = static_cast<int>(read_i64(is));
    st.num_features = static_cast<int>(read_i64(is));
    st.padded_dim = static_cast<int>(read_i64(is));
    st.seed = static_cast<std::uint64_t>(read_i64(is));
    const int output_dim = static_cast<int>(read_i64(is));
    model.num_samples = read_i64(is);
    if (st.input_dim < 1 || st.num_features < 1 || st.padded_dim < 1 || output_dim < 1)
        throw IoError("load_checkpoint: corrupt dimensions in " + path);

    st.lengthscales.resize(st.input_dim);
    read_doubles(is, st.lengthscales.data(), st.input_dim);
    const std::int64_t num_blocks = read_i64(is);
    if (num_blocks < 1) throw IoError("load_checkpoint: corrupt block count in " + path);
    const int d = st.padded_dim;
    st.blocks.resize(static_cast<size_t>(num_blocks));
    for (auto& b : st.blocks) {
        b.sign.resize(d);
        read_doubles(is, b.sign.data(), d);
        if (read_i64(is) != d) throw IoError("load_checkpoint: corrupt permutation in " + path);
        b.perm.resize(static_cast<size_t>(d));
        for (int i = 0; i < d; ++i) b.perm[static_cast<size_t>(i)] = static_cast<int>(read_i64(is));
        b.gauss.resize(d);
        read_doubles(is, b.gauss.data(), d);
        b.scale.resize(d);
        read_doubles(is, b.scale.data(), d);
    }
    const int m = st.num_features;
    st.phase.resize(m);
    read_doubles(is, st.phase.data(), m);
    st.frequencies.resize(m, st.input_dim);
    read_doubles(is, st.frequencies.data(), st.frequencies.size());

    model.freq_sq = st.frequencies.array().square();
    model.weights.resize(m, output_dim);
    read_doubles(is, model.weights.data(), model.weights.size());
    model.a_inv.resize(static_cast<size_t>(output_dim));
    model.a_inv_flat.resize(Eigen::Index(m) * m, output_dim);
    for (int i = 0; i < output_dim; ++i) {
        model.a_inv[static_cast<size_t>(i)].resize(m, m);
        read_doubles(is, model.a_inv[static_cast<size_t>(i)].data(), Eigen::Index(m) * m);
        model.a_inv_flat.col(i) = Eigen::Map<const Eigen::VectorXd>(
            model.a_inv[static_cast<size_t>(i)].data(), Eigen::Index(m) * m);
    }
    model.noise_var.resize(output_dim);
    read_doubles(is, model.noise_var.data(), output_dim);
    model.signal_var.resize(output_dim);
    read_doubles(is, model.signal_var.data(), output_dim);
    return model;
}

}  // namespace safembrl
