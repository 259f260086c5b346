#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pdmd/rng.hpp"

namespace pdmd {

enum class PredictionKind { velocity, sample };

PredictionKind parse_prediction_kind(const std::string& name);
std::string prediction_kind_name(PredictionKind kind);

struct NetConfig {
    int dim = 1;
    int hidden = 256;
    int hidden_layers = 3;
    int time_features = 16;  // even; sin/cos pairs at geometric frequencies
    double freq_min = 1.0;
    double freq_max = 1000.0;
    PredictionKind prediction = PredictionKind::velocity;
};

struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;

    void set_zero();
    double squared_norm() const;
    bool all_finite() const;
};

struct ForwardCache {
    Eigen::MatrixXd input;              // n x width0, x concatenated with time features
    std::vector<Eigen::MatrixXd> pre;   // pre-activations per layer
    std::vector<Eigen::MatrixXd> act;   // post-activations per hidden layer
};

// Small MLP taking (x, t). Hidden activation is SiLU, output is linear.
// Forward and backward are explicit; backward computes exact reverse-mode
// gradients of sum_i <upstream_i, forward(x_i, t_i)> plus the input gradient.
class TimeConditionedNet {
public:
    TimeConditionedNet(const NetConfig& cfg, Rng& init_rng);
    static TimeConditionedNet zeros(const NetConfig& cfg);

    const NetConfig& config() const { return cfg_; }
    PredictionKind prediction_kind() const { return cfg_.prediction; }
    const std::vector<int>& widths() const { return widths_; }
    int layer_count() const { return static_cast<int>(weights_.size()); }
    std::int64_t param_count() const;

    Eigen::MatrixXd embed(const SampleBatch& x, const TimeVector& t) const;

    SampleBatch forward(const SampleBatch& x, const TimeVector& t) const;
    SampleBatch forward(const SampleBatch& x, const TimeVector& t, ForwardCache& cache) const;

    // Returns d/dx of the scalar <upstream, output>. If `deltas` is non-null it
    // receives the per-layer backpropagated delta matrices (used by tests that
    // need per-sample gradient projections).
    SampleBatch backward(const ForwardCache& cache, const SampleBatch& upstream, Gradients& grads,
                         bool accumulate = false, std::vector<Eigen::MatrixXd>* deltas = nullptr) const;

    Gradients make_grads() const;

    const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
    const std::vector<Eigen::VectorXd>& biases() const { return biases_; }
    std::vector<Eigen::MatrixXd>& weights_mut() { return weights_; }
    std::vector<Eigen::VectorXd>& biases_mut() { return biases_; }

    // Checkpoint: "PDMD" magic, u32 version, u32 layer count, u32 widths,
    // then per layer the weight matrix (row-major) and bias as little-endian f64.
    void save(const std::filesystem::path& path) const;
    static TimeConditionedNet load(const std::filesystem::path& path, const NetConfig& like);

    std::vector<double> flat_params() const;

private:
    TimeConditionedNet() = default;

    NetConfig cfg_;
    std::vector<int> widths_;
    std::vector<double> freqs_;
    std::vector<Eigen::MatrixXd> weights_;  // (out x in)
    std::vector<Eigen::VectorXd> biases_;
};

// Central finite differences on a random parameter subset against backward;
// returns the worst relative error (relative to the coordinate magnitude or 1%
// of the gradient scale, whichever is larger).
double grad_check(TimeConditionedNet& net, const SampleBatch& x, const TimeVector& t, Rng& rng,
                  int coords = 200, double h = 1e-4);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.0;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// AdamW with bias correction and decoupled weight decay.
class AdamW {
public:
    AdamW(const TimeConditionedNet& net, AdamConfig cfg);

    void step(TimeConditionedNet& net, const Gradients& grads);
    std::int64_t step_count() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }

private:
    AdamConfig cfg_;
    std::int64_t step_ = 0;
    std::vector<Eigen::MatrixXd> mw_, vw_;
    std::vector<Eigen::VectorXd> mb_, vb_;
};

}  // namespace pdmd
