#include "pdmd/net.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace pdmd {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian");

constexpr char kMagic[4] = {'P', 'D', 'M', 'D'};
constexpr std::uint32_t kVersion = 1;

inline Eigen::MatrixXd silu(const Eigen::MatrixXd& z) {
    return z.array() / (1.0 + (-z.array()).exp());
}

inline Eigen::MatrixXd silu_grad(const Eigen::MatrixXd& z) {
    const Eigen::ArrayXXd s = 1.0 / (1.0 + (-z.array()).exp());
    return s * (1.0 + z.array() * (1.0 - s));
}

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

PredictionKind parse_prediction_kind(const std::string& name) {
    if (name == "velocity") return PredictionKind::velocity;
    if (name == "sample") return PredictionKind::sample;
    throw std::invalid_argument("unknown prediction kind: " + name);
}

std::string prediction_kind_name(PredictionKind kind) {
    return kind == PredictionKind::velocity ? "velocity" : "sample";
}

TimeConditionedNet::TimeConditionedNet(const NetConfig& cfg, Rng& init_rng) {
    cfg_ = cfg;
    if (cfg.dim < 1) throw std::invalid_argument("net: dim must be >= 1");
    if (cfg.time_features < 2 || cfg.time_features % 2 != 0)
        throw std::invalid_argument("net: time_features must be even and >= 2");
    widths_.push_back(cfg.dim + cfg.time_features);
    for (int l = 0; l < cfg.hidden_layers; ++l) widths_.push_back(cfg.hidden);
    widths_.push_back(cfg.dim);

    const int half = cfg.time_features / 2;
    for (int k = 0; k < half; ++k) {
        const double frac = half > 1 ? static_cast<double>(k) / (half - 1) : 0.0;
        freqs_.push_back(cfg.freq_min * std::pow(cfg.freq_max / cfg.freq_min, frac));
    }

    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        const int fan_in = widths_[l];
        const int fan_out = widths_[l + 1];
        const bool last = (l + 2 == widths_.size());
        const double std_dev = std::sqrt((last ? 1.0 : 2.0) / fan_in);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int i = 0; i < fan_out; ++i)
            for (int j = 0; j < fan_in; ++j) w(i, j) = std_dev * init_rng.normal();
        weights_.push_back(std::move(w));
        biases_.push_back(Eigen::VectorXd::Zero(fan_out));
    }
}

TimeConditionedNet TimeConditionedNet::zeros(const NetConfig& cfg) {
    Rng rng(0);
    TimeConditionedNet net(cfg, rng);
    for (auto& w : net.weights_) w.setZero();
    for (auto& b : net.biases_) b.setZero();
    return net;
}

std::int64_t TimeConditionedNet::param_count() const {
    std::int64_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
}

Eigen::MatrixXd TimeConditionedNet::embed(const SampleBatch& x, const TimeVector& t) const {
    if (x.cols() != cfg_.dim) throw std::invalid_argument("net: x has wrong dimension");
    if (t.size() != x.rows()) throw std::invalid_argument("net: t size mismatch");
    Eigen::MatrixXd input(x.rows(), widths_[0]);
    input.leftCols(cfg_.dim) = x;
    for (std::size_t k = 0; k < freqs_.size(); ++k) {
        const Eigen::ArrayXd phase = freqs_[k] * t.array();
        input.col(cfg_.dim + 2 * k) = phase.sin();
        input.col(cfg_.dim + 2 * k + 1) = phase.cos();
    }
    return input;
}

SampleBatch TimeConditionedNet::forward(const SampleBatch& x, const TimeVector& t) const {
    ForwardCache cache;
    return forward(x, t, cache);
}

SampleBatch TimeConditionedNet::forward(const SampleBatch& x, const TimeVector& t, ForwardCache& cache) const {
    const int layers = layer_count();
    cache.input = embed(x, t);
    cache.pre.resize(layers);
    cache.act.resize(layers - 1);
    const Eigen::MatrixXd* a = &cache.input;
    for (int l = 0; l < layers; ++l) {
        cache.pre[l].noalias() = (*a) * weights_[l].transpose();
        cache.pre[l].rowwise() += biases_[l].transpose();
        if (l + 1 < layers) {
            cache.act[l] = silu(cache.pre[l]);
            a = &cache.act[l];
        }
    }
    return cache.pre.back();
}

SampleBatch TimeConditionedNet::backward(const ForwardCache& cache, const SampleBatch& upstream, Gradients& grads,
                                         bool accumulate, std::vector<Eigen::MatrixXd>* deltas) const {
    const int layers = layer_count();
    if (upstream.rows() != cache.input.rows() || upstream.cols() != cfg_.dim)
        throw std::invalid_argument("net: upstream shape mismatch");
    if (!accumulate) grads.set_zero();
    if (deltas) deltas->assign(layers, Eigen::MatrixXd());

    Eigen::MatrixXd delta = upstream;
    for (int l = layers - 1; l >= 0; --l) {
        const Eigen::MatrixXd& below = (l == 0) ? cache.input : cache.act[l - 1];
        grads.w[l].noalias() += delta.transpose() * below;
        grads.b[l].noalias() += delta.colwise().sum().transpose();
        if (deltas) (*deltas)[l] = delta;
        if (l > 0) {
            Eigen::MatrixXd da = delta * weights_[l];
            delta = da.cwiseProduct(silu_grad(cache.pre[l - 1]));
        } else {
            delta = delta * weights_[l];  // gradient wrt the embedded input
        }
    }
    return delta.leftCols(cfg_.dim);
}

Gradients TimeConditionedNet::make_grads() const {
    Gradients g;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        g.w.push_back(Eigen::MatrixXd::Zero(weights_[l].rows(), weights_[l].cols()));
        g.b.push_back(Eigen::VectorXd::Zero(biases_[l].size()));
    }
    return g;
}

void Gradients::set_zero() {
    for (auto& m : w) m.setZero();
    for (auto& v : b) v.setZero();
}

double Gradients::squared_norm() const {
    double out = 0.0;
    for (const auto& m : w) out += m.squaredNorm();
    for (const auto& v : b) out += v.squaredNorm();
    return out;
}

bool Gradients::all_finite() const {
    for (const auto& m : w)
        if (!m.allFinite()) return false;
    for (const auto& v : b)
        if (!v.allFinite()) return false;
    return true;
}

void TimeConditionedNet::save(const std::filesystem::path& path) const {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + tmp.string());
        out.write(kMagic, 4);
        write_u32(out, kVersion);
        write_u32(out, static_cast<std::uint32_t>(layer_count()));
        for (int wdt : widths_) write_u32(out, static_cast<std::uint32_t>(wdt));
        for (std::size_t l = 0; l < weights_.size(); ++l) {
            const auto& w = weights_[l];
            for (Eigen::Index i = 0; i < w.rows(); ++i)
                for (Eigen::Index j = 0; j < w.cols(); ++j) {
                    const double v = w(i, j);
                    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
                }
            const auto& b = biases_[l];
            out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(sizeof(double) * b.size()));
        }
        if (!out) throw std::runtime_error("checkpoint write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

TimeConditionedNet TimeConditionedNet::load(const std::filesystem::path& path, const NetConfig& like) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path.string());
    const std::uint32_t version = read_u32(in);
    if (version != kVersion) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t layers = read_u32(in);
    std::vector<int> widths(layers + 1);
    for (auto& wdt : widths) wdt = static_cast<int>(read_u32(in));

    TimeConditionedNet net;
    net.cfg_ = like;
    net.cfg_.dim = widths.back();
    net.cfg_.time_features = widths.front() - widths.back();
    net.cfg_.hidden_layers = static_cast<int>(layers) - 1;
    net.cfg_.hidden = layers > 1 ? widths[1] : widths[0];
    net.widths_ = widths;
    const int half = net.cfg_.time_features / 2;
    for (int k = 0; k < half; ++k) {
        const double frac = half > 1 ? static_cast<double>(k) / (half - 1) : 0.0;
        net.freqs_.push_back(like.freq_min * std::pow(like.freq_max / like.freq_min, frac));
    }
    for (std::uint32_t l = 0; l < layers; ++l) {
        Eigen::MatrixXd w(widths[l + 1], widths[l]);
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) {
                double v;
                in.read(reinterpret_cast<char*>(&v), sizeof(v));
                w(i, j) = v;
            }
        Eigen::VectorXd b(widths[l + 1]);
        in.read(reinterpret_cast<char*>(b.data()), static_cast<std::streamsize>(sizeof(double) * b.size()));
        net.weights_.push_back(std::move(w));
        net.biases_.push_back(std::move(b));
    }
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    return net;
}

std::vector<double> TimeConditionedNet::flat_params() const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(param_count()));
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        const auto& w = weights_[l];
        for (Eigen::Index i = 0; i < w.rows(); ++i)
            for (Eigen::Index j = 0; j < w.cols(); ++j) out.push_back(w(i, j));
        for (Eigen::Index i = 0; i < biases_[l].size(); ++i) out.push_back(biases_[l](i));
    }
    return out;
}

double grad_check(TimeConditionedNet& net, const SampleBatch& x, const TimeVector& t, Rng& rng,
                  int coords, double h) {
    ForwardCache cache;
    const SampleBatch upstream = rng.normal_matrix(x.rows(), x.cols());
    net.forward(x, t, cache);
    Gradients grads = net.make_grads();
    net.backward(cache, upstream, grads);

    double grad_scale = 0.0;
    for (const auto& m : grads.w) grad_scale = std::max(grad_scale, m.cwiseAbs().maxCoeff());
    for (const auto& v : grads.b) grad_scale = std::max(grad_scale, v.cwiseAbs().maxCoeff());

    const auto objective = [&]() { return (upstream.array() * net.forward(x, t).array()).sum(); };

    double worst = 0.0;
    const int layers = net.layer_count();
    for (int c = 0; c < coords; ++c) {
        const int l = rng.uniform_int(0, layers - 1);
        const bool bias = rng.uniform() < 0.1;
        double* p;
        double analytic;
        if (bias) {
            const int i = rng.uniform_int(0, static_cast<int>(net.biases()[l].size()) - 1);
            p = &net.biases_mut()[l](i);
            analytic = grads.b[l](i);
        } else {
            const int i = rng.uniform_int(0, static_cast<int>(net.weights()[l].rows()) - 1);
            const int j = rng.uniform_int(0, static_cast<int>(net.weights()[l].cols()) - 1);
            p = &net.weights_mut()[l](i, j);
            analytic = grads.w[l](i, j);
        }
        const double saved = *p;
        *p = saved + h;
        const double fp = objective();
        *p = saved - h;
        const double fm = objective();
        *p = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(fd) + std::abs(analytic), 0.01 * grad_scale, 1e-12});
        worst = std::max(worst, std::abs(fd - analytic) / denom);
    }
    return worst;
}

AdamW::AdamW(const TimeConditionedNet& net, AdamConfig cfg) : cfg_(cfg) {
    for (std::size_t l = 0; l < net.weights().size(); ++l) {
        mw_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
        vw_.push_back(Eigen::MatrixXd::Zero(net.weights()[l].rows(), net.weights()[l].cols()));
        mb_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
        vb_.push_back(Eigen::VectorXd::Zero(net.biases()[l].size()));
    }
}

void AdamW::step(TimeConditionedNet& net, const Gradients& grads) {
    if (!grads.all_finite()) {
        throw std::runtime_error("adam_step: non-finite gradient at optimizer step " +
                                 std::to_string(step_ + 1) + " (grad norm^2 = " +
                                 std::to_string(grads.squared_norm()) + ")");
    }
    step_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t l = 0; l < mw_.size(); ++l) {
        auto update = [&](auto& m, auto& v, const auto& g, auto& p) {
            m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
            v = cfg_.beta2 * v.array().matrix() + (1.0 - cfg_.beta2) * g.array().square().matrix();
            const auto mhat = m.array() / bc1;
            const auto vhat = v.array() / bc2;
            p.array() -= cfg_.lr * (mhat / (vhat.sqrt() + cfg_.eps) + cfg_.weight_decay * p.array());
        };
        update(mw_[l], vw_[l], grads.w[l], net.weights_mut()[l]);
        update(mb_[l], vb_[l], grads.b[l], net.biases_mut()[l]);
    }
}

}  // namespace pdmd
