#include "semcom/network.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "semcom/errors.hpp"

namespace semcom {

void NetworkSpec::validate() const {
    if (layer_dims.size() < 2) throw config_error("network spec needs at least 2 layer dims");
    for (std::size_t d : layer_dims)
        if (d < 1) throw config_error("network spec: all layer dims must be >= 1");
    if (hidden_activations.size() != layer_dims.size() - 2)
        throw config_error("network spec: need one activation per hidden layer");
}

NetworkSpec make_mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          std::size_t output_dim, OutputHead head) {
    NetworkSpec spec;
    spec.layer_dims.push_back(input_dim);
    for (std::size_t h : hidden) spec.layer_dims.push_back(h);
    spec.layer_dims.push_back(output_dim);
    spec.hidden_activations.assign(hidden.size(), Activation::relu);
    spec.head = head;
    spec.validate();
    return spec;
}

Network Network::init(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    Network net;
    net.spec = spec;
    const std::size_t layers = spec.num_layers();
    net.weights.reserve(layers);
    net.biases.reserve(layers);
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t fan_in = spec.layer_dims[l];
        const std::size_t fan_out = spec.layer_dims[l + 1];
        const bool relu_out = l + 1 < layers && spec.hidden_activations[l] == Activation::relu;
        const double scale = std::sqrt((relu_out ? 2.0 : 1.0) / static_cast<double>(fan_in));
        RealMatrix w(fan_out, fan_in);
        for (double& v : w.data) v = scale * rng.next_normal();
        net.weights.push_back(std::move(w));
        net.biases.emplace_back(fan_out, 0.0);
    }
    return net;
}

std::size_t Network::param_count() const {
    std::size_t n = 0;
    for (const auto& w : weights) n += w.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

void Network::check_consistent() const {
    spec.validate();
    const std::size_t layers = spec.num_layers();
    if (weights.size() != layers || biases.size() != layers)
        throw config_error("network: layer count mismatch");
    for (std::size_t l = 0; l < layers; ++l) {
        if (weights[l].rows != spec.layer_dims[l + 1] || weights[l].cols != spec.layer_dims[l])
            throw config_error("network: weight shape mismatch");
        if (biases[l].size() != spec.layer_dims[l + 1])
            throw config_error("network: bias shape mismatch");
    }
}

std::vector<double> forward(const Network& net, std::span<const double> input,
                            ForwardCache* cache) {
    if (input.size() != net.input_dim())
        throw std::invalid_argument("forward: input length does not match first layer dim");
    const std::size_t layers = net.spec.num_layers();
    if (cache) {
        cache->layer_inputs.assign(layers, {});
        cache->pre.assign(layers, {});
    }
    std::vector<double> act(input.begin(), input.end());
    for (std::size_t l = 0; l < layers; ++l) {
        if (cache) cache->layer_inputs[l] = act;
        std::vector<double> pre = matvec(net.weights[l], act);
        for (std::size_t i = 0; i < pre.size(); ++i) pre[i] += net.biases[l][i];
        if (cache) cache->pre[l] = pre;
        if (l + 1 < layers && net.spec.hidden_activations[l] == Activation::relu)
            for (double& v : pre) v = std::max(v, 0.0);
        act = std::move(pre);
    }
    return act;
}

GradBundle GradBundle::zeros_like(const Network& net) {
    GradBundle g;
    for (const auto& w : net.weights) g.weight_grads.emplace_back(w.rows, w.cols);
    for (const auto& b : net.biases) g.bias_grads.emplace_back(b.size(), 0.0);
    g.input_grad.assign(net.input_dim(), 0.0);
    return g;
}

void GradBundle::accumulate(const GradBundle& other) {
    for (std::size_t l = 0; l < weight_grads.size(); ++l) {
        for (std::size_t i = 0; i < weight_grads[l].data.size(); ++i)
            weight_grads[l].data[i] += other.weight_grads[l].data[i];
        for (std::size_t i = 0; i < bias_grads[l].size(); ++i)
            bias_grads[l][i] += other.bias_grads[l][i];
    }
    for (std::size_t i = 0; i < input_grad.size(); ++i) input_grad[i] += other.input_grad[i];
}

void GradBundle::scale(double factor) {
    for (auto& w : weight_grads)
        for (double& v : w.data) v *= factor;
    for (auto& b : bias_grads)
        for (double& v : b) v *= factor;
    for (double& v : input_grad) v *= factor;
}

GradBundle backward(const Network& net, const ForwardCache& cache,
                    std::span<const double> dloss_doutput) {
    const std::size_t layers = net.spec.num_layers();
    if (cache.layer_inputs.size() != layers || cache.pre.size() != layers)
        throw std::invalid_argument("backward: cache does not match network layer count");
    for (std::size_t l = 0; l < layers; ++l) {
        if (cache.layer_inputs[l].size() != net.spec.layer_dims[l] ||
            cache.pre[l].size() != net.spec.layer_dims[l + 1])
            throw std::invalid_argument("backward: cache shapes do not match network");
    }
    if (dloss_doutput.size() != net.output_dim())
        throw std::invalid_argument("backward: dloss_doutput length mismatch");

    GradBundle g = GradBundle::zeros_like(net);
    std::vector<double> delta(dloss_doutput.begin(), dloss_doutput.end());
    for (std::size_t li = layers; li-- > 0;) {
        if (li + 1 < layers && net.spec.hidden_activations[li] == Activation::relu)
            for (std::size_t i = 0; i < delta.size(); ++i)
                if (cache.pre[li][i] <= 0.0) delta[i] = 0.0;
        const std::vector<double>& in = cache.layer_inputs[li];
        RealMatrix& wg = g.weight_grads[li];
        for (std::size_t i = 0; i < wg.rows; ++i) {
            double* row = wg.data.data() + i * wg.cols;
            for (std::size_t j = 0; j < wg.cols; ++j) row[j] = delta[i] * in[j];
        }
        g.bias_grads[li] = delta;
        delta = matvec_transposed(net.weights[li], delta);
    }
    g.input_grad = std::move(delta);
    return g;
}

std::vector<double> softmax(std::span<const double> logits) {
    const double peak = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - peak);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

CrossEntropyResult softmax_cross_entropy(std::span<const double> logits, std::size_t label) {
    if (logits.empty()) throw std::invalid_argument("softmax_cross_entropy: empty logits");
    if (label >= logits.size())
        throw std::invalid_argument("softmax_cross_entropy: label out of range");
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double v : logits) total += std::exp(v - peak);
    const double log_total = std::log(total);
    CrossEntropyResult res;
    res.loss = log_total - (logits[label] - peak);
    res.dlogits.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i)
        res.dlogits[i] = std::exp(logits[i] - peak - log_total) - (i == label ? 1.0 : 0.0);
    return res;
}

SgdState SgdState::zeros_like(const Network& net) {
    SgdState s;
    for (const auto& w : net.weights) s.weight_velocity.emplace_back(w.rows, w.cols);
    for (const auto& b : net.biases) s.bias_velocity.emplace_back(b.size(), 0.0);
    return s;
}

void sgd_step(Network& net, const GradBundle& grads, double lr, double momentum,
              SgdState& state) {
    if (net.frozen) throw std::logic_error("sgd_step: network is frozen");
    if (lr < 0.0) throw config_error("sgd_step: lr must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw config_error("sgd_step: momentum in [0,1)");
    if (grads.weight_grads.size() != net.weights.size())
        throw std::invalid_argument("sgd_step: grad shape mismatch");
    for (std::size_t l = 0; l < net.weights.size(); ++l) {
        auto& w = net.weights[l];
        auto& v = state.weight_velocity[l];
        const auto& gw = grads.weight_grads[l];
        if (gw.rows != w.rows || gw.cols != w.cols)
            throw std::invalid_argument("sgd_step: grad shape mismatch");
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            v.data[i] = momentum * v.data[i] + gw.data[i];
            w.data[i] -= lr * v.data[i];
        }
        auto& b = net.biases[l];
        auto& vb = state.bias_velocity[l];
        const auto& gb = grads.bias_grads[l];
        for (std::size_t i = 0; i < b.size(); ++i) {
            vb[i] = momentum * vb[i] + gb[i];
            b[i] -= lr * vb[i];
        }
    }
}

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double softplus_grad(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace semcom
