#pragma once

#include <span>
#include <vector>

#include "semcom/matrix.hpp"
#include "semcom/rng.hpp"

namespace semcom {

enum class Activation { relu, identity };
enum class OutputHead { linear_logits, feature };

struct NetworkSpec {
    // layer_dims = {input, hidden..., output}; at least two entries.
    std::vector<std::size_t> layer_dims;
    // One activation per hidden layer: size layer_dims.size() - 2.
    std::vector<Activation> hidden_activations;
    OutputHead head = OutputHead::linear_logits;

    std::size_t num_layers() const { return layer_dims.size() - 1; }
    void validate() const;
};

NetworkSpec make_mlp_spec(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                          std::size_t output_dim, OutputHead head);

// Plain fully connected stack. weights[l] has shape dims[l+1] x dims[l].
struct Network {
    NetworkSpec spec;
    std::vector<RealMatrix> weights;
    std::vector<std::vector<double>> biases;
    bool frozen = false;

    static Network init(const NetworkSpec& spec, Rng& rng);

    void freeze() { frozen = true; }
    std::size_t input_dim() const { return spec.layer_dims.front(); }
    std::size_t output_dim() const { return spec.layer_dims.back(); }
    std::size_t param_count() const;
    void check_consistent() const;
};

struct ForwardCache {
    // layer_inputs[l] is the input vector fed to layer l; pre[l] its
    // pre-activation output. Enough to run backward.
    std::vector<std::vector<double>> layer_inputs;
    std::vector<std::vector<double>> pre;
};

std::vector<double> forward(const Network& net, std::span<const double> input,
                            ForwardCache* cache = nullptr);

struct GradBundle {
    std::vector<RealMatrix> weight_grads;
    std::vector<std::vector<double>> bias_grads;
    std::vector<double> input_grad;

    static GradBundle zeros_like(const Network& net);
    void accumulate(const GradBundle& other);
    void scale(double factor);
};

GradBundle backward(const Network& net, const ForwardCache& cache,
                    std::span<const double> dloss_doutput);

struct CrossEntropyResult {
    double loss;
    std::vector<double> dlogits;  // softmax(logits) - one_hot(label)
};

CrossEntropyResult softmax_cross_entropy(std::span<const double> logits, std::size_t label);
std::vector<double> softmax(std::span<const double> logits);

struct SgdState {
    std::vector<RealMatrix> weight_velocity;
    std::vector<std::vector<double>> bias_velocity;

    static SgdState zeros_like(const Network& net);
};

// v <- momentum * v + g; theta <- theta - lr * v
void sgd_step(Network& net, const GradBundle& grads, double lr, double momentum,
              SgdState& state);

// Overflow-safe ln(1 + exp(x)); strictly positive for all finite x.
double softplus(double x);
// d/dx softplus(x), the logistic function.
double softplus_grad(double x);

}  // namespace semcom
