#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "actconv/acu.hpp"
#include "actconv/refconv.hpp"
#include "actconv/rng.hpp"
#include "actconv/tensor.hpp"

namespace actconv {

enum class LayerKind {
    conv,
    acu,
    batchnorm,
    relu,
    global_avg_pool,
    softmax_xent,
    add_shortcut,
    projection_shortcut,
};

const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& s);

/// One node of the network graph. `in0` is the producing node index
/// (-1 = network input, -2 = previous node); add_shortcut reads a second
/// input from `in1`. projection_shortcut is a 1x1 convolution placed on a
/// skip path (it does not count as a layer the way the main path does).
struct LayerSpec {
    LayerKind kind = LayerKind::conv;
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 1;
    int stride = 1;
    int pad = 0;
    int dilation = 1;
    int groups = 1;
    std::string position_init = "grid3x3";  // acu nodes only
    int in0 = -2;
    int in1 = -9;
};

struct NetworkSpec {
    std::vector<LayerSpec> layers;
    int classes = 10;
    int in_channels = 3;
};

/// Structural checks: channel arithmetic along the graph, input indices
/// acyclic (always < node index), exactly one softmax_xent and it is last.
/// Throws std::invalid_argument on violation.
void validate(const NetworkSpec& spec);

std::string serialize_network_spec(const NetworkSpec& spec);
NetworkSpec parse_network_spec(const std::string& text);

/// The seven-convolution baseline column: 1x1 stem, three 3x3 pairs with
/// stride 2 at the 2nd and 3rd pair, a 1x1 classifier, batch norm + ReLU
/// after every convolution, then global average pooling and the loss
/// head. Channel counts are scaled by `width_multiplier` and rounded to
/// at least 4. With use_acu, every 3x3 convolution becomes an ACU on a
/// 3x3 grid initialization (the 1x1 layers stay plain).
NetworkSpec build_plain_network(double width_multiplier, int classes,
                                bool use_acu, int in_channels = 3);

enum class ResidualKind { basic, bottleneck };

/// Pre-activation residual column: 3x3 stem at width 16, three stages of
/// `blocks_per_stage` blocks at widths 16/32/64 (x4 output width for
/// bottleneck), stride 2 entering stages 2 and 3, projection shortcuts
/// exactly where dimensions change, then BN/ReLU, 1x1 classifier, global
/// average pooling, loss head. With use_acu every in-block 3x3 becomes an
/// ACU; the stem and projections stay plain.
NetworkSpec build_residual_network(ResidualKind kind, int blocks_per_stage,
                                   int classes, bool use_acu,
                                   int in_channels = 3);

/// Layer count by the usual convention: convolution layers on the main
/// path (conv + acu + the 1x1 classifier); projections, batch norm and
/// activations are not counted.
int count_conv_layers(const NetworkSpec& spec);

struct ParamCount {
    std::int64_t weights = 0;
    std::int64_t biases = 0;
    std::int64_t batchnorm = 0;
    std::int64_t positions = 0;
    std::int64_t total() const { return weights + biases + batchnorm + positions; }
};
ParamCount count_learnable_params(const NetworkSpec& spec);

/// Per-node learnable state of an instantiated network.
struct BnState {
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
};

struct NodeParams {
    ConvParams conv;  // conv / projection_shortcut nodes
    AcuLayer acu;     // acu nodes
    BnState bn;       // batchnorm nodes
};

struct Network {
    NetworkSpec spec;
    std::vector<NodeParams> params;  // parallel to spec.layers
};

/// Allocates and initializes parameters: He-normal convolution weights,
/// zero biases, unit-gamma batch norm, ACU layers from their declared
/// position initialization. Draw order is fixed (node order), so a seed
/// pins the whole network.
Network instantiate_network(const NetworkSpec& spec, Rng& rng);

struct NodeGrads {
    Tensor d_conv_w;
    std::vector<double> d_conv_b;
    Tensor d_acu_w;
    std::vector<double> d_acu_b;
    std::vector<std::vector<Point>> d_pos;
    std::vector<double> d_gamma, d_beta;
};

struct NetGradients {
    std::vector<NodeGrads> nodes;
};

/// Forward pass to logits. Training mode uses batch statistics in batch
/// norm (and updates running statistics); eval mode uses the running
/// statistics. Output is the value of the last node (softmax_xent passes
/// logits through).
Tensor network_forward(Network& net, const Tensor& x, bool training);

/// Forward-only scalar loss (mean softmax cross-entropy). Used by the
/// finite-difference oracle; shares no code with the backward pass.
double network_loss(Network& net, const Tensor& x,
                    const std::vector<int>& labels, bool training);

/// Full forward + backward. Returns the loss and fills `grads` with
/// gradients for every learnable tensor (including raw ACU position
/// gradients, pre-normalization). Always training mode.
double network_forward_backward(Network& net, const Tensor& x,
                                const std::vector<int>& labels,
                                NetGradients& grads);

/// Mean softmax cross-entropy of logits (N x classes x 1 x 1).
double softmax_xent_loss(const Tensor& logits, const std::vector<int>& labels);

/// Flat view of one learnable span, used by the optimizer and checkpoints.
struct ParamRef {
    std::string name;
    double* value = nullptr;
    double* grad = nullptr;
    std::int64_t size = 0;
    bool decay = false;  // weight decay applies (convolution weights only)
};

/// Enumerates weights/biases/batch-norm parameters in a fixed order.
/// Positions are excluded (they follow their own update rule). When
/// `grads` is given, the grad pointers are filled from it.
std::vector<ParamRef> learnable_params(Network& net, NetGradients* grads);

/// Top-1 error rate in percent over the first `limit` samples (0 = all),
/// evaluated in eval mode with mini-batches of `batch`. Ties resolve to
/// the lowest class index.
double evaluate_error(Network& net, const Tensor& images,
                      const std::vector<int>& labels, std::int64_t limit = 0,
                      std::int64_t batch = 256);

}  // namespace actconv
