#include "actconv/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace actconv {

TrainState make_train_state(const NetworkSpec& spec, const TrainConfig& cfg) {
    validate(cfg);
    TrainState st;
    st.rng = Rng(cfg.seed);
    st.net = instantiate_network(spec, st.rng);
    const std::vector<ParamRef> refs = learnable_params(st.net, nullptr);
    st.velocities.resize(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        st.velocities[i].assign(static_cast<std::size_t>(refs[i].size), 0.0);
    }
    return st;
}

TrainState train_state_from_checkpoint(const LoadedCheckpoint& ck) {
    TrainState st;
    st.net = ck.net;
    st.velocities = ck.velocities;
    st.history = ck.history;
    st.rng.set_state(ck.rng_state);
    st.iteration = ck.iteration;
    return st;
}

namespace {

std::string csv_real(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

TrainSummary train_loop(TrainState& state, const TrainConfig& cfg,
                        const Dataset& train, const Dataset& test) {
    validate(cfg);
    if (train.images.n() < 1 || test.images.n() < 1) {
        throw std::invalid_argument("train_loop: empty dataset");
    }
    Network& net = state.net;
    {
        const std::vector<ParamRef> refs = learnable_params(net, nullptr);
        if (refs.size() != state.velocities.size()) {
            throw std::invalid_argument("train_loop: velocity layout mismatch");
        }
        for (std::size_t i = 0; i < refs.size(); ++i) {
            if (static_cast<std::int64_t>(state.velocities[i].size()) !=
                refs[i].size) {
                throw std::invalid_argument(
                    "train_loop: velocity size mismatch at " + refs[i].name);
            }
        }
    }

    const std::int64_t N = train.images.n();
    const std::int64_t plane =
        train.images.c() * train.images.h() * train.images.w();

    std::ostringstream metrics;
    metrics << "iter,lr,train_loss,test_error\n";

    TrainSummary summary;
    NetGradients grads;
    Tensor batch(cfg.batch_size, train.images.c(), train.images.h(),
                 train.images.w());
    std::vector<int> labels(static_cast<std::size_t>(cfg.batch_size), 0);

    for (std::int64_t t = state.iteration; t < cfg.total_iters; ++t) {
        const double lr = lr_at(cfg, t);

        for (std::int64_t j = 0; j < cfg.batch_size; ++j) {
            const std::int64_t idx = state.rng.uniform_int(N);
            const double* src = train.images.data() + idx * plane;
            double* dst = batch.data() + j * plane;
            for (std::int64_t k = 0; k < plane; ++k) dst[k] = src[k];
            labels[static_cast<std::size_t>(j)] =
                train.labels[static_cast<std::size_t>(idx)];
        }
        const Tensor* x = &batch;
        Tensor augmented;
        if (cfg.augment) {
            augmented = augment_batch(batch, state.rng);
            x = &augmented;
        }

        const double loss = network_forward_backward(net, *x, labels, grads);
        if (!std::isfinite(loss)) throw NanLossError(t);
        summary.final_loss = loss;

        if (t % cfg.log_interval == 0 &&
            (state.history.entries.empty() ||
             state.history.entries.back().iter < t)) {
            state.history.entries.push_back({t, flatten_positions(net)});
        }

        const std::vector<ParamRef> refs = learnable_params(net, &grads);
        for (std::size_t r = 0; r < refs.size(); ++r) {
            sgd_nesterov_step(refs[r].value, refs[r].grad,
                              state.velocities[r].data(), refs[r].size, lr,
                              cfg.momentum,
                              refs[r].decay ? cfg.weight_decay : 0.0);
        }
        for (std::size_t i = 0; i < net.spec.layers.size(); ++i) {
            if (net.spec.layers[i].kind != LayerKind::acu) continue;
            position_step(net.params[i].acu, grads.nodes[i].d_pos, cfg, t);
        }

        if ((t + 1) % cfg.log_interval == 0) {
            const double err = evaluate_error(net, test.images, test.labels,
                                              cfg.eval_limit);
            metrics << (t + 1) << "," << csv_real(lr) << "," << csv_real(loss)
                    << "," << csv_real(err) << "\n";
            summary.final_test_error = err;
        }
        state.iteration = t + 1;
    }

    if (state.history.entries.empty() ||
        state.history.entries.back().iter < cfg.total_iters) {
        state.history.entries.push_back(
            {cfg.total_iters, flatten_positions(net)});
    }
    summary.final_test_error =
        evaluate_error(net, test.images, test.labels, cfg.eval_limit);
    summary.metrics_csv = metrics.str();
    return summary;
}

}  // namespace actconv
