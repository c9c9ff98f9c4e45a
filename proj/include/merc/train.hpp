#pragma once

// Training loop and evaluation: conversation minibatches, a mean-over-
// utterances mixed coarse/fine objective with L2 regularization, Adam steps,
// deterministic shuffling and dropout streams. Batches may evaluate
// conversations in parallel; gradients are reduced in a fixed order so the
// result is identical at any thread count.

#include <cmath>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "merc/adam.hpp"
#include "merc/gradcheck.hpp"
#include "merc/kernels.hpp"
#include "merc/metrics.hpp"
#include "merc/model/model.hpp"

namespace merc {

/// Mixed cross-entropy sum for one conversation (forward only runs here; the
/// caller decides whether to backprop and with what normalization seed).
template <typename T>
Var<T> conv_mixed_ce(Tape<T>& t, ParamBinder<T>& P, const PreparedConv<T>& pc, const TrainConfig& cfg,
                     const ModelBinding& b, bool training, RngStream* drop_rng) {
    auto out = forward_model(t, P, pc, cfg, b, training, drop_rng);
    return mixed_ce_sum(t, out.fine_probs, pc.fine_labels, b.taxonomy, b.alpha);
}

struct EpochLog {
    int epoch = 0;
    double train_loss = 0;
};

template <typename T>
class Trainer {
  public:
    Trainer(TrainConfig cfg, const Dataset& train_set)
        : cfg_(std::move(cfg)),
          binding_(ModelBinding::from_dataset(cfg_, train_set)),
          params_(init_params<T>(cfg_, binding_)),
          opt_(cfg_.learning_rate),
          drop_stream_(RngPurpose::dropmessage, cfg_.seed),
          shuffle_stream_(RngPurpose::shuffle, cfg_.seed) {
        if (train_set.conversations.empty()) throw DataError("training set is empty");
        prepared_.reserve(train_set.conversations.size());
        for (const auto& c : train_set.conversations) prepared_.push_back(prepare_conversation<T>(c, binding_));
    }

    const TrainConfig& config() const { return cfg_; }
    const ModelBinding& binding() const { return binding_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }

    /// One pass over the training set; returns the utterance-weighted mean
    /// batch loss.
    double train_epoch(int epoch) {
        std::vector<int> order(prepared_.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_stream_.uniform_int(static_cast<uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }
        double loss_sum = 0;
        long utt_sum = 0;
        int batch_index = 0;
        for (size_t start = 0; start < order.size(); start += cfg_.batch_size, ++batch_index) {
            const size_t end = std::min(order.size(), start + cfg_.batch_size);
            std::vector<int> batch(order.begin() + start, order.begin() + end);
            long utts = 0;
            for (int ci : batch) utts += prepared_[ci].n();
            double loss;
            try {
                loss = batch_step(batch);
            } catch (const NumericError& e) {
                throw Error("training aborted at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch_index) + ": " + e.what());
            }
            if (!std::isfinite(loss))
                throw Error("training diverged: non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(batch_index));
            loss_sum += loss * static_cast<double>(utts);
            utt_sum += utts;
        }
        return loss_sum / static_cast<double>(utt_sum);
    }

    std::vector<EpochLog> train(std::ostream* log = nullptr) {
        std::vector<EpochLog> out;
        for (int e = 0; e < cfg_.epochs; ++e) {
            const double loss = train_epoch(e);
            out.push_back({e, loss});
            if (log) *log << "epoch " << e << " train_loss " << format_g17(loss) << "\n";
        }
        return out;
    }

    std::vector<int> predict(const PreparedConv<T>& pc) {
        Tape<T> t;
        ParamBinder<T> P(t, params_);
        auto out = forward_model(t, P, pc, cfg_, binding_, false, nullptr);
        return argmax_rows(t.val(out.fine_probs));
    }

    Metrics evaluate(const Dataset& ds) {
        std::vector<int> y_true, y_pred;
        for (const auto& conv : ds.conversations) {
            PreparedConv<T> pc = prepare_conversation<T>(conv, binding_);
            std::vector<int> pred = predict(pc);
            y_true.insert(y_true.end(), pc.fine_labels.begin(), pc.fine_labels.end());
            y_pred.insert(y_pred.end(), pred.begin(), pred.end());
        }
        return compute_metrics(y_true, y_pred, binding_.taxonomy.n_fine());
    }

  private:
    /// Gradient step over one batch; returns the batch loss
    /// (mean mixed CE over the batch's utterances + lambda * ||theta||^2).
    double batch_step(const std::vector<int>& batch) {
        long total_utts = 0;
        for (int ci : batch) total_utts += prepared_[ci].n();
        const double inv_total = 1.0 / static_cast<double>(total_utts);

        std::vector<uint64_t> drop_seeds(batch.size());
        for (auto& s : drop_seeds) s = drop_stream_.next_u64();

        params_.zero_grads();
        double ce_sum = 0;
        if (cfg_.threads > 1) {
            std::vector<GradMap<T>> grads(batch.size());
            std::vector<double> ce(batch.size(), 0.0);
            std::exception_ptr failure = nullptr;
#pragma omp parallel for schedule(dynamic, 1)
            for (int k = 0; k < static_cast<int>(batch.size()); ++k) {
                try {
                    Tape<T> t;
                    ParamBinder<T> P(t, params_, &grads[k]);
                    RngStream rng(RngPurpose::dropmessage, drop_seeds[k]);
                    Var<T> conv_ce = conv_mixed_ce(t, P, prepared_[batch[k]], cfg_, binding_, true, &rng);
                    ce[k] = static_cast<double>(t.backward(conv_ce, static_cast<T>(inv_total)));
                } catch (...) {
#pragma omp critical
                    if (!failure) failure = std::current_exception();
                }
            }
            if (failure) std::rethrow_exception(failure);
            for (size_t k = 0; k < batch.size(); ++k) {
                ce_sum += ce[k];
                for (auto& [name, g] : grads[k]) {
                    Mat<T>& dst = params_.at(name).grad;
                    for (size_t i = 0; i < g.size(); ++i) dst.data()[i] += g.data()[i];
                }
            }
        } else {
            for (size_t k = 0; k < batch.size(); ++k) {
                Tape<T> t;
                ParamBinder<T> P(t, params_);
                RngStream rng(RngPurpose::dropmessage, drop_seeds[k]);
                Var<T> conv_ce = conv_mixed_ce(t, P, prepared_[batch[k]], cfg_, binding_, true, &rng);
                ce_sum += static_cast<double>(t.backward(conv_ce, static_cast<T>(inv_total)));
            }
        }

        double loss = ce_sum * inv_total;
        if (cfg_.lambda > 0) {
            loss += cfg_.lambda * params_.l2_sq();
            const T two_lambda = static_cast<T>(2.0 * cfg_.lambda);
            for (auto& [name, e] : params_)
                for (size_t i = 0; i < e.value.size(); ++i) e.grad.data()[i] += two_lambda * e.value.data()[i];
        }
        opt_.step(params_);
        return loss;
    }

    TrainConfig cfg_;
    ModelBinding binding_;
    ParamStore<T> params_;
    Adam<T> opt_;
    std::vector<PreparedConv<T>> prepared_;
    RngStream drop_stream_;
    RngStream shuffle_stream_;
};

/// grad_check closure over the real training objective (regularizer
/// included, dropout disabled), evaluated on a fixed set of conversations.
struct ModelGradCheckClosure {
    const std::vector<PreparedConv<double>>* convs;
    const TrainConfig* cfg;
    const ModelBinding* binding;

    double loss(ParamStore<double>& ps) const {
        long total = 0;
        for (const auto& pc : *convs) total += pc.n();
        double ce = 0;
        for (const auto& pc : *convs) {
            Tape<double> t;
            ParamBinder<double> P(t, ps);
            ce += t.val(conv_mixed_ce(t, P, pc, *cfg, *binding, false, nullptr))(0, 0);
        }
        return ce / static_cast<double>(total) + cfg->lambda * ps.l2_sq();
    }

    double loss_and_grad(ParamStore<double>& ps) const {
        long total = 0;
        for (const auto& pc : *convs) total += pc.n();
        const double inv_total = 1.0 / static_cast<double>(total);
        double ce = 0;
        for (const auto& pc : *convs) {
            Tape<double> t;
            ParamBinder<double> P(t, ps);
            ce += t.backward(conv_mixed_ce(t, P, pc, *cfg, *binding, false, nullptr), inv_total);
        }
        if (cfg->lambda > 0)
            for (auto& [name, e] : ps)
                for (size_t i = 0; i < e.value.size(); ++i)
                    e.grad.data()[i] += 2.0 * cfg->lambda * e.value.data()[i];
        return ce * inv_total + cfg->lambda * ps.l2_sq();
    }
};

struct CellResult {
    std::string name;
    double weighted_f1 = 0;
    double accuracy = 0;
};

/// Trains one configuration from scratch and evaluates on the test set.
template <typename T>
CellResult train_and_score(const TrainConfig& cfg, const Dataset& train_set, const Dataset& test_set,
                           const std::string& name, std::ostream* log = nullptr) {
    Trainer<T> tr(cfg, train_set);
    tr.train(nullptr);
    Metrics m = tr.evaluate(test_set);
    CellResult r{name, m.weighted_f1, m.accuracy};
    if (log) *log << name << " weighted_f1 " << format_g17(m.weighted_f1) << " accuracy "
                  << format_g17(m.accuracy) << "\n";
    return r;
}

/// Module on/off grid plus the seven modality subsets, each trained from the
/// same seed.
template <typename T>
std::vector<CellResult> run_ablation(const TrainConfig& base, const Dataset& train_set, const Dataset& test_set,
                                     std::ostream* log = nullptr) {
    std::vector<CellResult> out;
    for (bool cam_on : {false, true}) {
        for (bool graph_on : {false, true}) {
            TrainConfig c = base;
            c.disable_cam = !cam_on;
            c.disable_graph = !graph_on;
            const std::string name = std::string("module cam=") + (cam_on ? "on" : "off") +
                                     " graph=" + (graph_on ? "on" : "off");
            out.push_back(train_and_score<T>(c, train_set, test_set, name, log));
        }
    }
    for (const char* mods : {"T", "A", "V", "TA", "AV", "TV", "TAV"}) {
        TrainConfig c = base;
        c.modalities = mods;
        out.push_back(train_and_score<T>(c, train_set, test_set, std::string("modality ") + mods, log));
    }
    return out;
}

/// Trains one run per grid point with the shared seed; returns
/// (alpha, weighted F1, accuracy) rows.
template <typename T>
std::vector<std::pair<double, CellResult>> sweep_alpha(const TrainConfig& base, const Dataset& train_set,
                                                       const Dataset& test_set, const std::vector<double>& grid,
                                                       std::ostream* log = nullptr) {
    std::vector<std::pair<double, CellResult>> out;
    for (double a : grid) {
        if (a < 0 || a > 1) throw ConfigError("alpha grid values must lie in [0,1]");
        TrainConfig c = base;
        c.alpha = a;
        out.emplace_back(a, train_and_score<T>(c, train_set, test_set, "alpha " + format_shortest(a), log));
    }
    return out;
}

}  // namespace merc
