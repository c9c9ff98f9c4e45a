#pragma once

#include <cmath>
#include <map>
#include <string>
#include <unordered_map>

#include "merc/params.hpp"
#include "merc/rng.hpp"
#include "merc/tape.hpp"

namespace merc {

template <typename T>
using GradMap = std::map<std::string, Mat<T>>;

/// Binds named parameters onto a tape as leaves, one leaf per name per tape.
/// Gradients flow either into the store's own gradient slots or, when an
/// external map is supplied (per-conversation accumulation under parallel
/// evaluation), into that map.
template <typename T>
class ParamBinder {
  public:
    ParamBinder(Tape<T>& tape, ParamStore<T>& store, GradMap<T>* external = nullptr)
        : tape_(tape), store_(store), external_(external) {}

    Var<T> operator()(const std::string& name) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        auto& entry = store_.at(name);
        Mat<T>* sink;
        if (external_) {
            auto [mit, inserted] = external_->try_emplace(name, entry.value.rows(), entry.value.cols());
            sink = &mit->second;
        } else {
            sink = &entry.grad;
        }
        Var<T> v = tape_.param(&entry.value, sink);
        cache_.emplace(name, v);
        return v;
    }

    Var<T> operator()(const std::string& name, int rows, int cols) {
        Var<T> v = (*this)(name);
        const Mat<T>& m = tape_.val(v);
        if (m.rows() != rows || m.cols() != cols)
            throw ShapeError("parameter " + name + " is " + m.shape_str() + ", expected " +
                             std::to_string(rows) + "x" + std::to_string(cols));
        return v;
    }

    ParamStore<T>& store() { return store_; }

  private:
    Tape<T>& tape_;
    ParamStore<T>& store_;
    GradMap<T>* external_;
    std::unordered_map<std::string, Var<T>> cache_;
};

/// Glorot-normal init; each parameter draws from its own name-keyed stream,
/// so adding or removing other parameters never shifts its values. The scale
/// factor shrinks bilinear attention-score weights (softmaxes then start
/// near uniform) and residual-branch outputs.
template <typename T>
void init_glorot(ParamStore<T>& ps, const std::string& name, int rows, int cols, uint64_t seed,
                 double scale = 1.0) {
    Mat<T>& m = ps.create(name, rows, cols);
    RngStream rng(RngPurpose::init, RngStream::derive(seed, name));
    const double sd = scale * std::sqrt(2.0 / static_cast<double>(rows + cols));
    for (size_t i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(sd * rng.normal());
}

template <typename T>
void init_const(ParamStore<T>& ps, const std::string& name, int rows, int cols, double value) {
    Mat<T>& m = ps.create(name, rows, cols);
    m.fill(static_cast<T>(value));
}

}  // namespace merc
