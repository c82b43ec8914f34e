#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dtts/nn/tape.hpp"
#include "dtts/rng.hpp"

namespace dtts::nn {

// One named trainable tensor plus its cross-step gradient accumulator and
// Adam moments. Lives outside any tape; tapes reference it by pointer.
template <typename Real>
struct Param {
  std::string name;
  Mat<Real> value;
  Mat<Real> grad;  // accumulated across batches until the optimizer steps
  Mat<Real> m, v;  // Adam moments

  void zero_grad() { grad.setZero(); }
};

enum class Init { kZero, kUniformFanIn, kNormal };

// Owns all parameters of a model in creation order. Initialization draws
// from a stream derived from (seed, creation index), so a given seed and
// construction order always produce identical weights.
template <typename Real>
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  Param<Real>& add(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                   Init init, double init_arg = 0.0) {
    require(by_name_.find(name) == by_name_.end(), "duplicate parameter name: " + name);
    auto p = std::make_unique<Param<Real>>();
    p->name = name;
    p->value.resize(rows, cols);
    RngStream rng = RngStream::derive(seed_, {0x7061726dULL, params_.size()});
    switch (init) {
      case Init::kZero:
        p->value.setZero();
        break;
      case Init::kUniformFanIn: {
        // fan_in defaults to cols (weights are stored out x in).
        double fan = init_arg > 0 ? init_arg : static_cast<double>(cols);
        double bound = 1.0 / std::sqrt(fan);
        for (Eigen::Index i = 0; i < rows; ++i)
          for (Eigen::Index j = 0; j < cols; ++j)
            p->value(i, j) = static_cast<Real>(rng.uniform(-bound, bound));
        break;
      }
      case Init::kNormal: {
        double sd = init_arg > 0 ? init_arg : 1.0;
        for (Eigen::Index i = 0; i < rows; ++i)
          for (Eigen::Index j = 0; j < cols; ++j)
            p->value(i, j) = static_cast<Real>(sd * rng.normal());
        break;
      }
    }
    p->grad = Mat<Real>::Zero(rows, cols);
    p->m = Mat<Real>::Zero(rows, cols);
    p->v = Mat<Real>::Zero(rows, cols);
    params_.push_back(std::move(p));
    by_name_[name] = params_.back().get();
    return *params_.back();
  }

  Param<Real>* find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  const std::vector<std::unique_ptr<Param<Real>>>& all() const { return params_; }

  size_t count() const { return params_.size(); }

  size_t scalar_count() const {
    size_t n = 0;
    for (const auto& p : params_) n += static_cast<size_t>(p->value.size());
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  // Merge one tape's parameter gradients into the store, in first-use order.
  void accumulate_from(Tape<Real>& tape, Real scale = Real(1)) {
    tape.for_each_param_grad([&](const void* key, const Mat<Real>& g) {
      if (g.size() == 0) return;
      auto* p = const_cast<Param<Real>*>(static_cast<const Param<Real>*>(key));
      p->grad += scale * g;
    });
  }

  uint64_t seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::vector<std::unique_ptr<Param<Real>>> params_;
  std::unordered_map<std::string, Param<Real>*> by_name_;
};

// Inject a parameter into a tape as a leaf node (memoized per tape).
template <typename Real>
Var<Real> use(Tape<Real>& tape, Param<Real>& p) {
  Var<Real> existing = tape.find_param(&p);
  if (existing.valid()) return existing;
  Var<Real> v = tape.leaf(p.value, true);
  tape.register_param(&p, v);
  return v;
}

}  // namespace dtts::nn
