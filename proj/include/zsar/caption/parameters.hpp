#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "zsar/caption/autograd.hpp"
#include "zsar/core/error.hpp"
#include "zsar/core/matrix.hpp"
#include "zsar/core/random.hpp"

namespace zsar {

struct TensorId {
  std::size_t index = 0;
};

// Named, ordered collection of weight matrices.
class ParameterSet {
 public:
  TensorId add(const std::string& name, Matrix value) {
    if (index_.contains(name)) throw ConfigError("duplicate parameter name: " + name);
    index_.emplace(name, values_.size());
    names_.push_back(name);
    values_.push_back(std::move(value));
    return {values_.size() - 1};
  }

  std::size_t size() const noexcept { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  Matrix& operator[](TensorId id) { return values_.at(id.index); }
  const Matrix& operator[](TensorId id) const { return values_.at(id.index); }
  Matrix& at(std::size_t i) { return values_.at(i); }
  const Matrix& at(std::size_t i) const { return values_.at(i); }

  std::optional<TensorId> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return TensorId{it->second};
  }

  Matrix& by_name(const std::string& name) {
    auto id = find(name);
    if (!id) throw ConfigError("unknown parameter: " + name);
    return values_[id->index];
  }
  const Matrix& by_name(const std::string& name) const { return const_cast<ParameterSet*>(this)->by_name(name); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& m : values_) n += m.size();
    return n;
  }

  std::vector<Matrix> zeros_like() const {
    std::vector<Matrix> out;
    out.reserve(values_.size());
    for (const auto& m : values_) out.emplace_back(m.rows(), m.cols());
    return out;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Matrix> values_;
  std::map<std::string, std::size_t> index_;
};

inline Matrix xavier_matrix(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (double& v : m.values()) v = uniform(rng, -a, a);
  return m;
}

// One forward pass: binds parameters onto a tape on first use and applies
// dropout when a generator is supplied.
class Forward {
 public:
  Forward(ag::Tape& tape, const ParameterSet& params, std::vector<Matrix>* grads = nullptr,
          Rng* dropout_rng = nullptr, double dropout = 0.0, std::vector<Matrix>* attention_log = nullptr)
      : tape_(tape),
        params_(params),
        grads_(grads),
        rng_(dropout_rng),
        dropout_(dropout),
        log_(attention_log),
        bound_(params.size()) {}

  ag::Tape& tape() noexcept { return tape_; }
  std::vector<Matrix>* attention_log() noexcept { return log_; }

  ag::Var param(TensorId id) {
    auto& slot = bound_.at(id.index);
    if (!slot) slot = tape_.parameter(params_[id], grads_ ? &(*grads_)[id.index] : nullptr);
    return *slot;
  }

  // Inverted dropout: kept units are scaled by 1/(1-p).
  ag::Var dropout(ag::Var x) {
    if (!rng_ || dropout_ <= 0.0) return x;
    Matrix mask(x.rows(), x.cols());
    const double keep = 1.0 - dropout_;
    for (double& m : mask.values()) m = uniform01(*rng_) < keep ? 1.0 / keep : 0.0;
    return ag::mask_multiply(x, std::move(mask));
  }

 private:
  ag::Tape& tape_;
  const ParameterSet& params_;
  std::vector<Matrix>* grads_;
  Rng* rng_;
  double dropout_;
  std::vector<Matrix>* log_;
  std::vector<std::optional<ag::Var>> bound_;
};

}  // namespace zsar
