#ifndef MULVULN_PARAMS_HPP
#define MULVULN_PARAMS_HPP

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "mulvuln/tensor.hpp"

namespace mulvuln {

// A learnable tensor and its checkpoint name.
struct NamedParam {
  std::string name;
  Tensor tensor;
};

using ParamList = std::vector<NamedParam>;

inline Tensor normal_init(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = dist(rng);
  return Tensor::from(std::move(shape), std::move(values), true);
}

inline Tensor constant_init(Shape shape, double value) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), std::vector<double>(n, value), true);
}

}  // namespace mulvuln

#endif  // MULVULN_PARAMS_HPP
