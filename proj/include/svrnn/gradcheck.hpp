#pragma once

#include "svrnn/nn.hpp"

#include <string>
#include <vector>

namespace svrnn {

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

// Central-difference checks over toy instances of every differentiable
// component: layers, activations, the LSTM cell, both distribution families,
// the labeled and unlabeled step bounds, a mixed sequence, and a two-object
// multi-entity loss. eps is the finite-difference step.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed,
                                               double eps = 1e-5);

double suite_max_error(const std::vector<GradCheckCase>& cases);

}  // namespace svrnn
