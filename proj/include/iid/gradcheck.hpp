#ifndef IID_GRADCHECK_HPP_
#define IID_GRADCHECK_HPP_

#include <cstdint>
#include <string>
#include <vector>

namespace iid {

struct GradcheckEntry {
  std::string name;
  double max_rel_err = 0.0;
  int coords_checked = 0;
  bool pass = false;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_err = 0.0;
  bool all_pass = false;
  double tolerance = 0.0;
  double seconds = 0.0;
};

// Central finite-difference verification of every differentiable operation,
// the 2-D domain filter (both arguments), the hinge and loss layers, and
// full toy pipelines, all evaluated at 64-bit precision.
// `corrupt_relu_adjoint` is the negative control: it deliberately scales
// the relu adjoint so the suite must fail.
GradcheckReport run_gradcheck(uint64_t seed, double tolerance = 1e-3,
                              bool corrupt_relu_adjoint = false);

}  // namespace iid

#endif  // IID_GRADCHECK_HPP_
