#ifndef CR_TYPES_HPP
#define CR_TYPES_HPP

#include <Eigen/Dense>
#include <cstdint>

namespace cr {

// 64-bit reals everywhere; Eigen dense types are the only math carriers.
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

}  // namespace cr

#endif
