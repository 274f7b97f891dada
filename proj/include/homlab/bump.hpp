/*
   Copyright 2026 The homogenize-lab authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "homlab/errors.hpp"

namespace homlab {

/// Compactly supported smooth bump
///   u0(x) = height exp(1 - 1/(1 - r^2)),  r = |x - center| / radius,
/// equal to `height` at the center and identically zero for r >= 1.
struct BumpFunction {
    Eigen::VectorXd center;
    double radius = 1.0;
    double height = 1.0;

    BumpFunction() = default;
    BumpFunction(Eigen::VectorXd c, double r, double h)
        : center(std::move(c)), radius(r), height(h) {
        if (!(radius > 0.0)) {
            throw ValidationError("BumpFunction: radius must be positive");
        }
    }

    double operator()(const Eigen::VectorXd& x) const {
        const double r2 = (x - center).squaredNorm() / (radius * radius);
        if (r2 >= 1.0) {
            return 0.0;
        }
        return height * std::exp(1.0 - 1.0 / (1.0 - r2));
    }

    double sup_norm() const { return std::abs(height); }

    /// Integral over R^d (d = center dimension), by radial midpoint
    /// quadrature; used to normalize weight functions.
    double integral(int n_quad = 4096) const {
        const int d = int(center.size());
        double acc = 0.0;
        for (int i = 0; i < n_quad; ++i) {
            const double r = (i + 0.5) / n_quad;
            const double shell =
                d == 1 ? 2.0 : (d == 2 ? 2.0 * M_PI * r : 4.0 * M_PI * r * r);
            acc += shell * std::exp(1.0 - 1.0 / (1.0 - r * r)) / n_quad;
        }
        return height * acc * std::pow(radius, d);
    }
};

}  // namespace homlab
