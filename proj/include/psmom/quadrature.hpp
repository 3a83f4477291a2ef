#pragma once

#include <vector>

#include "psmom/types.hpp"

namespace psmom {

/// Barycentric point (weights on vertices 0, 1, 2) with a weight normalised
/// so the weights of a rule sum to one; multiply by the triangle area.
struct TriangleQuadPoint {
  double b0, b1, b2;
  double weight;
};

using TriangleRule = std::vector<TriangleQuadPoint>;

/// Symmetric Gauss rules on the triangle: 1 (degree 1), 3 (degree 2),
/// 7 (degree 5) points.
const TriangleRule& triangle_rule(int points);

/// Collapsed (Duffy) tensor-product Gauss rule with n*n points; exact for
/// polynomials up to degree 2n-2. Used for reference integrals.
TriangleRule conical_product_rule(int n);

/// Rule applied to the four midpoint-subdivided children of the triangle.
TriangleRule subdivided_rule(const TriangleRule& base, int levels = 1);

/// Gauss-Legendre nodes/weights on [0, 1].
void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights);

}  // namespace psmom
