#include "psmom/quadrature.hpp"

#include <array>
#include <cmath>

namespace psmom {

namespace {

TriangleRule make_rule_1() { return {{1.0 / 3, 1.0 / 3, 1.0 / 3, 1.0}}; }

TriangleRule make_rule_3() {
  const double a = 2.0 / 3, b = 1.0 / 6, w = 1.0 / 3;
  return {{a, b, b, w}, {b, a, b, w}, {b, b, a, w}};
}

TriangleRule make_rule_7() {
  const double a1 = 0.059715871789770, b1 = 0.470142064105115, w1 = 0.132394152788506;
  const double a2 = 0.797426985353087, b2 = 0.101286507323456, w2 = 0.125939180544827;
  return {{1.0 / 3, 1.0 / 3, 1.0 / 3, 0.225},
          {a1, b1, b1, w1}, {b1, a1, b1, w1}, {b1, b1, a1, w1},
          {a2, b2, b2, w2}, {b2, a2, b2, w2}, {b2, b2, a2, w2}};
}

}  // namespace

const TriangleRule& triangle_rule(int points) {
  static const TriangleRule r1 = make_rule_1();
  static const TriangleRule r3 = make_rule_3();
  static const TriangleRule r7 = make_rule_7();
  switch (points) {
    case 1: return r1;
    case 3: return r3;
    case 7: return r7;
    default: throw std::invalid_argument("triangle_rule: supported sizes are 1, 3, 7");
  }
}

void gauss_legendre(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = 0.5 * (1.0 - x);
    weights[i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
}

TriangleRule conical_product_rule(int n) {
  std::vector<double> x, w;
  gauss_legendre(n, x, w);
  TriangleRule rule;
  rule.reserve(n * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double s = x[i];
      const double t = x[j] * (1.0 - s);
      // reference triangle area 1/2 -> normalised weight 2 * jacobian
      rule.push_back({1.0 - s - t, s, t, 2.0 * w[i] * w[j] * (1.0 - s)});
    }
  }
  return rule;
}

TriangleRule subdivided_rule(const TriangleRule& base, int levels) {
  if (levels <= 0) return base;
  // children of the reference triangle in barycentric coordinates
  using B = std::array<double, 3>;
  const B v0{1, 0, 0}, v1{0, 1, 0}, v2{0, 0, 1};
  const B m01{0.5, 0.5, 0}, m12{0, 0.5, 0.5}, m20{0.5, 0, 0.5};
  const std::array<std::array<B, 3>, 4> children = {{{v0, m01, m20},
                                                     {m01, v1, m12},
                                                     {m20, m12, v2},
                                                     {m12, m20, m01}}};
  TriangleRule out;
  out.reserve(base.size() * 4);
  for (const auto& c : children) {
    for (const auto& q : base) {
      TriangleQuadPoint p{0, 0, 0, 0.25 * q.weight};
      for (int k = 0; k < 3; ++k) {
        const double bk = q.b0 * c[0][k] + q.b1 * c[1][k] + q.b2 * c[2][k];
        (k == 0 ? p.b0 : k == 1 ? p.b1 : p.b2) = bk;
      }
      out.push_back(p);
    }
  }
  return subdivided_rule(out, levels - 1);
}

}  // namespace psmom
