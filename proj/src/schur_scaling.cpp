#include "psmom/schur_scaling.hpp"

#include <algorithm>
#include <map>
#include <string>

namespace psmom {

NearPattern near_pattern(const HMatrix& h) {
  const auto& tree = h.tree();
  NearPattern p;
  p.offsets.reserve(tree.num_leaves() + 1);
  for (int i = 0; i < tree.num_leaves(); ++i) p.offsets.push_back(tree.leaf(i).begin);
  p.offsets.push_back(tree.size());
  p.adjacency = near_adjacency(tree, h.partition());
  p.block = [&h](int i, int j) { return h.near_block(i, j); };
  return p;
}

NearPattern near_pattern(const MatrixXc& z, std::vector<int> offsets,
                         std::vector<std::vector<int>> adjacency) {
  NearPattern p;
  p.offsets = std::move(offsets);
  p.adjacency = std::move(adjacency);
  const auto& off = p.offsets;
  p.block = [&z, off](int i, int j) {
    return MatrixXc(z.block(off[i], off[j], off[i + 1] - off[i], off[j + 1] - off[j]));
  };
  return p;
}

long long ScalingSet::stored_entries() const {
  long long n = 0;
  for (const auto& s : steps) {
    for (const auto& a : s.right) n += a.size();
    for (const auto& a : s.left) n += a.size();
  }
  return n;
}

long long ScaledNearField::stored_entries() const {
  long long n = 0;
  for (const auto& b : blocks) n += b.size();
  return n;
}

void compute_scaling(const NearPattern& near, const std::vector<int>& order, bool symmetric,
                     ScalingSet& scaling, ScaledNearField& diagonal,
                     ScalingDiagnostics* diagnostics) {
  const int L = near.num_leaves();
  if (static_cast<int>(order.size()) != L) throw DimensionError("compute_scaling: order length");
  std::vector<int> pos(L, -1);
  for (int k = 0; k < L; ++k) {
    if (order[k] < 0 || order[k] >= L || pos[order[k]] >= 0) {
      throw std::invalid_argument("compute_scaling: order is not a permutation of the leaves");
    }
    pos[order[k]] = k;
  }

  // working copy of the near field; symmetric mode keeps only blocks whose
  // column is eliminated after the row
  std::vector<MatrixXc> diag(L);
  std::vector<std::map<int, MatrixXc>> rows(L);
  for (int i = 0; i < L; ++i) {
    diag[i] = near.block(i, i);
    if (diag[i].rows() != near.leaf_size(i) || diag[i].cols() != near.leaf_size(i)) {
      throw DimensionError("compute_scaling: diagonal block size mismatch at leaf " +
                           std::to_string(i));
    }
    for (int j : near.adjacency[i]) {
      if (j == i) continue;
      if (symmetric && pos[j] < pos[i]) continue;
      rows[i].emplace(j, near.block(i, j));
    }
  }

  ScalingDiagnostics diag_info;
  scaling = ScalingSet{near.offsets, {}, symmetric};
  diagonal = ScaledNearField{near.offsets, std::vector<MatrixXc>(L), {}};
  diagonal.factors.resize(L);

  for (int k = 0; k < L; ++k) {
    const int p = order[k];
    Eigen::PartialPivLU<MatrixXc> lu(diag[p]);
    const double scale = diag[p].norm();
    const double min_pivot =
        diag[p].size() ? lu.matrixLU().diagonal().cwiseAbs().minCoeff() : 0.0;
    if (!(min_pivot >= 1e-14 * scale) || scale == 0.0) {
      throw SingularMatrixError("compute_scaling: singular diagonal block at leaf " +
                                std::to_string(p));
    }

    std::vector<int> nbrs;
    for (const auto& [j, blk] : rows[p]) {
      if (pos[j] > pos[p]) nbrs.push_back(j);
    }
    std::sort(nbrs.begin(), nbrs.end(), [&](int a, int b) { return pos[a] < pos[b]; });

    ScalingStep step;
    step.leaf = p;
    step.neighbors = nbrs;
    for (int j : nbrs) step.right.push_back(-lu.solve(rows[p].at(j)));
    if (!symmetric) {
      for (int j : nbrs) {
        auto it = rows[j].find(p);
        if (it == rows[j].end()) {
          step.left.push_back(MatrixXc::Zero(near.leaf_size(j), near.leaf_size(p)));
        } else {
          // X = Z_jp Z_pp^{-1} = Z_jp U^{-1} L^{-1} P
          MatrixXc x = -it->second;
          lu.matrixLU().triangularView<Eigen::Upper>().solveInPlace<Eigen::OnTheRight>(x);
          lu.matrixLU().triangularView<Eigen::UnitLower>().solveInPlace<Eigen::OnTheRight>(x);
          step.left.push_back(x * lu.permutationP());
        }
      }
    }

    // Schur complement: Z_ij += Z_ip alpha_pj
    int updates = 0;
    for (size_t a = 0; a < nbrs.size(); ++a) {
      const int i = nbrs[a];
      MatrixXc z_ip;
      if (symmetric) {
        z_ip = rows[p].at(i).transpose();
      } else {
        auto it = rows[i].find(p);
        if (it == rows[i].end()) continue;
        z_ip = it->second;
      }
      for (size_t c = 0; c < nbrs.size(); ++c) {
        const int j = nbrs[c];
        if (symmetric && pos[j] < pos[i]) continue;
        MatrixXc* target = nullptr;
        if (i == j) {
          target = &diag[i];
        } else {
          auto [it, inserted] = rows[i].try_emplace(j);
          if (inserted) {
            it->second = MatrixXc::Zero(near.leaf_size(i), near.leaf_size(j));
            ++diag_info.fill_blocks;
            diag_info.fill_entries += it->second.size();
          }
          target = &it->second;
        }
        target->noalias() += z_ip * step.right[c];
        ++updates;
      }
    }
    diag_info.step_updates.push_back(updates);
    diag_info.total_updates += updates;

    rows[p].clear();
    if (!symmetric) {
      for (int j : nbrs) rows[j].erase(p);
    }
    diagonal.blocks[p] = std::move(diag[p]);
    diagonal.factors[p] = std::move(lu);
    if (k + 1 < L) scaling.steps.push_back(std::move(step));
  }
  diag_info.memory_entries = scaling.stored_entries() + diagonal.stored_entries();
  if (diagnostics) *diagnostics = std::move(diag_info);
}

namespace {

void check_length(const std::vector<int>& offsets, const VectorXc& v, const char* what) {
  if (offsets.empty() || v.size() != offsets.back()) {
    throw DimensionError(std::string(what) + ": vector length mismatch");
  }
}

}  // namespace

VectorXc apply_right(const ScalingSet& s, const VectorXc& v) {
  check_length(s.offsets, v, "apply_right");
  VectorXc x = v;
  const auto& off = s.offsets;
  for (auto step = s.steps.rbegin(); step != s.steps.rend(); ++step) {
    const int p = step->leaf;
    for (size_t c = 0; c < step->neighbors.size(); ++c) {
      const int j = step->neighbors[c];
      x.segment(off[p], off[p + 1] - off[p]).noalias() +=
          step->right[c] * x.segment(off[j], off[j + 1] - off[j]);
    }
  }
  return x;
}

VectorXc apply_left(const ScalingSet& s, const VectorXc& v) {
  check_length(s.offsets, v, "apply_left");
  VectorXc x = v;
  const auto& off = s.offsets;
  for (const auto& step : s.steps) {
    const int p = step.leaf;
    const auto xp = x.segment(off[p], off[p + 1] - off[p]).eval();
    for (size_t c = 0; c < step.neighbors.size(); ++c) {
      const int j = step.neighbors[c];
      auto xj = x.segment(off[j], off[j + 1] - off[j]);
      if (s.symmetric) {
        xj.noalias() += step.right[c].transpose() * xp;
      } else {
        xj.noalias() += step.left[c] * xp;
      }
    }
  }
  return x;
}

VectorXc apply_Dinv(const ScaledNearField& d, const VectorXc& v) {
  check_length(d.offsets, v, "apply_Dinv");
  VectorXc x(v.size());
  const auto& off = d.offsets;
  for (size_t i = 0; i + 1 < off.size(); ++i) {
    const int n = off[i + 1] - off[i];
    if (n == 0) continue;
    x.segment(off[i], n) = d.factors[i].solve(v.segment(off[i], n));
  }
  return x;
}

}  // namespace psmom
