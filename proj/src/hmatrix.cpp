#include "psmom/hmatrix.hpp"

#include <chrono>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace psmom {

BlockSampler dense_sampler(const MatrixXc& z) {
  return [&z](std::span<const int> rows, std::span<const int> cols) {
    MatrixXc out(rows.size(), cols.size());
    for (size_t j = 0; j < cols.size(); ++j) {
      for (size_t i = 0; i < rows.size(); ++i) out(i, j) = z(rows[i], cols[j]);
    }
    return out;
  };
}

HMatrix::HMatrix(ClusterTree tree, BlockPartition partition, bool symmetric)
    : tree_(std::move(tree)), partition_(std::move(partition)), symmetric_(symmetric) {}

void HMatrix::index_near() {
  near_index_.clear();
  for (int k = 0; k < static_cast<int>(near_.size()); ++k) {
    near_index_[{tree_.node(near_[k].row).leaf_index, tree_.node(near_[k].col).leaf_index}] = k;
  }
}

const MatrixXc* HMatrix::find_near(int row_leaf, int col_leaf, bool* transposed) const {
  if (transposed) *transposed = false;
  auto it = near_index_.find({row_leaf, col_leaf});
  if (it != near_index_.end()) return &near_[it->second].data;
  if (symmetric_) {
    it = near_index_.find({col_leaf, row_leaf});
    if (it != near_index_.end()) {
      if (transposed) *transposed = true;
      return &near_[it->second].data;
    }
  }
  return nullptr;
}

MatrixXc HMatrix::near_block(int row_leaf, int col_leaf) const {
  bool mirrored = false;
  const MatrixXc* b = find_near(row_leaf, col_leaf, &mirrored);
  if (!b) {
    return MatrixXc::Zero(tree_.leaf(row_leaf).size(), tree_.leaf(col_leaf).size());
  }
  return mirrored ? MatrixXc(b->transpose()) : *b;
}

VectorXc HMatrix::near_matvec_tree(const VectorXc& x) const {
  if (x.size() != size()) throw DimensionError("HMatrix: vector length mismatch");
  VectorXc y = VectorXc::Zero(size());
  for (const auto& b : near_) {
    const auto& t = tree_.node(b.row);
    const auto& s = tree_.node(b.col);
    y.segment(t.begin, t.size()).noalias() += b.data * x.segment(s.begin, s.size());
    if (symmetric_ && b.row != b.col) {
      y.segment(s.begin, s.size()).noalias() += b.data.transpose() * x.segment(t.begin, t.size());
    }
    ++near_touches_;
  }
  return y;
}

VectorXc HMatrix::far_matvec_tree(const VectorXc& x) const {
  if (x.size() != size()) throw DimensionError("HMatrix: vector length mismatch");
  VectorXc y = VectorXc::Zero(size());
  VectorXc tmp;
  for (const auto& b : far_) {
    const auto& t = tree_.node(b.row);
    const auto& s = tree_.node(b.col);
    tmp.noalias() = b.factors.B * x.segment(s.begin, s.size());
    y.segment(t.begin, t.size()).noalias() += b.factors.A * tmp;
    ++far_touches_;
  }
  return y;
}

VectorXc HMatrix::matvec_tree(const VectorXc& x) const {
  return near_matvec_tree(x) + far_matvec_tree(x);
}

VectorXc HMatrix::matvec(const VectorXc& x) const {
  return tree_.to_original_order(matvec_tree(tree_.to_tree_order(x)));
}

MatrixXc HMatrix::materialize_far_tree() const {
  MatrixXc z = MatrixXc::Zero(size(), size());
  for (const auto& b : far_) {
    const auto& t = tree_.node(b.row);
    const auto& s = tree_.node(b.col);
    z.block(t.begin, s.begin, t.size(), s.size()) = b.factors.dense();
  }
  return z;
}

MatrixXc HMatrix::materialize_dense() const {
  MatrixXc zt = materialize_far_tree();
  for (const auto& b : near_) {
    const auto& t = tree_.node(b.row);
    const auto& s = tree_.node(b.col);
    zt.block(t.begin, s.begin, t.size(), s.size()) = b.data;
    if (symmetric_ && b.row != b.col) {
      zt.block(s.begin, t.begin, s.size(), t.size()) = b.data.transpose();
    }
  }
  const auto& perm = tree_.permutation();
  MatrixXc z(size(), size());
  for (int j = 0; j < size(); ++j) {
    for (int i = 0; i < size(); ++i) z(perm[i], perm[j]) = zt(i, j);
  }
  return z;
}

long long HMatrix::near_storage() const {
  long long n = 0;
  for (const auto& b : near_) n += b.data.size();
  return n;
}

long long HMatrix::far_storage() const {
  long long n = 0;
  for (const auto& b : far_) n += b.factors.A.size() + b.factors.B.size();
  return n;
}

double HMatrix::compression_ratio() const {
  const double n = size();
  return static_cast<double>(near_storage() + far_storage()) / (n * n);
}

HMatrix assemble_hmatrix(const BlockSampler& sampler, const ClusterTree& tree,
                         const BlockPartition& partition, const AcaConfig& cfg, bool symmetric,
                         AssemblyStats* stats) {
  if (!(cfg.tolerance > 0.0 && cfg.tolerance < 1.0)) {
    throw std::invalid_argument("AcaConfig: tolerance must lie in (0, 1)");
  }
  HMatrix h(tree, partition, symmetric);
  const auto& perm = tree.permutation();
  auto ids = [&](const ClusterNode& n) {
    return std::span<const int>(perm.data() + n.begin, n.size());
  };

  using Clock = std::chrono::steady_clock;
  auto start = Clock::now();
  for (const auto& b : partition.near) {
    const auto& t = tree.node(b.row);
    const auto& s = tree.node(b.col);
    if (symmetric && t.leaf_index < s.leaf_index) continue;
    h.near_.push_back({b.row, b.col, sampler(ids(t), ids(s))});
  }
  h.index_near();
  if (stats) stats->near_seconds = std::chrono::duration<double>(Clock::now() - start).count();

  start = Clock::now();
  for (const auto& b : partition.far) {
    const auto& t = tree.node(b.row);
    const auto& s = tree.node(b.col);
    const auto rows = ids(t);
    const auto cols = ids(s);
    auto row_fn = [&](int i) -> Eigen::RowVectorXcd {
      return sampler(rows.subspan(i, 1), cols).row(0);
    };
    auto col_fn = [&](int j) -> Eigen::VectorXcd { return sampler(rows, cols.subspan(j, 1)).col(0); };
    auto lr = aca_build<cplx>(row_fn, col_fn, t.size(), s.size(), cfg);
    if (lr.rank_capped) {
      h.warnings_.push_back("ACA rank cap " + std::to_string(lr.rank()) + " reached on block (" +
                            std::to_string(b.row) + ", " + std::to_string(b.col) + ")");
    }
    if (cfg.recompress) lr = recompress(lr, 0.5 * cfg.tolerance);
    h.far_.push_back({b.row, b.col, std::move(lr)});
  }
  if (stats) stats->far_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return h;
}

// Binary layout (native endianness and widths):
//   "PSMOMH01"  magic + version
//   i32 N, i32 symmetric, f64 wavelength, f64 leaf_factor, f64 eta
//   i32 #nodes, nodes {i32 begin, end, child0, child1, parent, level, f64 lo[3], hi[3]}
//   i32 permutation[N]
//   i32 #near, near {i32 row, col, matrix}
//   i32 #far, far {i32 row, col, i32 capped, matrix A, matrix B}
//   partition near pairs, partition far pairs: i32 count, {i32 row, col, level}
// where matrix = {i32 rows, cols, complex<f64> data column major}.
namespace {

constexpr char kMagic[8] = {'P', 'S', 'M', 'O', 'M', 'H', '0', '1'};

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("HMatrix::load: truncated file");
  return v;
}

void put_matrix(std::ostream& os, const MatrixXc& m) {
  put<std::int32_t>(os, static_cast<std::int32_t>(m.rows()));
  put<std::int32_t>(os, static_cast<std::int32_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()), sizeof(cplx) * m.size());
}

MatrixXc get_matrix(std::istream& is) {
  const int r = get<std::int32_t>(is), c = get<std::int32_t>(is);
  if (r < 0 || c < 0) throw std::runtime_error("HMatrix::load: corrupt block header");
  MatrixXc m(r, c);
  is.read(reinterpret_cast<char*>(m.data()), sizeof(cplx) * m.size());
  if (!is) throw std::runtime_error("HMatrix::load: truncated file");
  return m;
}

void put_pairs(std::ostream& os, const std::vector<BlockPair>& pairs) {
  put<std::int32_t>(os, static_cast<std::int32_t>(pairs.size()));
  for (const auto& p : pairs) {
    put<std::int32_t>(os, p.row);
    put<std::int32_t>(os, p.col);
    put<std::int32_t>(os, p.level);
  }
}

std::vector<BlockPair> get_pairs(std::istream& is) {
  std::vector<BlockPair> out(get<std::int32_t>(is));
  for (auto& p : out) {
    p.row = get<std::int32_t>(is);
    p.col = get<std::int32_t>(is);
    p.level = get<std::int32_t>(is);
  }
  return out;
}

}  // namespace

void HMatrix::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("HMatrix::save: cannot open " + path);
  os.write(kMagic, sizeof(kMagic));
  put<std::int32_t>(os, size());
  put<std::int32_t>(os, symmetric_ ? 1 : 0);
  put<double>(os, tree_.wavelength());
  put<double>(os, tree_.leaf_factor());
  put<double>(os, partition_.eta);
  put<std::int32_t>(os, static_cast<std::int32_t>(tree_.nodes().size()));
  for (const auto& n : tree_.nodes()) {
    for (int v : {n.begin, n.end, n.children[0], n.children[1], n.parent, n.level}) {
      put<std::int32_t>(os, v);
    }
    for (int k = 0; k < 3; ++k) put<double>(os, n.box.lo[k]);
    for (int k = 0; k < 3; ++k) put<double>(os, n.box.hi[k]);
  }
  for (int p : tree_.permutation()) put<std::int32_t>(os, p);
  put<std::int32_t>(os, static_cast<std::int32_t>(near_.size()));
  for (const auto& b : near_) {
    put<std::int32_t>(os, b.row);
    put<std::int32_t>(os, b.col);
    put_matrix(os, b.data);
  }
  put<std::int32_t>(os, static_cast<std::int32_t>(far_.size()));
  for (const auto& b : far_) {
    put<std::int32_t>(os, b.row);
    put<std::int32_t>(os, b.col);
    put<std::int32_t>(os, b.factors.rank_capped ? 1 : 0);
    put_matrix(os, b.factors.A);
    put_matrix(os, b.factors.B);
  }
  put_pairs(os, partition_.near);
  put_pairs(os, partition_.far);
  if (!os) throw std::runtime_error("HMatrix::save: write failed for " + path);
}

HMatrix HMatrix::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("HMatrix::load: cannot open " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("HMatrix::load: not an H-matrix dump (or unsupported version)");
  }
  const int n = get<std::int32_t>(is);
  const bool symmetric = get<std::int32_t>(is) != 0;
  const double wavelength = get<double>(is);
  const double leaf_factor = get<double>(is);
  const double eta = get<double>(is);
  std::vector<ClusterNode> nodes(get<std::int32_t>(is));
  for (auto& nd : nodes) {
    nd.begin = get<std::int32_t>(is);
    nd.end = get<std::int32_t>(is);
    nd.children[0] = get<std::int32_t>(is);
    nd.children[1] = get<std::int32_t>(is);
    nd.parent = get<std::int32_t>(is);
    nd.level = get<std::int32_t>(is);
    for (int k = 0; k < 3; ++k) nd.box.lo[k] = get<double>(is);
    for (int k = 0; k < 3; ++k) nd.box.hi[k] = get<double>(is);
  }
  std::vector<int> perm(n);
  for (auto& p : perm) p = get<std::int32_t>(is);
  HMatrix h(ClusterTree(std::move(nodes), std::move(perm), wavelength, leaf_factor), {}, symmetric);
  h.near_.resize(get<std::int32_t>(is));
  for (auto& b : h.near_) {
    b.row = get<std::int32_t>(is);
    b.col = get<std::int32_t>(is);
    b.data = get_matrix(is);
  }
  h.far_.resize(get<std::int32_t>(is));
  for (auto& b : h.far_) {
    b.row = get<std::int32_t>(is);
    b.col = get<std::int32_t>(is);
    b.factors.rank_capped = get<std::int32_t>(is) != 0;
    b.factors.A = get_matrix(is);
    b.factors.B = get_matrix(is);
  }
  h.partition_.eta = eta;
  h.partition_.near = get_pairs(is);
  h.partition_.far = get_pairs(is);
  h.index_near();
  return h;
}

}  // namespace psmom
