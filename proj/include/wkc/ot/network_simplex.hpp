#pragma once

#include <wkc/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstddef>
#include <limits>
#include <vector>

namespace wkc::ot {

struct TransportSolution {
    Eigen::MatrixXd flow;  ///< supply.size() x demand.size()
    double cost = 0.0;
    std::size_t pivots = 0;
};

namespace detail {

/// Transportation-problem network simplex. The basis is a spanning tree of
/// m + n - 1 cells over the bipartite supply/demand graph; degenerate basic
/// cells carry zero flow so the tree is always complete. Pricing is
/// most-negative reduced cost, falling back to Bland's rule while a run of
/// degenerate pivots lasts, which rules out cycling.
class TransportSimplex {
public:
    TransportSimplex(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand, const Eigen::MatrixXd& cost)
        : m_(static_cast<int>(supply.size())),
          n_(static_cast<int>(demand.size())),
          cost_(cost),
          flow_(Eigen::MatrixXd::Zero(supply.size(), demand.size())),
          basic_(static_cast<std::size_t>(m_) * static_cast<std::size_t>(n_), 0),
          adjacency_start_(static_cast<std::size_t>(m_ + n_) + 1),
          adjacency_(2 * static_cast<std::size_t>(m_ + n_)),
          potential_(static_cast<std::size_t>(m_ + n_)),
          parent_(static_cast<std::size_t>(m_ + n_)),
          parent_cell_(static_cast<std::size_t>(m_ + n_)),
          depth_(static_cast<std::size_t>(m_ + n_)),
          queue_(static_cast<std::size_t>(m_ + n_)) {
        northwest_corner(supply, demand);
        const double cmax = cost_.size() > 0 ? cost_.cwiseAbs().maxCoeff() : 0.0;
        tolerance_ = 1e-12 * std::max(cmax, std::numeric_limits<double>::min());
    }

    TransportSolution solve() {
        const std::size_t limit = 200 * static_cast<std::size_t>(m_ + n_) * static_cast<std::size_t>(std::max(m_, n_)) + 1000;
        std::size_t degenerate_run = 0;
        std::size_t pivots = 0;
        const std::size_t bland_after = static_cast<std::size_t>(std::max(50, m_ + n_));
        while (true) {
            build_tree();
            const bool bland = degenerate_run > bland_after;
            const auto entering = price(bland);
            if (entering.row < 0) {
                break;
            }
            const double theta = pivot(entering, bland);
            degenerate_run = theta > 0.0 ? 0 : degenerate_run + 1;
            if (++pivots > limit) {
                throw NumericError("network simplex exceeded its pivot limit");
            }
        }
        TransportSolution out;
        out.flow = flow_;
        out.cost = (flow_.array() * cost_.array()).sum();
        out.pivots = pivots;
        return out;
    }

private:
    struct Cell {
        int row = -1;
        int col = -1;
    };

    int col_node(int j) const { return m_ + j; }
    std::size_t cell_index(int i, int j) const { return static_cast<std::size_t>(i) * n_ + j; }

    void add_basic(int i, int j) {
        basis_.push_back({i, j});
        basic_[cell_index(i, j)] = 1;
    }

    void northwest_corner(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand) {
        std::vector<double> a(supply.data(), supply.data() + m_);
        std::vector<double> b(demand.data(), demand.data() + n_);
        basis_.reserve(static_cast<std::size_t>(m_ + n_ - 1));
        int i = 0;
        int j = 0;
        while (true) {
            const double x = std::max(0.0, std::min(a[i], b[j]));
            flow_(i, j) = x;
            add_basic(i, j);
            a[i] -= x;
            b[j] -= x;
            if (i == m_ - 1 && j == n_ - 1) {
                break;
            }
            if (i == m_ - 1) {
                ++j;
            } else if (j == n_ - 1) {
                ++i;
            } else if (a[i] <= b[j]) {
                ++i;
            } else {
                ++j;
            }
        }
    }

    // Rebuilds adjacency, BFS parents, depths and dual potentials (u_0 = 0).
    void build_tree() {
        const int nodes = m_ + n_;
        std::fill(adjacency_start_.begin(), adjacency_start_.end(), 0);
        for (const auto& c : basis_) {
            ++adjacency_start_[c.row + 1];
            ++adjacency_start_[col_node(c.col) + 1];
        }
        for (int v = 0; v < nodes; ++v) {
            adjacency_start_[v + 1] += adjacency_start_[v];
        }
        std::vector<int> fill(adjacency_start_.begin(), adjacency_start_.end() - 1);
        for (int k = 0; k < static_cast<int>(basis_.size()); ++k) {
            adjacency_[fill[basis_[k].row]++] = k;
            adjacency_[fill[col_node(basis_[k].col)]++] = k;
        }
        std::fill(depth_.begin(), depth_.end(), -1);
        int head = 0;
        int tail = 0;
        queue_[tail++] = 0;
        depth_[0] = 0;
        potential_[0] = 0.0;
        parent_[0] = -1;
        parent_cell_[0] = -1;
        while (head < tail) {
            const int v = queue_[head++];
            for (int e = adjacency_start_[v]; e < adjacency_start_[v + 1]; ++e) {
                const int k = adjacency_[e];
                const Cell c = basis_[k];
                const int w = v < m_ ? col_node(c.col) : c.row;
                if (depth_[w] >= 0) {
                    continue;
                }
                depth_[w] = depth_[v] + 1;
                parent_[w] = v;
                parent_cell_[w] = k;
                potential_[w] = cost_(c.row, c.col) - potential_[v];
                queue_[tail++] = w;
            }
        }
        if (tail != nodes) {
            throw NumericError("network simplex basis is not a spanning tree");
        }
    }

    Cell price(bool bland) const {
        Cell best;
        double best_value = -tolerance_;
        for (int i = 0; i < m_; ++i) {
            const double u = potential_[i];
            for (int j = 0; j < n_; ++j) {
                if (basic_[cell_index(i, j)]) {
                    continue;
                }
                const double r = cost_(i, j) - u - potential_[col_node(j)];
                if (r < best_value) {
                    best_value = r;
                    best = {i, j};
                    if (bland) {
                        return best;
                    }
                }
            }
        }
        return best;
    }

    // Pushes flow around the cycle closed by `entering`; returns the step size.
    double pivot(Cell entering, bool bland) {
        int a = entering.row;
        int b = col_node(entering.col);
        up_a_.clear();
        up_b_.clear();
        while (depth_[a] > depth_[b]) {
            up_a_.push_back(parent_cell_[a]);
            a = parent_[a];
        }
        while (depth_[b] > depth_[a]) {
            up_b_.push_back(parent_cell_[b]);
            b = parent_[b];
        }
        while (a != b) {
            up_a_.push_back(parent_cell_[a]);
            a = parent_[a];
            up_b_.push_back(parent_cell_[b]);
            b = parent_[b];
        }
        // Cycle order from the entering column back to the entering row:
        // signs alternate -, +, -, ... starting at the column side.
        cycle_.assign(up_b_.begin(), up_b_.end());
        cycle_.insert(cycle_.end(), up_a_.rbegin(), up_a_.rend());

        double theta = std::numeric_limits<double>::infinity();
        int leaving = -1;
        std::size_t leaving_index = 0;
        for (std::size_t p = 0; p < cycle_.size(); p += 2) {
            const Cell c = basis_[cycle_[p]];
            const double x = flow_(c.row, c.col);
            const std::size_t idx = cell_index(c.row, c.col);
            if (x < theta || (x == theta && bland && idx < leaving_index)) {
                theta = x;
                leaving = cycle_[p];
                leaving_index = idx;
            }
        }
        for (std::size_t p = 0; p < cycle_.size(); ++p) {
            const Cell c = basis_[cycle_[p]];
            if (p % 2 == 0) {
                flow_(c.row, c.col) -= theta;
            } else {
                flow_(c.row, c.col) += theta;
            }
        }
        const Cell out = basis_[leaving];
        flow_(out.row, out.col) = 0.0;
        flow_(entering.row, entering.col) = theta;
        basic_[cell_index(out.row, out.col)] = 0;
        basic_[cell_index(entering.row, entering.col)] = 1;
        basis_[leaving] = entering;
        return theta;
    }

    int m_;
    int n_;
    const Eigen::MatrixXd& cost_;
    Eigen::MatrixXd flow_;
    std::vector<char> basic_;
    std::vector<Cell> basis_;
    std::vector<int> adjacency_start_;
    std::vector<int> adjacency_;
    std::vector<double> potential_;
    std::vector<int> parent_;
    std::vector<int> parent_cell_;
    std::vector<int> depth_;
    std::vector<int> queue_;
    std::vector<int> up_a_;
    std::vector<int> up_b_;
    std::vector<int> cycle_;
    double tolerance_ = 0.0;
};

}  // namespace detail

/// Solves min <cost, flow> subject to flow >= 0, row sums = supply and
/// column sums = demand. Supply and demand must carry equal total mass (up to
/// rounding); any residual imbalance is absorbed by the last basic cell.
inline TransportSolution solve_transport(const Eigen::VectorXd& supply, const Eigen::VectorXd& demand,
                                         const Eigen::MatrixXd& cost) {
    if (supply.size() == 0 || demand.size() == 0 || cost.rows() != supply.size() || cost.cols() != demand.size()) {
        throw DataError("transport problem shape mismatch");
    }
    return detail::TransportSimplex(supply, demand, cost).solve();
}

}  // namespace wkc::ot
