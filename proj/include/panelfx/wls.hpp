#pragma once

// Weighted least squares with robust covariance options.  The cross-product
// accumulations run through the kernels layer so results are identical across
// scalar and SIMD builds, and the summation order is fixed by the row order
// of the design (callers pass rows sorted by firm).

#include <cstdint>
#include <string>
#include <vector>

namespace panelfx {

// Column-major design: cols[j] has n entries.  Weights are importance
// weights (weight w behaves like replicating the row w times in X'WX).
struct Design {
    std::vector<std::string> names;           // one per column
    std::vector<std::vector<double>> cols;    // k columns, each length n
    std::vector<double> y;                    // length n
    std::vector<double> w;                    // length n; empty = all ones
    std::vector<std::uint32_t> cluster;       // length n or empty

    std::size_t n() const { return y.size(); }
    std::size_t k() const { return cols.size(); }
    void add_column(std::string name, std::vector<double> values);
};

enum class CovEstimator {
    classical,  // sigma^2 (X'WX)^-1
    hc1,        // heteroskedasticity-robust sandwich, n/(n-k) small-sample factor
    cr1,        // cluster-robust by Design::cluster with G/(G-1)*(n-1)/(n-k)
};

struct WlsFit {
    std::vector<double> beta;
    std::vector<double> se;
    std::vector<double> cov;  // k x k, row-major
    std::vector<double> residuals;
    double rss = 0.0;     // weighted residual sum of squares
    double sigma2 = 0.0;  // rss / (n - k)
    std::size_t n = 0;
    std::size_t k = 0;
    std::size_t n_clusters = 0;
};

// Throws ErrorKind::estimation on rank deficiency (naming the dependent
// columns) and ErrorKind::data on negative weights or size mismatches.
WlsFit wls_fit(const Design& design, CovEstimator cov);

// Rank check only (ignores y/w/cluster); throws the same naming error as
// wls_fit on linearly dependent columns.
void check_full_rank(const Design& design);

}  // namespace panelfx
