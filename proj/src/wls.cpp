#include "panelfx/wls.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "panelfx/error.hpp"
#include "panelfx/kernels.hpp"

namespace panelfx {

void Design::add_column(std::string name, std::vector<double> values) {
    names.push_back(std::move(name));
    cols.push_back(std::move(values));
}

namespace {

// X'WX via pairwise weighted dot products; the striped kernel order makes
// the result independent of the build's SIMD lane.
Eigen::MatrixXd gram(const Design& d, const std::vector<double>& w) {
    const std::size_t k = d.k();
    Eigen::MatrixXd a(k, k);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t l = j; l < k; ++l) {
            double v = kernels::weighted_dot(d.cols[j], d.cols[l], w);
            a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = v;
            a(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = v;
        }
    }
    return a;
}

[[noreturn]] void throw_rank_deficient(const Design& d,
                                       const Eigen::ColPivHouseholderQR<Eigen::MatrixXd>& qr) {
    const auto rank = qr.rank();
    const auto& perm = qr.colsPermutation().indices();
    std::string msg = "design matrix is rank deficient; dependent columns:";
    for (Eigen::Index pos = rank; pos < perm.size(); ++pos) {
        const auto j = static_cast<std::size_t>(perm(pos));
        msg += " " + (j < d.names.size() ? d.names[j] : "col" + std::to_string(j));
    }
    throw estimation_error(msg);
}

}  // namespace

void check_full_rank(const Design& d) {
    const std::size_t n = d.cols.empty() ? 0 : d.cols.front().size();
    std::vector<double> ones(n, 1.0);
    Design view;
    view.names = d.names;
    view.cols = d.cols;
    Eigen::MatrixXd a = gram(view, ones);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < static_cast<Eigen::Index>(d.k())) throw_rank_deficient(d, qr);
}

WlsFit wls_fit(const Design& d, CovEstimator cov) {
    const std::size_t n = d.n();
    const std::size_t k = d.k();
    if (k == 0) throw data_error("wls: empty design");
    for (const auto& col : d.cols)
        if (col.size() != n) throw data_error("wls: column length mismatch");
    if (!d.w.empty() && d.w.size() != n) throw data_error("wls: weight length mismatch");
    if (n <= k)
        throw estimation_error("wls: need more rows (" + std::to_string(n) +
                               ") than columns (" + std::to_string(k) + ")");
    std::vector<double> ones;
    const std::vector<double>* wp = &d.w;
    if (d.w.empty()) {
        ones.assign(n, 1.0);
        wp = &ones;
    }
    const std::vector<double>& w = *wp;
    for (double wi : w)
        if (!(wi >= 0.0) || !std::isfinite(wi))
            throw data_error("wls: weights must be finite and nonnegative");
    if (cov == CovEstimator::cr1 && d.cluster.size() != n)
        throw data_error("wls: cluster ids required for cluster-robust errors");

    Eigen::MatrixXd a = gram(d, w);
    Eigen::VectorXd b(static_cast<Eigen::Index>(k));
    for (std::size_t j = 0; j < k; ++j)
        b(static_cast<Eigen::Index>(j)) = kernels::weighted_dot(d.cols[j], d.y, w);

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < static_cast<Eigen::Index>(k)) throw_rank_deficient(d, qr);
    Eigen::VectorXd beta = qr.solve(b);
    Eigen::MatrixXd bread = qr.inverse();

    WlsFit fit;
    fit.n = n;
    fit.k = k;
    fit.beta.assign(beta.data(), beta.data() + k);
    fit.residuals.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        double yhat = 0.0;
        for (std::size_t j = 0; j < k; ++j) yhat += d.cols[j][i] * fit.beta[j];
        fit.residuals[i] = d.y[i] - yhat;
    }
    {
        std::vector<double> r2w(n);
        for (std::size_t i = 0; i < n; ++i) r2w[i] = fit.residuals[i];
        fit.rss = kernels::weighted_dot(r2w, r2w, w);
    }
    const double dof = static_cast<double>(n - k);
    fit.sigma2 = fit.rss / dof;

    Eigen::MatrixXd v;
    switch (cov) {
        case CovEstimator::classical:
            v = fit.sigma2 * bread;
            break;
        case CovEstimator::hc1: {
            // meat = sum_i (w_i e_i)^2 x_i x_i'
            std::vector<double> u(n);
            for (std::size_t i = 0; i < n; ++i) {
                double we = w[i] * fit.residuals[i];
                u[i] = we * we;
            }
            Eigen::MatrixXd meat(k, k);
            for (std::size_t j = 0; j < k; ++j)
                for (std::size_t l = j; l < k; ++l) {
                    double mv = kernels::weighted_dot(d.cols[j], d.cols[l], u);
                    meat(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l)) = mv;
                    meat(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) = mv;
                }
            const double adj = static_cast<double>(n) / dof;
            v = adj * bread * meat * bread;
            break;
        }
        case CovEstimator::cr1: {
            std::uint32_t max_cluster = 0;
            for (auto c : d.cluster) max_cluster = std::max(max_cluster, c);
            std::vector<Eigen::VectorXd> sums(
                static_cast<std::size_t>(max_cluster) + 1,
                Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k)));
            std::vector<std::uint8_t> seen(sums.size(), 0);
            for (std::size_t i = 0; i < n; ++i) {
                auto g = d.cluster[i];
                seen[g] = 1;
                double we = w[i] * fit.residuals[i];
                for (std::size_t j = 0; j < k; ++j)
                    sums[g](static_cast<Eigen::Index>(j)) += we * d.cols[j][i];
            }
            Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k),
                                                         static_cast<Eigen::Index>(k));
            std::size_t n_groups = 0;
            for (std::size_t g = 0; g < sums.size(); ++g) {
                if (!seen[g]) continue;
                ++n_groups;
                meat.noalias() += sums[g] * sums[g].transpose();
            }
            fit.n_clusters = n_groups;
            if (n_groups < 2)
                throw estimation_error("wls: cluster-robust errors need at least 2 clusters");
            const double gf = static_cast<double>(n_groups) / (n_groups - 1.0);
            const double nf = (static_cast<double>(n) - 1.0) / dof;
            v = gf * nf * bread * meat * bread;
            break;
        }
    }

    fit.cov.resize(k * k);
    fit.se.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        for (std::size_t l = 0; l < k; ++l)
            fit.cov[j * k + l] =
                v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(l));
        fit.se[j] = std::sqrt(std::max(
            0.0, v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))));
    }
    return fit;
}

}  // namespace panelfx
