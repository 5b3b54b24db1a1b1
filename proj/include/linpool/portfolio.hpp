#pragma once

// Global minimum variance portfolios and a sliding-window backtest.

#include "linpool/io.hpp"
#include "linpool/multitarget.hpp"

#include <map>

namespace linpool {

struct ReturnsPanel {
    std::vector<std::string> dates;  // date of each return row (the later price date)
    MatrixXd returns;                // T x p net returns
    std::vector<std::string> tickers;
    Index dropped_rows = 0;

    Index T() const { return returns.rows(); }
    Index p() const { return returns.cols(); }
};

namespace detail {

inline bool is_iso_date(const std::string& s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u})
        if (s[i] < '0' || s[i] > '9') return false;
    const int month = std::stoi(s.substr(5, 2));
    const int day = std::stoi(s.substr(8, 2));
    return month >= 1 && month <= 12 && day >= 1 && day <= 31;
}

}  // namespace detail

/// Prices CSV (date,TICKER1,...) to net returns. Rows with a missing or
/// nonpositive price are dropped and returns span the gap.
inline ReturnsPanel ingest_prices(const std::string& path) {
    const io::CsvTable t = io::read_csv(path);
    if (t.header.size() < 2) fail(ErrorKind::Data, path + ": expected header date,TICKER1,...");
    const std::size_t cols = t.header.size();
    ReturnsPanel panel;
    panel.tickers.assign(t.header.begin() + 1, t.header.end());

    std::vector<std::string> dates;
    std::vector<VectorXd> prices;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = path + ":" + std::to_string(t.line_numbers[i]);
        if (row.size() != cols)
            fail(ErrorKind::Data, where + ": expected " + std::to_string(cols) + " fields, got " + std::to_string(row.size()));
        if (!detail::is_iso_date(row[0])) fail(ErrorKind::Data, where + ": bad date '" + row[0] + "'");
        if (!dates.empty() && row[0] <= dates.back())
            fail(ErrorKind::Data, where + ": dates must be strictly increasing");
        VectorXd px(static_cast<Index>(cols - 1));
        bool ok = true;
        for (std::size_t j = 1; j < cols; ++j) {
            const std::string& f = row[j];
            const auto v = io::parse_number(f);
            if (!v) {
                const bool missing = f.empty() || f == "NA" || f == "NaN" || f == "nan" || f == "null";
                if (!missing) fail(ErrorKind::Data, where + ": non-numeric price '" + f + "'");
                ok = false;
            } else if (*v <= 0.0) {
                ok = false;
            } else {
                px(static_cast<Index>(j - 1)) = *v;
            }
        }
        if (!ok) {
            ++panel.dropped_rows;
            dates.push_back(row[0]);  // still counts for monotonicity
            prices.emplace_back();
            continue;
        }
        dates.push_back(row[0]);
        prices.push_back(std::move(px));
    }

    std::vector<std::size_t> kept;
    for (std::size_t i = 0; i < prices.size(); ++i)
        if (prices[i].size() > 0) kept.push_back(i);
    if (panel.dropped_rows > 0)
        warn("ingest: dropped " + std::to_string(panel.dropped_rows) + " price row(s) with missing or nonpositive values");
    if (kept.size() < 2) fail(ErrorKind::Data, path + ": need at least 2 complete price rows");

    panel.returns.resize(static_cast<Index>(kept.size() - 1), static_cast<Index>(cols - 1));
    for (std::size_t r = 1; r < kept.size(); ++r) {
        const VectorXd& prev = prices[kept[r - 1]];
        const VectorXd& cur = prices[kept[r]];
        panel.returns.row(static_cast<Index>(r - 1)) = (cur.array() / prev.array() - 1.0).matrix().transpose();
        panel.dates.push_back(dates[kept[r]]);
    }
    return panel;
}

/// Minimum-variance weights. Unconstrained: w = S^{-1}1 / 1^T S^{-1} 1.
/// Constrained: 0 <= w <= max_weight, 1^T w = 1.
inline VectorXd gmvp_weights(const MatrixXd& cov, bool constrained = false, double max_weight = 0.1,
                             bool ridge_on_singular = false) {
    const Index p = cov.rows();
    if (p == 0 || cov.cols() != p) fail(ErrorKind::Shape, "covariance must be square and non-empty");
    if (!cov.allFinite()) fail(ErrorKind::Data, "covariance contains non-finite entries");
    MatrixXd S = hermitian_part(cov);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(S, Eigen::EigenvaluesOnly);
    const double lmin = eig.eigenvalues().minCoeff();
    const double lmax = eig.eigenvalues().maxCoeff();
    if (lmax == 0.0 && lmin == 0.0) {
        // Every portfolio has zero variance.
        warn("gmvp: zero covariance, using equal weights");
        return VectorXd::Constant(p, 1.0 / static_cast<double>(p));
    }
    if (!(lmax > 0.0)) fail(ErrorKind::Conditioning, "covariance has no positive eigenvalue");
    if (lmin <= 1e-12 * lmax) {
        if (!ridge_on_singular) fail(ErrorKind::Conditioning, "covariance is singular");
        S.diagonal().array() += 1e-8 * S.trace() / static_cast<double>(p);
        warn("gmvp: singular covariance, adding ridge 1e-8 tr/p");
    }

    if (!constrained) {
        Eigen::LDLT<MatrixXd> ldlt(S);
        if (ldlt.info() != Eigen::Success) fail(ErrorKind::Conditioning, "covariance factorization failed");
        VectorXd w = ldlt.solve(VectorXd::Ones(p));
        const double total = w.sum();
        if (!(std::abs(total) > 0.0) || !std::isfinite(total)) fail(ErrorKind::Conditioning, "1^T S^{-1} 1 vanished");
        return w / total;
    }

    if (!(max_weight > 0.0) || max_weight * static_cast<double>(p) < 1.0 - 1e-12)
        fail(ErrorKind::Config, "constrained GMVP needs max_weight * p >= 1");
    QpProblem prob;
    // Scale to unit mean eigenvalue so the solver tolerance is meaningful.
    prob.B = S / (S.trace() / static_cast<double>(p));
    prob.c = VectorXd::Zero(p);
    prob.lower = VectorXd::Zero(p);
    prob.upper = VectorXd::Constant(p, max_weight);
    prob.sum = SumConstraint::Equal;
    prob.sum_value = 1.0;
    BoxEqOptions opt;
    opt.tolerance = 1e-10;
    return solve_box_eq(prob, opt).x;
}

// ---------------------------------------------------------------------------
// Backtest

struct BacktestConfig {
    Index window = 60;            // n
    Index rebalance = 20;
    std::string estimator = "linpool";
    bool constrained = false;
    double max_weight = 0.1;
    double annualization = std::sqrt(250.0);
    Index target_window = 40;
    std::vector<TargetKind> targets{TargetKind::SingleFactorMarket, TargetKind::ConstantCorrelation};
    Index surrogate_samples = 1000;
    std::uint64_t seed = 1;
    unsigned threads = 1;
};

/// Data handed to a covariance estimator for one rebalance date.
struct EstimationWindow {
    RealDataset data;     // last n rows
    RealDataset targets;  // last target_window rows
    Index index = 0;      // rebalance number
};

using CovarianceEstimator = std::function<MatrixXd(const EstimationWindow&, const BacktestConfig&, Rng&)>;

namespace detail {

inline std::vector<MatrixXd> backtest_targets(const EstimationWindow& w, const BacktestConfig& cfg) {
    std::vector<MatrixXd> out;
    for (TargetKind k : cfg.targets) out.push_back(build_target(w.targets, TargetSpec{k, {}}));
    return out;
}

inline MatrixXd linpool_window(const EstimationWindow& w, const BacktestConfig& cfg, Rng& rng, PoolingConfig pc) {
    MultiTargetConfig mc;
    mc.pooling = pc;
    mc.surrogate_samples = cfg.surrogate_samples;
    return multitarget_pool_matrices(w.data, backtest_targets(w, cfg), mc, rng).estimate;
}

}  // namespace detail

/// Registered estimators by name. Callers may add entries.
inline std::map<std::string, CovarianceEstimator>& estimator_registry() {
    static std::map<std::string, CovarianceEstimator> reg = {
        {"scm", [](const EstimationWindow& w, const BacktestConfig&, Rng&) { return sample_covariance(w.data); }},
        {"linpool",
         [](const EstimationWindow& w, const BacktestConfig& c, Rng& r) {
             return detail::linpool_window(w, c, r, PoolingConfig::linpool());
         }},
        {"linpool-c",
         [](const EstimationWindow& w, const BacktestConfig& c, Rng& r) {
             return detail::linpool_window(w, c, r, PoolingConfig::linpool_convex());
         }},
        {"bartz",
         [](const EstimationWindow& w, const BacktestConfig& c, Rng&) {
             return bartz_estimate(w.data, detail::backtest_targets(w, c)).estimate;
         }},
    };
    return reg;
}

struct WindowDiagnostics {
    std::string date;  // first out-of-sample date
    double min_weight = 0.0;
    double max_weight = 0.0;
    double weight_sum = 0.0;
    Index negative = 0;
};

struct BacktestReport {
    std::string estimator;
    Index window = 0;
    double realized_risk = 0.0;    // daily std of out-of-sample returns
    double annualized_risk = 0.0;
    Index num_windows = 0;
    std::vector<std::string> dates;
    std::vector<double> daily_returns;
    std::vector<WindowDiagnostics> diagnostics;
};

/// Sample standard deviation with divisor N - 1 (compensated sums).
inline double sample_std(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    CompensatedSum s;
    for (double v : x) s.add(v);
    const double mean = s.value() / static_cast<double>(x.size());
    CompensatedSum ss;
    for (double v : x) ss.add((v - mean) * (v - mean));
    return std::sqrt(ss.value() / static_cast<double>(x.size() - 1));
}

inline void validate(const BacktestConfig& cfg, const ReturnsPanel& panel) {
    if (cfg.window < 2) fail(ErrorKind::Config, "backtest window must be >= 2");
    if (cfg.rebalance < 1) fail(ErrorKind::Config, "rebalance period must be >= 1");
    if (cfg.target_window < 2) fail(ErrorKind::Config, "target window must be >= 2");
    if (cfg.surrogate_samples < 4) fail(ErrorKind::Config, "surrogate sample count must be >= 4");
    if (!(cfg.annualization > 0.0)) fail(ErrorKind::Config, "annualization factor must be positive");
    if (cfg.constrained && cfg.max_weight * static_cast<double>(panel.p()) < 1.0 - 1e-12)
        fail(ErrorKind::Config, "max_weight * p must be >= 1 for the constrained portfolio");
    if (!estimator_registry().count(cfg.estimator)) fail(ErrorKind::Config, "unknown estimator '" + cfg.estimator + "'");
    const Index start = std::max(cfg.window, cfg.target_window);
    if (panel.T() <= start + cfg.rebalance)
        fail(ErrorKind::Data, "panel has " + std::to_string(panel.T()) + " return rows; need more than " +
                                  std::to_string(start + cfg.rebalance));
    if (!panel.returns.allFinite()) fail(ErrorKind::Data, "returns contain non-finite values");
}

/// Rebalances at t = start, start + rebalance, ...; weights estimated from
/// rows [t - n, t - 1] are held for rows [t, t + rebalance - 1].
inline BacktestReport backtest(const ReturnsPanel& panel, const BacktestConfig& cfg) {
    validate(cfg, panel);
    const CovarianceEstimator est = estimator_registry().at(cfg.estimator);
    const Index start = std::max(cfg.window, cfg.target_window);
    std::vector<Index> starts;
    for (Index t = start; t < panel.T(); t += cfg.rebalance) starts.push_back(t);

    struct Slot {
        std::vector<double> returns;
        WindowDiagnostics diag;
    };
    std::vector<Slot> slots(starts.size());
    const bool plain_scm = cfg.estimator == "scm";
    parallel_for(starts.size(), cfg.threads, [&](std::size_t i) {
        const Index t = starts[i];
        EstimationWindow w{RealDataset(panel.returns.middleRows(t - cfg.window, cfg.window)),
                           RealDataset(panel.returns.middleRows(t - cfg.target_window, cfg.target_window)),
                           static_cast<Index>(i)};
        Rng rng(cfg.seed, static_cast<std::uint64_t>(i));
        // A window without variation has a zero covariance and no statistics to estimate.
        const bool flat = (w.data.X.rowwise() - w.data.X.colwise().mean()).cwiseAbs().maxCoeff() == 0.0;
        const MatrixXd cov = flat ? MatrixXd::Zero(panel.p(), panel.p()) : est(w, cfg, rng);
        const VectorXd wts = gmvp_weights(cov, cfg.constrained, cfg.max_weight, plain_scm);
        const Index end = std::min(t + cfg.rebalance, panel.T());
        Slot& s = slots[i];
        for (Index r = t; r < end; ++r) s.returns.push_back(panel.returns.row(r).dot(wts));
        s.diag = {panel.dates.empty() ? std::to_string(t) : panel.dates[static_cast<std::size_t>(t)], wts.minCoeff(),
                  wts.maxCoeff(), wts.sum(), static_cast<Index>((wts.array() < 0.0).count())};
    });

    BacktestReport rep;
    rep.estimator = cfg.estimator;
    rep.window = cfg.window;
    rep.num_windows = static_cast<Index>(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        for (std::size_t j = 0; j < slots[i].returns.size(); ++j) {
            const Index r = starts[i] + static_cast<Index>(j);
            rep.dates.push_back(panel.dates.empty() ? std::to_string(r) : panel.dates[static_cast<std::size_t>(r)]);
            rep.daily_returns.push_back(slots[i].returns[j]);
        }
        rep.diagnostics.push_back(slots[i].diag);
    }
    rep.realized_risk = sample_std(rep.daily_returns);
    rep.annualized_risk = rep.realized_risk * cfg.annualization;
    return rep;
}

inline std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string report_csv(const std::vector<BacktestReport>& reports) {
    std::string out = "estimator,n,realized_risk,annualized_risk,num_windows\n";
    for (const auto& r : reports)
        out += r.estimator + "," + std::to_string(r.window) + "," + fmt12(r.realized_risk) + "," +
               fmt12(r.annualized_risk) + "," + std::to_string(r.num_windows) + "\n";
    return out;
}

inline std::string daily_returns_csv(const BacktestReport& r) {
    std::string out = "date,return\n";
    for (std::size_t i = 0; i < r.daily_returns.size(); ++i) out += r.dates[i] + "," + fmt12(r.daily_returns[i]) + "\n";
    return out;
}

inline std::string diagnostics_csv(const BacktestReport& r) {
    std::string out = "date,min_weight,max_weight,weight_sum,negative_weights\n";
    for (const auto& d : r.diagnostics)
        out += d.date + "," + fmt12(d.min_weight) + "," + fmt12(d.max_weight) + "," + fmt12(d.weight_sum) + "," +
               std::to_string(d.negative) + "\n";
    return out;
}

/// Synthetic heavy-tailed daily returns from a one-factor structure with
/// Student-t innovations; used for demos and tests.
inline ReturnsPanel synthetic_panel(Index T, Index p, double nu, std::uint64_t seed) {
    Rng rng(seed, 0);
    VectorXd beta(p), resid(p);
    for (Index j = 0; j < p; ++j) {
        beta(j) = rng.uniform(0.5, 1.5);
        resid(j) = rng.uniform(0.01, 0.03);
    }
    const double market_sd = 0.01;
    MatrixXd cov = market_sd * market_sd * beta * beta.transpose();
    cov.diagonal().array() += resid.array().square();
    EllipticalLaw law(Family::StudentT, CovarianceModel::explicit_matrix(cov), nu);
    Rng draws = rng.split(1);
    ReturnsPanel panel;
    panel.returns = sample<double>(law, T, draws).X;
    for (Index j = 0; j < p; ++j) panel.tickers.push_back("A" + std::to_string(j + 1));
    return panel;
}

}  // namespace linpool
