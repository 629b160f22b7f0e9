#include "streamqc/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "streamqc/mathutil.hpp"
#include "streamqc/rng.hpp"

namespace streamqc {
namespace detect {

namespace {

std::vector<double> finite_values(const std::vector<double>& v) {
    std::vector<double> out;
    out.reserve(v.size());
    for (const double x : v) {
        if (std::isfinite(x)) out.push_back(x);
    }
    return out;
}

DetectionResult make_result(const std::string& id, std::size_t n) {
    DetectionResult r;
    r.detector_id = id;
    r.scores.assign(n, 0.0);
    r.flags.assign(n, 0);
    return r;
}

// centered rolling mean/std with truncated edges
void rolling_mean_std(const std::vector<double>& x, int half, std::vector<double>* mean,
                      std::vector<double>* stddev) {
    const std::size_t n = x.size();
    mean->assign(n, 0.0);
    stddev->assign(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= static_cast<std::size_t>(half) ? t - half : 0;
        const std::size_t hi = std::min(n - 1, t + static_cast<std::size_t>(half));
        double s = 0.0, s2 = 0.0;
        std::size_t cnt = 0;
        for (std::size_t i = lo; i <= hi; ++i) {
            if (!std::isfinite(x[i])) continue;
            s += x[i];
            s2 += x[i] * x[i];
            ++cnt;
        }
        if (cnt == 0) continue;
        const double m = s / static_cast<double>(cnt);
        (*mean)[t] = m;
        (*stddev)[t] = std::sqrt(std::max(0.0, s2 / static_cast<double>(cnt) - m * m));
    }
}

std::vector<double> rolling_median(const std::vector<double>& x, int half) {
    const std::size_t n = x.size();
    std::vector<double> out(n, kMissing);
    std::vector<double> buf;
    for (std::size_t t = 0; t < n; ++t) {
        const std::size_t lo = t >= static_cast<std::size_t>(half) ? t - half : 0;
        const std::size_t hi = std::min(n - 1, t + static_cast<std::size_t>(half));
        buf.clear();
        for (std::size_t i = lo; i <= hi; ++i) {
            if (std::isfinite(x[i])) buf.push_back(x[i]);
        }
        if (!buf.empty()) out[t] = median_of(buf);
    }
    return out;
}

}  // namespace

DetectionResult zscore_detect(const std::vector<double>& q, const std::vector<double>& h) {
    const std::size_t n = q.size();
    DetectionResult r = make_result("zscore", n);
    for (const auto* chan : {&q, &h}) {
        const auto vals = finite_values(*chan);
        if (vals.size() < 2) continue;
        const double m = mean_of(vals);
        const double s = population_std(vals);
        if (s <= 0.0) continue;  // zero-variance channel contributes no flags
        for (std::size_t t = 0; t < n; ++t) {
            if (!std::isfinite((*chan)[t])) continue;
            const double z = std::fabs((*chan)[t] - m) / s;
            r.scores[t] = std::max(r.scores[t], z);
        }
    }
    for (std::size_t t = 0; t < n; ++t) r.flags[t] = r.scores[t] > 3.0 ? 1 : 0;
    return r;
}

DetectionResult iqr_detect(const std::vector<double>& q, const std::vector<double>& h) {
    const std::size_t n = q.size();
    DetectionResult r = make_result("iqr", n);
    for (const auto* chan : {&q, &h}) {
        auto vals = finite_values(*chan);
        if (vals.size() < 2) continue;
        std::sort(vals.begin(), vals.end());
        const double q1 = quantile_sorted(vals, 0.25);
        const double q3 = quantile_sorted(vals, 0.75);
        const double iqr = q3 - q1;
        const double lo = q1 - 1.5 * iqr;
        const double hi = q3 + 1.5 * iqr;
        const double unit = std::max(iqr, 1e-12);
        for (std::size_t t = 0; t < n; ++t) {
            const double x = (*chan)[t];
            if (!std::isfinite(x)) continue;
            const double excess = std::max(lo - x, x - hi);  // negative inside the bracket
            r.scores[t] = std::max(r.scores[t], excess / unit);
        }
    }
    for (std::size_t t = 0; t < n; ++t) r.flags[t] = r.scores[t] > 0.0 ? 1 : 0;
    return r;
}

DetectionResult moving_avg_detect(const std::vector<double>& q, const std::vector<double>& h) {
    const std::size_t n = q.size();
    DetectionResult r = make_result("moving_avg", n);
    std::vector<double> mean, stddev;
    for (const auto* chan : {&q, &h}) {
        rolling_mean_std(*chan, 84, &mean, &stddev);
        for (std::size_t t = 0; t < n; ++t) {
            if (!std::isfinite((*chan)[t]) || stddev[t] <= 0.0) continue;
            const double ratio = std::fabs((*chan)[t] - mean[t]) / (3.0 * stddev[t]);
            r.scores[t] = std::max(r.scores[t], ratio);
        }
    }
    for (std::size_t t = 0; t < n; ++t) r.flags[t] = r.scores[t] > 1.0 ? 1 : 0;
    return r;
}

// ---------------------------------------------------------------------------
// Isolation forest
// ---------------------------------------------------------------------------

namespace {

struct IfNode {
    int feature = -1;       // -1 marks an external node
    double split = 0.0;
    int left = -1, right = -1;
    int size = 0;  // points reaching an external node
};

// average unsuccessful-search path length of a BST with n nodes
double c_factor(int n) {
    if (n <= 1) return 0.0;
    if (n == 2) return 1.0;
    const double nd = static_cast<double>(n);
    const double harmonic = std::log(nd - 1.0) + 0.5772156649015329;
    return 2.0 * harmonic - 2.0 * (nd - 1.0) / nd;
}

struct IfTree {
    std::vector<IfNode> nodes;

    int build(std::vector<std::array<double, 2>>& pts, std::vector<int>& idx, int lo, int hi,
              int depth, int max_depth, Rng& rng) {
        IfNode node;
        const int count = hi - lo;
        double mn[2], mx[2];
        for (int f = 0; f < 2; ++f) {
            mn[f] = 1e300;
            mx[f] = -1e300;
        }
        for (int i = lo; i < hi; ++i) {
            for (int f = 0; f < 2; ++f) {
                mn[f] = std::min(mn[f], pts[idx[i]][f]);
                mx[f] = std::max(mx[f], pts[idx[i]][f]);
            }
        }
        const bool splittable = mx[0] > mn[0] || mx[1] > mn[1];
        if (count <= 1 || depth >= max_depth || !splittable) {
            node.size = count;
            nodes.push_back(node);
            return static_cast<int>(nodes.size()) - 1;
        }
        int f = static_cast<int>(rng.uniform_int(0, 1));
        if (mx[f] <= mn[f]) f = 1 - f;
        const double split = rng.uniform(mn[f], mx[f]);
        int mid = lo;
        for (int i = lo; i < hi; ++i) {
            if (pts[idx[i]][f] < split) std::swap(idx[i], idx[mid++]);
        }
        if (mid == lo || mid == hi) {
            // degenerate split (all points on one side): stop here
            node.size = count;
            nodes.push_back(node);
            return static_cast<int>(nodes.size()) - 1;
        }
        node.feature = f;
        node.split = split;
        nodes.push_back(node);
        const int self = static_cast<int>(nodes.size()) - 1;
        const int left = build(pts, idx, lo, mid, depth + 1, max_depth, rng);
        const int right = build(pts, idx, mid, hi, depth + 1, max_depth, rng);
        nodes[self].left = left;
        nodes[self].right = right;
        return self;
    }

    double path_length(const std::array<double, 2>& p) const {
        int at = 0;
        double depth = 0.0;
        while (nodes[at].feature >= 0) {
            at = p[nodes[at].feature] < nodes[at].split ? nodes[at].left : nodes[at].right;
            depth += 1.0;
        }
        return depth + c_factor(nodes[at].size);
    }
};

std::vector<std::array<double, 2>> standardized_points(const std::vector<double>& q,
                                                       const std::vector<double>& h) {
    const std::size_t n = q.size();
    std::vector<std::array<double, 2>> pts(n, {0.0, 0.0});
    for (int c = 0; c < 2; ++c) {
        const auto& chan = c == 0 ? q : h;
        const auto vals = finite_values(chan);
        if (vals.empty()) continue;
        const double m = mean_of(vals);
        const double s = population_std(vals);
        for (std::size_t t = 0; t < n; ++t) {
            const double x = std::isfinite(chan[t]) ? chan[t] : m;
            pts[t][c] = s > 0.0 ? (x - m) / s : 0.0;
        }
    }
    return pts;
}

}  // namespace

DetectionResult isolation_forest_detect(const std::vector<double>& q,
                                        const std::vector<double>& h, std::uint64_t seed,
                                        const IsolationForestConfig& config) {
    const std::size_t n = q.size();
    if (n < 2) throw std::invalid_argument("isolation_forest_detect: need at least 2 points");
    DetectionResult r = make_result("isolation_forest", n);

    auto pts = standardized_points(q, h);
    const int psi = static_cast<int>(std::min<std::size_t>(config.subsample, n));
    const int max_depth = static_cast<int>(std::ceil(std::log2(std::max(2, psi))));
    Rng rng(seed);

    std::vector<double> avg_path(n, 0.0);
    std::vector<int> pool(n);
    std::iota(pool.begin(), pool.end(), 0);
    for (int t = 0; t < config.trees; ++t) {
        // subsample without replacement (partial Fisher-Yates)
        for (int i = 0; i < psi; ++i) {
            const int j =
                static_cast<int>(rng.uniform_int(i, static_cast<std::int64_t>(n) - 1));
            std::swap(pool[i], pool[j]);
        }
        std::vector<int> idx(pool.begin(), pool.begin() + psi);
        IfTree tree;
        tree.build(pts, idx, 0, psi, 0, max_depth, rng);
        for (std::size_t p = 0; p < n; ++p) avg_path[p] += tree.path_length(pts[p]);
    }
    const double norm = c_factor(psi);
    for (std::size_t p = 0; p < n; ++p) {
        const double e = avg_path[p] / static_cast<double>(config.trees);
        r.scores[p] = std::pow(2.0, -e / std::max(norm, 1e-12));
    }

    // top contamination fraction by (score desc, index asc)
    const std::size_t k = static_cast<std::size_t>(
        std::ceil(config.contamination * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return r.scores[a] > r.scores[b];
    });
    for (std::size_t i = 0; i < std::min(k, n); ++i) r.flags[order[i]] = 1;
    return r;
}

DetectionResult lof_detect(const std::vector<double>& q, const std::vector<double>& h, int k,
                           double threshold) {
    const std::size_t n = q.size();
    if (static_cast<std::size_t>(k) >= n) {
        throw std::invalid_argument("lof_detect: k must be smaller than the point count");
    }
    DetectionResult r = make_result("lof", n);
    const auto pts = standardized_points(q, h);

    auto dist = [&](std::size_t a, std::size_t b) {
        const double dx = pts[a][0] - pts[b][0];
        const double dy = pts[a][1] - pts[b][1];
        return std::sqrt(dx * dx + dy * dy);
    };

    std::vector<std::vector<std::size_t>> neighbors(n);
    std::vector<double> k_dist(n, 0.0);
    std::vector<std::pair<double, std::size_t>> buf;
    for (std::size_t i = 0; i < n; ++i) {
        buf.clear();
        buf.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) buf.emplace_back(dist(i, j), j);
        }
        std::sort(buf.begin(), buf.end());
        k_dist[i] = buf[static_cast<std::size_t>(k) - 1].first;
        // neighborhood includes distance ties at the k-distance
        for (const auto& [d, j] : buf) {
            if (d > k_dist[i]) break;
            neighbors[i].push_back(j);
        }
    }

    constexpr double kLrdCap = 1e12;
    std::vector<double> lrd(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (const std::size_t j : neighbors[i]) {
            sum += std::max(k_dist[j], dist(i, j));
        }
        lrd[i] = sum > 0.0 ? static_cast<double>(neighbors[i].size()) / sum : kLrdCap;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (const std::size_t j : neighbors[i]) sum += lrd[j];
        const double denom = lrd[i] * static_cast<double>(neighbors[i].size());
        r.scores[i] = denom > 0.0 ? sum / denom : 1.0;
        r.flags[i] = r.scores[i] > threshold ? 1 : 0;
    }
    return r;
}

DetectionResult stl_detect(const std::vector<double>& q, const std::vector<double>& h) {
    constexpr int kPeriod = 168;
    const std::size_t n = q.size();
    DetectionResult r = make_result("stl", n);

    auto periodic_mean = [&](const std::vector<double>& x) {
        std::vector<double> seasonal(kPeriod, 0.0);
        std::vector<int> counts(kPeriod, 0);
        for (std::size_t t = 0; t < x.size(); ++t) {
            if (!std::isfinite(x[t])) continue;
            seasonal[t % kPeriod] += x[t];
            counts[t % kPeriod] += 1;
        }
        for (int p = 0; p < kPeriod; ++p) {
            seasonal[p] = counts[p] > 0 ? seasonal[p] / counts[p] : 0.0;
        }
        return seasonal;
    };

    for (const auto* chan : {&q, &h}) {
        const auto& x = *chan;
        // pass 1
        std::vector<double> trend = rolling_median(x, 84);
        std::vector<double> detrended(n, kMissing);
        for (std::size_t t = 0; t < n; ++t) {
            if (std::isfinite(x[t]) && std::isfinite(trend[t])) detrended[t] = x[t] - trend[t];
        }
        std::vector<double> seasonal = periodic_mean(detrended);
        // pass 2: re-estimate the trend on the deseasonalized series
        std::vector<double> deseason(n, kMissing);
        for (std::size_t t = 0; t < n; ++t) {
            if (std::isfinite(x[t])) deseason[t] = x[t] - seasonal[t % kPeriod];
        }
        trend = rolling_median(deseason, 84);
        for (std::size_t t = 0; t < n; ++t) {
            if (std::isfinite(x[t]) && std::isfinite(trend[t])) detrended[t] = x[t] - trend[t];
        }
        seasonal = periodic_mean(detrended);

        std::vector<double> resid(n, kMissing);
        std::vector<double> resid_vals;
        for (std::size_t t = 0; t < n; ++t) {
            if (!std::isfinite(detrended[t])) continue;
            resid[t] = detrended[t] - seasonal[t % kPeriod];
            resid_vals.push_back(resid[t]);
        }
        if (resid_vals.size() < 2) continue;
        const double sd = population_std(resid_vals);
        if (sd <= 0.0) continue;
        for (std::size_t t = 0; t < n; ++t) {
            if (!std::isfinite(resid[t])) continue;
            r.scores[t] = std::max(r.scores[t], std::fabs(resid[t]) / (3.0 * sd));
        }
    }
    for (std::size_t t = 0; t < n; ++t) r.flags[t] = r.scores[t] > 1.0 ? 1 : 0;
    return r;
}

namespace {

struct WindowRating {
    bool ok = false;
    double log_a = 0.0, b = 0.0, h0 = 0.0, resid_std = 0.0;
};

// Plain log-linear OLS with the datum pinned just below the window minimum.
WindowRating window_rating_fit(const std::vector<double>& q, const std::vector<double>& h,
                               int trim_rounds = 0) {
    WindowRating fit;
    std::vector<std::size_t> idx;
    double min_h = 1e300;
    for (std::size_t t = 0; t < q.size(); ++t) {
        if (std::isfinite(q[t]) && std::isfinite(h[t]) && q[t] > 0.0) {
            idx.push_back(t);
            min_h = std::min(min_h, h[t]);
        }
    }
    if (idx.size() < 8) return fit;
    const double h0 = min_h - 0.01;

    auto run_ols = [&](const std::vector<std::size_t>& pts, double* log_a, double* b,
                       double* resid_std) {
        double sx = 0.0, sy = 0.0;
        for (const auto t : pts) {
            sx += std::log(h[t] - h0);
            sy += std::log(q[t]);
        }
        const double mx = sx / static_cast<double>(pts.size());
        const double my = sy / static_cast<double>(pts.size());
        double sxx = 0.0, sxy = 0.0;
        for (const auto t : pts) {
            const double dx = std::log(h[t] - h0) - mx;
            sxx += dx * dx;
            sxy += dx * (std::log(q[t]) - my);
        }
        if (sxx / static_cast<double>(pts.size()) < 1e-16) return false;
        *b = sxy / sxx;
        *log_a = my - *b * mx;
        double sse = 0.0;
        for (const auto t : pts) {
            const double rr = std::log(q[t]) - (*log_a + *b * std::log(h[t] - h0));
            sse += rr * rr;
        }
        *resid_std = std::sqrt(sse / static_cast<double>(pts.size()));
        return true;
    };

    double log_a, b, resid_std;
    if (!run_ols(idx, &log_a, &b, &resid_std)) return fit;
    for (int round = 0; round < trim_rounds; ++round) {
        std::vector<std::size_t> kept;
        for (const auto t : idx) {
            const double rr = std::log(q[t]) - (log_a + b * std::log(h[t] - h0));
            if (std::fabs(rr) <= 2.0 * resid_std || resid_std == 0.0) kept.push_back(t);
        }
        if (kept.size() < 8 || kept.size() == idx.size()) break;
        idx = std::move(kept);
        if (!run_ols(idx, &log_a, &b, &resid_std)) return fit;
    }
    fit.ok = true;
    fit.log_a = log_a;
    fit.b = b;
    fit.h0 = h0;
    fit.resid_std = resid_std;
    return fit;
}

}  // namespace

DetectionResult rating_residual_detect(const std::vector<double>& q,
                                       const std::vector<double>& h) {
    const std::size_t n = q.size();
    DetectionResult r = make_result("rating_curve", n);
    const WindowRating fit = window_rating_fit(q, h);
    if (!fit.ok) {
        r.note = "degenerate rating fit, no flags";
        return r;
    }
    if (fit.resid_std <= 0.0) return r;  // exact fit: nothing deviates
    for (std::size_t t = 0; t < n; ++t) {
        if (!std::isfinite(q[t]) || !std::isfinite(h[t]) || q[t] <= 0.0 || h[t] <= fit.h0) {
            continue;
        }
        const double resid = std::log(q[t]) - (fit.log_a + fit.b * std::log(h[t] - fit.h0));
        r.scores[t] = std::fabs(resid) / (3.0 * fit.resid_std);
        r.flags[t] = r.scores[t] > 1.0 ? 1 : 0;
    }
    return r;
}

DetectionResult rate_of_change_detect(const std::vector<double>& q,
                                      const std::vector<double>& h) {
    constexpr double kEps = 1e-8;
    const std::size_t n = q.size();
    DetectionResult r = make_result("rate_of_change", n);
    for (const auto* chan : {&q, &h}) {
        const auto& x = *chan;
        std::vector<double> changes(n, kMissing);
        std::vector<double> observed;
        for (std::size_t t = 1; t < n; ++t) {
            if (!std::isfinite(x[t]) || !std::isfinite(x[t - 1])) continue;
            changes[t] = std::fabs(x[t] - x[t - 1]) / std::max(std::fabs(x[t - 1]), kEps);
            observed.push_back(changes[t]);
        }
        if (observed.size() < 2) continue;
        const double theta = quantile_of(observed, 0.995);
        if (theta <= 0.0) continue;
        for (std::size_t t = 1; t < n; ++t) {
            if (std::isnan(changes[t])) continue;
            const double ratio = changes[t] / theta;
            // the pair (t-1, t) carries the change: both endpoints score
            r.scores[t] = std::max(r.scores[t], ratio);
            r.scores[t - 1] = std::max(r.scores[t - 1], ratio);
        }
    }
    for (std::size_t t = 0; t < n; ++t) r.flags[t] = r.scores[t] > 1.0 ? 1 : 0;
    return r;
}

DetectionResult persistence_detect(const std::vector<double>& q, const std::vector<double>& h) {
    const std::size_t n = q.size();
    DetectionResult r = make_result("persistence", n);
    if (n < 2) return r;
    double q_abs_max = 0.0;
    for (const double v : q) {
        if (std::isfinite(v)) q_abs_max = std::max(q_abs_max, std::fabs(v));
    }
    const double tol_q = 0.001 * std::max(q_abs_max, 1.0);
    const double tol_h = 0.001;

    std::vector<std::uint8_t> small(n, 0);  // small[t]: step (t-1, t) is static
    for (std::size_t t = 1; t < n; ++t) {
        if (!std::isfinite(q[t]) || !std::isfinite(q[t - 1]) || !std::isfinite(h[t]) ||
            !std::isfinite(h[t - 1])) {
            continue;
        }
        small[t] = std::fabs(q[t] - q[t - 1]) < tol_q && std::fabs(h[t] - h[t - 1]) < tol_h;
    }
    std::size_t t = 1;
    while (t < n) {
        if (!small[t]) {
            ++t;
            continue;
        }
        std::size_t end = t;
        while (end + 1 < n && small[end + 1]) ++end;
        const std::size_t run_values = end - t + 2;  // covered timesteps incl. both ends
        for (std::size_t p = t - 1; p <= end; ++p) {
            r.scores[p] = std::max(r.scores[p], static_cast<double>(run_values));
        }
        t = end + 1;
    }
    for (std::size_t p = 0; p < n; ++p) r.flags[p] = r.scores[p] >= 6.0 ? 1 : 0;
    return r;
}

DetectionResult qh_consistency_detect(const std::vector<double>& q,
                                      const std::vector<double>& h) {
    const std::size_t n = q.size();
    DetectionResult r = make_result("qh_consistency", n);

    auto range_of = [](const std::vector<double>& x) {
        double lo = 1e300, hi = -1e300;
        for (const double v : x) {
            if (!std::isfinite(v)) continue;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        return hi > lo ? hi - lo : 0.0;
    };
    const double floor_q = 0.01 * range_of(q);
    const double floor_h = 0.01 * range_of(h);

    for (std::size_t t = 0; t < n; ++t) {
        // trailing 24 h correlation window
        const std::size_t lo = t >= 23 ? t - 23 : 0;
        std::vector<double> qs, hs;
        for (std::size_t i = lo; i <= t; ++i) {
            if (std::isfinite(q[i]) && std::isfinite(h[i])) {
                qs.push_back(q[i]);
                hs.push_back(h[i]);
            }
        }
        double score = 0.0;
        if (qs.size() >= 3) {
            const double corr = pearson(qs, hs);
            if (!std::isnan(corr) && corr < 0.2) score = 0.2 - corr;
        }
        if (t >= 6 && std::isfinite(q[t]) && std::isfinite(q[t - 6]) && std::isfinite(h[t]) &&
            std::isfinite(h[t - 6])) {
            const double dq = q[t] - q[t - 6];
            const double dh = h[t] - h[t - 6];
            if (dq * dh < 0.0 && std::fabs(dq) > floor_q && std::fabs(dh) > floor_h &&
                floor_q > 0.0 && floor_h > 0.0) {
                score += 1.0;
            }
        }
        r.scores[t] = score;
        r.flags[t] = score > 0.0 ? 1 : 0;
    }
    return r;
}

DetectionResult seasonal_envelope_detect(const std::vector<double>& q,
                                         const std::vector<double>& h, HourStamp start_hour,
                                         const norm::SiteStats& stats) {
    const std::size_t n = q.size();
    DetectionResult r = make_result("seasonal_envelope", n);
    for (std::size_t t = 0; t < n; ++t) {
        const int m = month_of_hour(start_hour + static_cast<HourStamp>(t)) - 1;
        auto exceed = [](double x, double p1, double p99) {
            if (!std::isfinite(x) || std::isnan(p1) || std::isnan(p99)) return 0.0;
            const double width = std::max(p99 - p1, 1e-12);
            return std::max({(p1 - x) / width, (x - p99) / width, 0.0});
        };
        const double eq = exceed(q[t], stats.monthly_p1_q[m], stats.monthly_p99_q[m]);
        const double eh = exceed(h[t], stats.monthly_p1_h[m], stats.monthly_p99_h[m]);
        r.scores[t] = std::max(eq, eh);
        r.flags[t] = r.scores[t] > 0.0 ? 1 : 0;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Reference reconstructor and detection features
// ---------------------------------------------------------------------------

void ReferenceReconstructor::reconstruct(const std::vector<double>& q,
                                         const std::vector<double>& h,
                                         std::vector<double>* q_hat,
                                         std::vector<double>* h_hat) const {
    const std::size_t n = q.size();
    if (finite_values(q).empty() || finite_values(h).empty()) {
        throw std::invalid_argument("reconstruct: all-missing channel");
    }
    const WindowRating fit = window_rating_fit(q, h, /*trim_rounds=*/2);
    const std::vector<double> q_med = rolling_median(q, 12);
    const std::vector<double> h_med = rolling_median(h, 12);

    q_hat->assign(n, kMissing);
    h_hat->assign(n, kMissing);
    for (std::size_t t = 0; t < n; ++t) {
        double q_pred = kMissing, h_pred = kMissing;
        if (fit.ok && std::isfinite(h[t]) && h[t] > fit.h0) {
            q_pred = std::exp(fit.log_a + fit.b * std::log(h[t] - fit.h0));
        }
        if (fit.ok && std::isfinite(q[t]) && q[t] > 0.0 && fit.b != 0.0) {
            h_pred = fit.h0 + std::exp((std::log(q[t]) - fit.log_a) / fit.b);
        }
        const double qm = q_med[t];
        const double hm = h_med[t];
        if (std::isfinite(q_pred) && std::isfinite(qm)) {
            (*q_hat)[t] = 0.5 * q_pred + 0.5 * qm;
        } else if (std::isfinite(qm)) {
            (*q_hat)[t] = qm;
        } else if (std::isfinite(q_pred)) {
            (*q_hat)[t] = q_pred;
        }
        if (std::isfinite(h_pred) && std::isfinite(hm)) {
            (*h_hat)[t] = 0.5 * h_pred + 0.5 * hm;
        } else if (std::isfinite(hm)) {
            (*h_hat)[t] = hm;
        } else if (std::isfinite(h_pred)) {
            (*h_hat)[t] = h_pred;
        }
    }
}

Eigen::MatrixXd extract_detection_features(const std::vector<double>& q,
                                           const std::vector<double>& h,
                                           const std::vector<double>& q_hat,
                                           const std::vector<double>& h_hat) {
    const std::size_t n = q.size();
    if (h.size() != n || q_hat.size() != n || h_hat.size() != n) {
        throw std::invalid_argument("extract_detection_features: length mismatch");
    }
    Eigen::MatrixXd feats = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                  kDetectionFeatureDim);

    auto val = [](double x) { return std::isfinite(x) ? x : 0.0; };
    std::vector<double> resid_q(n, 0.0), resid_h(n, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
        resid_q[t] = val(q[t]) - val(q_hat[t]);
        resid_h[t] = val(h[t]) - val(h_hat[t]);
    }

    std::vector<double> mean, stddev;
    std::vector<double> roll_q, roll_h, roll_rq, roll_rh;
    rolling_mean_std(q, 3, &mean, &roll_q);
    rolling_mean_std(h, 3, &mean, &roll_h);
    rolling_mean_std(resid_q, 3, &mean, &roll_rq);
    rolling_mean_std(resid_h, 3, &mean, &roll_rh);

    const WindowRating fit = window_rating_fit(q, h);

    for (std::size_t t = 0; t < n; ++t) {
        const Eigen::Index i = static_cast<Eigen::Index>(t);
        feats(i, 0) = std::fabs(resid_q[t]);
        feats(i, 1) = std::fabs(resid_h[t]);
        if (t + 1 < n) {
            feats(i, 2) = val(q[t + 1]) - val(q[t]);
            feats(i, 3) = val(h[t + 1]) - val(h[t]);
        }
        feats(i, 4) = roll_q[t];
        feats(i, 5) = roll_h[t];
        feats(i, 6) = roll_rq[t];
        feats(i, 7) = roll_rh[t];
        if (fit.ok && std::isfinite(q[t]) && std::isfinite(h[t]) && q[t] > 0.0 &&
            h[t] > fit.h0) {
            feats(i, 8) = std::log(q[t]) - (fit.log_a + fit.b * std::log(h[t] - fit.h0));
        }
        // rolling 7 h Pearson
        const std::size_t lo = t >= 3 ? t - 3 : 0;
        const std::size_t hi = std::min(n - 1, t + 3);
        std::vector<double> qs, hs;
        for (std::size_t p = lo; p <= hi; ++p) {
            if (std::isfinite(q[p]) && std::isfinite(h[p])) {
                qs.push_back(q[p]);
                hs.push_back(h[p]);
            }
        }
        const double corr = pearson(qs, hs);
        feats(i, 9) = std::isnan(corr) ? 0.0 : corr;
        feats(i, 10) = resid_q[t] * resid_h[t];
    }

    // robust standardization: (x - median) / (1.4826 * MAD), MAD floored
    for (int c = 0; c < kDetectionFeatureDim; ++c) {
        std::vector<double> col(n);
        for (std::size_t t = 0; t < n; ++t) col[t] = feats(static_cast<Eigen::Index>(t), c);
        const double med = median_of(col);
        const double mad = std::max(mad_of(col), 1e-6);
        for (std::size_t t = 0; t < n; ++t) {
            feats(static_cast<Eigen::Index>(t), c) = (col[t] - med) / (1.4826 * mad);
        }
    }
    return feats;
}

const std::vector<std::string>& baseline_detector_ids() {
    static const std::vector<std::string> ids = {
        "zscore",       "iqr",        "moving_avg",     "isolation_forest",
        "lof",          "stl",        "rating_curve",   "rate_of_change",
        "persistence",  "qh_consistency", "seasonal_envelope"};
    return ids;
}

DetectionResult run_baseline(const std::string& id, const std::vector<double>& q,
                             const std::vector<double>& h, HourStamp start_hour,
                             const norm::SiteStats& stats, std::uint64_t seed) {
    if (id == "zscore") return zscore_detect(q, h);
    if (id == "iqr") return iqr_detect(q, h);
    if (id == "moving_avg") return moving_avg_detect(q, h);
    if (id == "isolation_forest") return isolation_forest_detect(q, h, seed);
    if (id == "lof") return lof_detect(q, h);
    if (id == "stl") return stl_detect(q, h);
    if (id == "rating_curve") return rating_residual_detect(q, h);
    if (id == "rate_of_change") return rate_of_change_detect(q, h);
    if (id == "persistence") return persistence_detect(q, h);
    if (id == "qh_consistency") return qh_consistency_detect(q, h);
    if (id == "seasonal_envelope") return seasonal_envelope_detect(q, h, start_hour, stats);
    throw std::invalid_argument("unknown detector id: " + id);
}

}  // namespace detect
}  // namespace streamqc
