#include "streamqc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "streamqc/mathutil.hpp"

namespace streamqc {
namespace eval {

namespace {

bool is_valid_at(const std::vector<std::uint8_t>& valid, std::size_t t) {
    return valid.empty() || valid[t] != 0;
}

}  // namespace

Prf1 prf1(const std::vector<std::uint8_t>& flags, const std::vector<std::uint8_t>& labels,
          const std::vector<std::uint8_t>& valid) {
    if (flags.size() != labels.size()) throw std::invalid_argument("prf1: size mismatch");
    Prf1 out;
    for (std::size_t t = 0; t < flags.size(); ++t) {
        if (!is_valid_at(valid, t)) continue;
        const bool f = flags[t] != 0;
        const bool y = labels[t] != 0;
        if (f && y) ++out.confusion.tp;
        else if (f && !y) ++out.confusion.fp;
        else if (!f && y) ++out.confusion.fn;
        else ++out.confusion.tn;
    }
    const auto& c = out.confusion;
    if (c.tp + c.fp == 0) {
        out.precision = 0.0;
        out.degenerate = true;
    } else {
        out.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        out.recall = 0.0;
        out.degenerate = true;
    } else {
        out.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    if (out.precision + out.recall == 0.0) {
        out.f1 = 0.0;
    } else {
        out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    }
    return out;
}

double auroc(const std::vector<double>& scores, const std::vector<std::uint8_t>& labels,
             const std::vector<std::uint8_t>& valid) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: size mismatch");
    std::vector<double> s;
    std::vector<std::uint8_t> y;
    for (std::size_t t = 0; t < scores.size(); ++t) {
        if (!is_valid_at(valid, t)) continue;
        s.push_back(scores[t]);
        y.push_back(labels[t]);
    }
    std::size_t n_pos = 0;
    for (const auto v : y) n_pos += v != 0;
    const std::size_t n_neg = y.size() - n_pos;
    if (n_pos == 0 || n_neg == 0) return 0.5;

    // rank-sum with average ties; doubled ranks keep everything integral so
    // the result matches brute-force pairwise counting bit for bit
    std::vector<std::size_t> order(s.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return s[a] < s[b]; });
    unsigned long long doubled_rank_sum_pos = 0;  // 2 * sum of positive ranks
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j + 1 < order.size() && s[order[j + 1]] == s[order[i]]) ++j;
        const unsigned long long doubled_avg = (i + 1) + (j + 1);  // 2 * average rank
        for (std::size_t k = i; k <= j; ++k) {
            if (y[order[k]]) doubled_rank_sum_pos += doubled_avg;
        }
        i = j + 1;
    }
    const unsigned long long numerator =
        doubled_rank_sum_pos - static_cast<unsigned long long>(n_pos) * (n_pos + 1);
    return static_cast<double>(numerator) /
           (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double error_reduction(const std::vector<double>& raw, const std::vector<double>& clean,
                       const std::vector<double>& recon, const std::vector<std::uint8_t>& mask) {
    const std::size_t n = raw.size();
    if (clean.size() != n || recon.size() != n || mask.size() != n) {
        throw std::invalid_argument("error_reduction: size mismatch");
    }
    double sum = 0.0;
    std::size_t segments = 0;
    std::size_t t = 0;
    while (t < n) {
        if (!mask[t]) {
            ++t;
            continue;
        }
        std::size_t end = t;
        while (end + 1 < n && mask[end + 1]) ++end;
        double err_raw = 0.0, err_recon = 0.0;
        for (std::size_t p = t; p <= end; ++p) {
            if (!std::isfinite(raw[p]) || !std::isfinite(clean[p]) || !std::isfinite(recon[p])) {
                continue;
            }
            err_raw += std::fabs(raw[p] - clean[p]);
            err_recon += std::fabs(recon[p] - clean[p]);
        }
        if (err_raw > 0.0) {
            sum += 100.0 * (err_raw - err_recon) / err_raw;
            ++segments;
        }
        t = end + 1;
    }
    return segments == 0 ? kMissing : sum / static_cast<double>(segments);
}

std::pair<double, double> rmse_segments(const std::vector<double>& pred,
                                        const std::vector<double>& truth,
                                        const std::vector<std::uint8_t>& mask) {
    const std::size_t n = pred.size();
    if (truth.size() != n || mask.size() != n) {
        throw std::invalid_argument("rmse_segments: size mismatch");
    }
    double sum_anom = 0.0, sum_clean = 0.0;
    std::size_t n_anom = 0, n_clean = 0;
    for (std::size_t t = 0; t < n; ++t) {
        if (!std::isfinite(pred[t]) || !std::isfinite(truth[t])) continue;
        const double e = (pred[t] - truth[t]) * (pred[t] - truth[t]);
        if (mask[t]) {
            sum_anom += e;
            ++n_anom;
        } else {
            sum_clean += e;
            ++n_clean;
        }
    }
    return {n_anom ? std::sqrt(sum_anom / static_cast<double>(n_anom)) : kMissing,
            n_clean ? std::sqrt(sum_clean / static_cast<double>(n_clean)) : kMissing};
}

std::map<int, Prf1> per_type_f1(const std::vector<TypedWindow>& windows) {
    std::map<int, Confusion> pooled;
    for (const auto& w : windows) {
        if (w.type_id < 0) continue;
        Confusion& c = pooled[w.type_id];
        for (std::size_t t = 0; t < w.flags.size(); ++t) {
            const bool f = w.flags[t] != 0;
            const bool y = w.labels[t] != 0;
            if (f && y) ++c.tp;
            else if (f && !y) ++c.fp;
            else if (!f && y) ++c.fn;
            else ++c.tn;
        }
    }
    std::map<int, Prf1> out;
    for (const auto& [type, c] : pooled) {
        Prf1 p;
        p.confusion = c;
        p.precision = c.tp + c.fp ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
        p.recall = c.tp + c.fn ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
        p.degenerate = (c.tp + c.fp == 0) || (c.tp + c.fn == 0);
        p.f1 = (p.precision + p.recall) > 0.0
                   ? 2.0 * p.precision * p.recall / (p.precision + p.recall)
                   : 0.0;
        out.emplace(type, p);
    }
    return out;
}

std::vector<MagnitudeBin> magnitude_stratified_recall(const std::vector<std::uint8_t>& flags,
                                                      const std::vector<std::uint8_t>& labels,
                                                      const std::vector<double>& magnitude) {
    if (flags.size() != labels.size() || flags.size() != magnitude.size()) {
        throw std::invalid_argument("magnitude_stratified_recall: size mismatch");
    }
    static const double kEdges[6] = {0.01, 0.05, 0.10, 0.25, 0.50, 1.00};
    std::vector<MagnitudeBin> bins(5);
    for (int b = 0; b < 5; ++b) {
        bins[b].lo = kEdges[b];
        bins[b].hi = kEdges[b + 1];
    }
    for (std::size_t t = 0; t < flags.size(); ++t) {
        if (!labels[t]) continue;
        const double m = magnitude[t];
        for (auto& bin : bins) {
            if (m > bin.lo && m <= bin.hi) {
                ++bin.total;
                if (flags[t]) ++bin.detected;
                break;
            }
        }
    }
    return bins;
}

int season_of_month(int month) {
    if (month == 12 || month <= 2) return kWinter;
    if (month <= 5) return kSpring;
    if (month <= 8) return kSummer;
    return kFall;
}

const char* season_name(int season) {
    switch (season) {
        case kWinter: return "winter";
        case kSpring: return "spring";
        case kSummer: return "summer";
        case kFall: return "fall";
    }
    return "?";
}

SeasonalRates seasonal_flag_rates(const std::vector<std::uint8_t>& flags, HourStamp start_hour) {
    SeasonalRates out;
    std::array<std::size_t, 4> flagged{};
    for (std::size_t t = 0; t < flags.size(); ++t) {
        const int season =
            season_of_month(month_of_hour(start_hour + static_cast<HourStamp>(t)));
        ++out.total[season];
        if (flags[t]) ++flagged[season];
    }
    for (int s = 0; s < 4; ++s) {
        out.rate[s] = out.total[s] ? static_cast<double>(flagged[s]) /
                                        static_cast<double>(out.total[s])
                                   : 0.0;
    }
    return out;
}

std::array<std::size_t, 3> duration_histogram(const std::vector<std::uint8_t>& mask) {
    std::array<std::size_t, 3> bins{};
    std::size_t t = 0;
    while (t < mask.size()) {
        if (!mask[t]) {
            ++t;
            continue;
        }
        std::size_t end = t;
        while (end + 1 < mask.size() && mask[end + 1]) ++end;
        const std::size_t len = end - t + 1;
        if (len < 6) ++bins[0];
        else if (len <= 48) ++bins[1];
        else ++bins[2];
        t = end + 1;
    }
    return bins;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: size mismatch");
    std::vector<double> diff;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d != 0.0) diff.push_back(d);
    }
    WilcoxonResult out;
    out.n = diff.size();
    if (diff.empty()) {
        out.p_value = 1.0;
        out.exact = true;
        return out;
    }

    std::vector<double> abs_d(diff.size());
    for (std::size_t i = 0; i < diff.size(); ++i) abs_d[i] = std::fabs(diff[i]);
    const std::vector<double> ranks = average_ranks(abs_d);
    double w_plus = 0.0;
    for (std::size_t i = 0; i < diff.size(); ++i) {
        if (diff[i] > 0.0) w_plus += ranks[i];
    }
    out.w_plus = w_plus;
    const std::size_t n = diff.size();

    if (n <= 25) {
        out.exact = true;
        // doubled ranks are integers; DP over achievable doubled rank sums
        std::vector<int> w2(n);
        int total2 = 0;
        for (std::size_t i = 0; i < n; ++i) {
            w2[i] = static_cast<int>(std::llround(2.0 * ranks[i]));
            total2 += w2[i];
        }
        std::vector<double> count(static_cast<std::size_t>(total2) + 1, 0.0);
        count[0] = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int s = total2; s >= w2[i]; --s) {
                count[s] += count[s - w2[i]];
            }
        }
        const double denom = std::pow(2.0, static_cast<double>(n));
        const int w2_obs = static_cast<int>(std::llround(2.0 * w_plus));
        double p_le = 0.0, p_ge = 0.0;
        for (int s = 0; s <= total2; ++s) {
            if (s <= w2_obs) p_le += count[s];
            if (s >= w2_obs) p_ge += count[s];
        }
        p_le /= denom;
        p_ge /= denom;
        out.p_value = std::min(1.0, 2.0 * std::min(p_le, p_ge));
        return out;
    }

    // normal approximation with tie correction and continuity correction
    const double nd = static_cast<double>(n);
    const double mu = nd * (nd + 1.0) / 4.0;
    double tie_term = 0.0;
    {
        std::vector<double> sorted = abs_d;
        std::sort(sorted.begin(), sorted.end());
        std::size_t i = 0;
        while (i < sorted.size()) {
            std::size_t j = i;
            while (j + 1 < sorted.size() && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            tie_term += t * t * t - t;
            i = j + 1;
        }
    }
    const double sigma2 = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0 - tie_term / 48.0;
    const double sigma = std::sqrt(std::max(sigma2, 1e-12));
    const double centered = w_plus - mu;
    const double cc = centered > 0.0 ? -0.5 : (centered < 0.0 ? 0.5 : 0.0);
    const double z = (centered + cc) / sigma;
    out.p_value = std::min(1.0, 2.0 * (1.0 - normal_cdf(std::fabs(z))));
    return out;
}

}  // namespace eval
}  // namespace streamqc
