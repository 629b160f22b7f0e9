#include "streamqc/inject.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "streamqc/mathutil.hpp"
#include "streamqc/rng.hpp"
#include "streamqc/units.hpp"

namespace streamqc {
namespace inject {

using nlohmann::json;

const char* train_type_name(TrainAnomalyType t) {
    switch (t) {
        case TrainAnomalyType::kSpike: return "spike";
        case TrainAnomalyType::kDrift: return "drift";
        case TrainAnomalyType::kFlatline: return "flatline";
        case TrainAnomalyType::kDropout: return "dropout";
        case TrainAnomalyType::kSaturation: return "saturation";
        case TrainAnomalyType::kClockShift: return "clock_shift";
        case TrainAnomalyType::kQuantization: return "quantization";
        case TrainAnomalyType::kUnitJump: return "unit_jump";
        case TrainAnomalyType::kWarp: return "warp";
        case TrainAnomalyType::kSplice: return "splice";
        case TrainAnomalyType::kSubtleDrift: return "subtle_drift";
    }
    return "?";
}

const char* test_type_name(TestAnomalyType t) {
    switch (t) {
        case TestAnomalyType::kDropout: return "dropout";
        case TestAnomalyType::kFlatline: return "flatline";
        case TestAnomalyType::kSpike: return "spike";
        case TestAnomalyType::kBackwater: return "backwater";
        case TestAnomalyType::kIceBackwater: return "ice_backwater";
        case TestAnomalyType::kDebrisEffect: return "debris_effect";
        case TestAnomalyType::kSedimentation: return "sedimentation";
        case TestAnomalyType::kDrift: return "drift";
        case TestAnomalyType::kRatingDrift: return "rating_drift";
        case TestAnomalyType::kSensorFouling: return "sensor_fouling";
        case TestAnomalyType::kBiasStep: return "bias_step";
        case TestAnomalyType::kTimeMisalignment: return "time_misalignment";
        case TestAnomalyType::kQuantization: return "quantization";
        case TestAnomalyType::kSplice: return "splice";
        case TestAnomalyType::kWarp: return "warp";
        case TestAnomalyType::kNoiseBurst: return "noise_burst";
        case TestAnomalyType::kGateOperation: return "gate_operation";
        case TestAnomalyType::kUnitMismatch: return "unit_mismatch";
    }
    return "?";
}

int test_type_variants(TestAnomalyType t) {
    switch (t) {
        case TestAnomalyType::kDropout: return 4;
        case TestAnomalyType::kFlatline: return 4;
        case TestAnomalyType::kSpike: return 4;
        case TestAnomalyType::kBackwater: return 3;
        case TestAnomalyType::kIceBackwater: return 3;
        case TestAnomalyType::kDebrisEffect: return 3;
        case TestAnomalyType::kSedimentation: return 3;
        case TestAnomalyType::kDrift: return 4;
        case TestAnomalyType::kRatingDrift: return 3;
        case TestAnomalyType::kSensorFouling: return 3;
        case TestAnomalyType::kBiasStep: return 4;
        case TestAnomalyType::kTimeMisalignment: return 3;
        case TestAnomalyType::kQuantization: return 3;
        case TestAnomalyType::kSplice: return 3;
        case TestAnomalyType::kWarp: return 3;
        case TestAnomalyType::kNoiseBurst: return 3;
        case TestAnomalyType::kGateOperation: return 3;
        case TestAnomalyType::kUnitMismatch: return 4;
    }
    return 3;
}

DurationRegime test_type_regime(TestAnomalyType t) {
    switch (t) {
        case TestAnomalyType::kSpike:
        case TestAnomalyType::kDropout:
        case TestAnomalyType::kNoiseBurst:
        case TestAnomalyType::kGateOperation:
            return DurationRegime::kMicro;
        case TestAnomalyType::kIceBackwater:
        case TestAnomalyType::kDrift:
        case TestAnomalyType::kRatingDrift:
        case TestAnomalyType::kSensorFouling:
        case TestAnomalyType::kSedimentation:
            return DurationRegime::kMacro;
        default:
            return DurationRegime::kMeso;
    }
}

double curriculum_probability(int epoch, const TrainInjectConfig& config) {
    if (epoch < 1) throw std::invalid_argument("curriculum_probability: epoch must be >= 1");
    return epoch <= config.curriculum_ramp_epochs ? config.curriculum_early
                                                  : config.curriculum_late;
}

namespace {

struct Segment {
    std::size_t start = 0, length = 0;
    std::size_t end() const { return start + length; }
};

// Non-overlapping placement: rejection sampling first, then a greedy
// first-fit scan over free slots.
bool place_segment(std::size_t len, std::size_t T, const std::vector<Segment>& placed, Rng& rng,
                   Segment* out) {
    if (len == 0 || len > T) return false;
    auto overlaps = [&](std::size_t start) {
        for (const auto& s : placed) {
            if (start < s.end() && s.start < start + len) return true;
        }
        return false;
    };
    for (int attempt = 0; attempt < 100; ++attempt) {
        const std::size_t start =
            static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(T - len)));
        if (!overlaps(start)) {
            *out = {start, len};
            return true;
        }
    }
    // greedy: first free slot large enough
    std::vector<Segment> sorted = placed;
    std::sort(sorted.begin(), sorted.end(),
              [](const Segment& a, const Segment& b) { return a.start < b.start; });
    std::size_t cursor = 0;
    for (const auto& s : sorted) {
        if (s.start > cursor && s.start - cursor >= len) {
            *out = {cursor, len};
            return true;
        }
        cursor = std::max(cursor, s.end());
    }
    if (T > cursor && T - cursor >= len) {
        *out = {cursor, len};
        return true;
    }
    return false;
}

struct Channels {
    std::vector<double> q, h;  // working copies of the two dynamic channels
};

double channel_std(const std::vector<double>& x) {
    std::vector<double> vals;
    for (const double v : x) {
        if (std::isfinite(v)) vals.push_back(v);
    }
    return vals.size() >= 2 ? population_std(vals) : 0.0;
}

void channel_min_max(const std::vector<double>& x, double* mn, double* mx) {
    *mn = 1e300;
    *mx = -1e300;
    for (const double v : x) {
        if (!std::isfinite(v)) continue;
        *mn = std::min(*mn, v);
        *mx = std::max(*mx, v);
    }
}

double linear_interp_at(const std::vector<double>& x, double pos) {
    const double clamped = std::clamp(pos, 0.0, static_cast<double>(x.size() - 1));
    const std::size_t lo = static_cast<std::size_t>(std::floor(clamped));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    const double frac = clamped - static_cast<double>(lo);
    return x[lo] + frac * (x[hi] - x[lo]);
}

// Applies one simplified transform to both normalized channels over `seg`.
// Returns the parameter record. `full_segment_mask` reports whether the mask
// must cover the whole segment regardless of value changes.
json apply_train_transform(TrainAnomalyType type, const Segment& seg, Channels* ch, Rng& rng,
                           bool* full_segment_mask) {
    json params;
    *full_segment_mask = false;
    auto& q = ch->q;
    auto& h = ch->h;
    const std::size_t T = q.size();

    switch (type) {
        case TrainAnomalyType::kSpike: {
            const double alpha = rng.uniform(2.0, 5.0);
            params["alpha"] = alpha;
            const double sq = channel_std(q), sh = channel_std(h);
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                q[t] += rng.normal(0.0, alpha * sq);
                h[t] += rng.normal(0.0, alpha * sh);
            }
            break;
        }
        case TrainAnomalyType::kDrift:
        case TrainAnomalyType::kSubtleDrift: {
            const double bound = type == TrainAnomalyType::kDrift ? 0.01 : 0.002;
            const double beta = rng.uniform(-bound, bound);
            params["beta"] = beta;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const double delta = beta * static_cast<double>(t - seg.start);
                q[t] += delta;
                h[t] += delta;
            }
            break;
        }
        case TrainAnomalyType::kFlatline: {
            *full_segment_mask = true;
            const double fq = q[seg.start], fh = h[seg.start];
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                q[t] = fq;
                h[t] = fh;
            }
            break;
        }
        case TrainAnomalyType::kDropout: {
            const double eps = rng.uniform(1e-6, 1e-4);
            params["epsilon"] = eps;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                q[t] = eps;
                h[t] = eps;
            }
            break;
        }
        case TrainAnomalyType::kSaturation: {
            double mn, mx;
            for (auto* chan : {&q, &h}) {
                channel_min_max(*chan, &mn, &mx);
                const double lo = mn + 0.1, hi = mx - 0.1;
                if (lo >= hi) continue;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    (*chan)[t] = std::clamp((*chan)[t], lo, hi);
                }
            }
            break;
        }
        case TrainAnomalyType::kClockShift: {
            *full_segment_mask = true;
            static const int kShifts[6] = {-3, -2, -1, 1, 2, 3};
            const int shift = kShifts[rng.uniform_int(0, 5)];
            params["shift_hours"] = shift;
            const std::vector<double> q0 = q, h0 = h;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const std::size_t src = static_cast<std::size_t>(std::clamp<std::int64_t>(
                    static_cast<std::int64_t>(t) + shift, 0,
                    static_cast<std::int64_t>(T) - 1));
                q[t] = q0[src];
                h[t] = h0[src];
            }
            break;
        }
        case TrainAnomalyType::kQuantization: {
            const double dq = rng.uniform(0.05, 0.2);
            params["delta_q"] = dq;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                q[t] = std::round(q[t] / dq) * dq;
                h[t] = std::round(h[t] / dq) * dq;
            }
            break;
        }
        case TrainAnomalyType::kUnitJump: {
            const double gamma = rng.uniform(-1.0, 1.0);
            params["gamma"] = gamma;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                q[t] += gamma;
                h[t] += gamma;
            }
            break;
        }
        case TrainAnomalyType::kWarp: {
            *full_segment_mask = true;
            const double w = rng.uniform(0.8, 1.2);
            params["w"] = w;
            const std::vector<double> q0 = q, h0 = h;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const double src =
                    static_cast<double>(seg.start) + (static_cast<double>(t - seg.start)) * w;
                q[t] = linear_interp_at(q0, src);
                h[t] = linear_interp_at(h0, src);
            }
            break;
        }
        case TrainAnomalyType::kSplice: {
            *full_segment_mask = true;
            std::size_t src = seg.start;
            for (int tries = 0; tries < 20 && src == seg.start; ++tries) {
                src = static_cast<std::size_t>(
                    rng.uniform_int(0, static_cast<std::int64_t>(T - seg.length)));
            }
            params["source_start"] = src;
            const std::vector<double> q0 = q, h0 = h;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                q[t] = q0[src + (t - seg.start)];
                h[t] = h0[src + (t - seg.start)];
            }
            break;
        }
    }
    return params;
}

}  // namespace

TrainInjectResult inject_training(const Window& window, const TrainInjectConfig& config,
                                  int epoch, std::uint64_t seed) {
    TrainInjectResult out;
    out.window = window;
    out.record.seed = seed;
    out.record.space = InjectionSpace::kNormalized;
    out.record.mask = AnomalyMask(kWindowLength);

    const std::size_t T = kWindowLength;
    Rng rng(seed);

    if (rng.uniform() >= curriculum_probability(epoch, config)) {
        out.record.clean = true;
        return out;
    }

    const std::size_t len_min = std::max<std::size_t>(2, T / 100 + (T % 100 != 0));
    const std::size_t len_max = T / 4;
    if (T < len_min) {
        out.record.clean = true;
        out.warnings.push_back("window shorter than minimum segment, clean pass-through");
        return out;
    }

    const bool light = rng.uniform() < config.light_prob;
    const double cov_lo = light ? config.light_cov_lo : config.moderate_cov_lo;
    const double cov_hi = light ? config.light_cov_hi : config.moderate_cov_hi;
    const double tol = light ? config.light_tol : config.moderate_tol;
    const double target = rng.uniform(cov_lo, cov_hi);

    const bool single = rng.uniform() < config.single_type_prob;
    int type_a = static_cast<int>(rng.uniform_int(0, kNumTrainTypes - 1));
    int type_b = type_a;
    if (!single) {
        while (type_b == type_a) {
            type_b = static_cast<int>(rng.uniform_int(0, kNumTrainTypes - 1));
        }
    }
    const int n_segments =
        static_cast<int>(rng.uniform_int(config.min_segments, config.max_segments));

    Channels original;
    original.q.resize(T);
    original.h.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        original.q[t] = window.at(static_cast<int>(t), kChanDischarge);
        original.h[t] = window.at(static_cast<int>(t), kChanStage);
    }

    struct Attempt {
        Channels ch;
        AnomalyMask mask{kWindowLength};
        std::vector<SegmentRecord> segments;
        double coverage = 0.0;
    };

    double budget_scale = 1.0;
    Attempt best;
    double best_gap = 2.0;

    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        Attempt a;
        a.ch = original;

        // segment lengths: uniform draws rescaled so the total tracks the
        // coverage budget
        std::vector<std::size_t> lengths(static_cast<std::size_t>(n_segments));
        double raw_total = 0.0;
        std::vector<double> raw(static_cast<std::size_t>(n_segments));
        for (auto& L : raw) {
            L = static_cast<double>(rng.uniform_int(static_cast<std::int64_t>(len_min),
                                                    static_cast<std::int64_t>(len_max)));
            raw_total += L;
        }
        const double budget = target * static_cast<double>(T) * budget_scale;
        for (std::size_t i = 0; i < raw.size(); ++i) {
            const double scaled = raw[i] * budget / raw_total;
            lengths[i] = static_cast<std::size_t>(std::clamp(
                std::llround(scaled), static_cast<long long>(len_min),
                static_cast<long long>(len_max)));
        }

        std::vector<Segment> placed;
        for (std::size_t i = 0; i < lengths.size(); ++i) {
            Segment seg;
            if (place_segment(lengths[i], T, placed, rng, &seg)) placed.push_back(seg);
        }

        for (std::size_t i = 0; i < placed.size(); ++i) {
            const int type_id = single ? type_a : (i % 2 == 0 ? type_a : type_b);
            const auto type = static_cast<TrainAnomalyType>(type_id);
            Channels before = a.ch;
            bool full_mask = false;
            const json params =
                apply_train_transform(type, placed[i], &a.ch, rng, &full_mask);
            SegmentRecord rec;
            rec.type = type_id;
            rec.start = placed[i].start;
            rec.length = placed[i].length;
            rec.params_json = params.dump();
            a.segments.push_back(std::move(rec));
            for (std::size_t t = placed[i].start; t < placed[i].end(); ++t) {
                const bool changed = a.ch.q[t] != before.q[t] || a.ch.h[t] != before.h[t];
                if (full_mask || changed) {
                    a.mask.flags[t] = 1;
                    a.mask.type_labels[t] = static_cast<std::int16_t>(type_id);
                }
            }
        }
        a.coverage = a.mask.coverage();

        const double cov = a.coverage;
        const double gap = std::fabs(cov - target);
        if (gap < best_gap) {
            best_gap = gap;
            best = std::move(a);
        }
        if (best_gap <= tol) break;
        budget_scale *= cov < target ? rng.uniform(1.1, 1.4) : rng.uniform(0.7, 0.9);
    }

    for (std::size_t t = 0; t < T; ++t) {
        out.window.at(static_cast<int>(t), kChanDischarge) = best.ch.q[t];
        out.window.at(static_cast<int>(t), kChanStage) = best.ch.h[t];
    }
    out.record.mask = std::move(best.mask);
    out.record.segments = std::move(best.segments);
    out.record.realized_coverage = best.coverage;
    return out;
}

// ---------------------------------------------------------------------------
// Test injector
// ---------------------------------------------------------------------------

namespace {

void regime_bounds(DurationRegime r, std::size_t* lo, std::size_t* hi) {
    switch (r) {
        case DurationRegime::kMicro: *lo = 3; *hi = 58; break;
        case DurationRegime::kMeso: *lo = 7; *hi = 192; break;
        case DurationRegime::kMacro: *lo = 72; *hi = 520; break;
    }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct PhysContext {
    double q_mean = 0.0, h_mean = 0.0;
    double q_std = 0.0, h_std = 0.0;
    double q_spread = 0.0;  // p90 - p10
};

PhysContext physical_context(const std::vector<double>& q, const std::vector<double>& h) {
    PhysContext c;
    std::vector<double> qv, hv;
    for (const double v : q) {
        if (std::isfinite(v)) qv.push_back(v);
    }
    for (const double v : h) {
        if (std::isfinite(v)) hv.push_back(v);
    }
    if (!qv.empty()) {
        c.q_mean = mean_of(qv);
        c.q_std = population_std(qv);
        std::sort(qv.begin(), qv.end());
        c.q_spread = quantile_sorted(qv, 0.90) - quantile_sorted(qv, 0.10);
    }
    if (!hv.empty()) {
        c.h_mean = mean_of(hv);
        c.h_std = population_std(hv);
    }
    return c;
}

// Applies `type` variant `variant` in physical space over `seg`.
json apply_test_transform(TestAnomalyType type, int variant, const Segment& seg,
                          std::vector<double>& q, std::vector<double>& h,
                          const PhysContext& ctx, Rng& rng, bool* full_segment_mask) {
    json params;
    params["variant"] = variant;
    *full_segment_mask = false;
    const std::size_t T = q.size();
    const std::size_t L = seg.length;
    auto progress = [&](std::size_t t) {
        return L > 1 ? static_cast<double>(t - seg.start) / static_cast<double>(L - 1) : 1.0;
    };

    switch (type) {
        case TestAnomalyType::kDropout: {
            // telemetry loss: affected readings collapse to zero
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const bool hit = variant != 3 || ((t - seg.start) % 2 == 0);
                if (!hit) continue;
                if (variant == 0 || variant == 3) {
                    q[t] = 0.0;
                    h[t] = 0.0;
                } else if (variant == 1) {
                    q[t] = 0.0;
                } else {
                    h[t] = 0.0;
                }
            }
            break;
        }
        case TestAnomalyType::kFlatline: {
            *full_segment_mask = true;
            double fq = q[seg.start], fh = h[seg.start];
            if (variant == 3) {
                std::vector<double> qs, hs;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    if (std::isfinite(q[t])) qs.push_back(q[t]);
                    if (std::isfinite(h[t])) hs.push_back(h[t]);
                }
                if (!qs.empty()) fq = mean_of(qs);
                if (!hs.empty()) fh = mean_of(hs);
            }
            params["freeze_q"] = fq;
            params["freeze_h"] = fh;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                if (variant == 0 || variant == 3) {
                    q[t] = fq;
                    h[t] = fh;
                } else if (variant == 1) {
                    q[t] = fq;
                } else {
                    h[t] = fh;
                }
            }
            break;
        }
        case TestAnomalyType::kSpike: {
            // impulse magnitudes capped at 5 sigma
            const double mag = rng.uniform(2.0, 5.0);
            const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
            params["magnitude_sigma"] = mag;
            params["sign"] = sign;
            if (variant == 0 || variant == 1) {
                const std::size_t k = static_cast<std::size_t>(
                    rng.uniform_int(1, std::max<std::int64_t>(1, static_cast<std::int64_t>(L / 4))));
                params["impulses"] = k;
                for (std::size_t i = 0; i < k; ++i) {
                    const std::size_t t = seg.start + static_cast<std::size_t>(rng.uniform_int(
                                              0, static_cast<std::int64_t>(L) - 1));
                    if (variant == 0) {
                        q[t] += sign * mag * ctx.q_std;
                    } else {
                        h[t] += sign * mag * ctx.h_std;
                    }
                }
            } else if (variant == 2) {
                const std::size_t pulse =
                    std::min<std::size_t>(L, static_cast<std::size_t>(rng.uniform_int(1, 3)));
                const std::size_t at = seg.start + static_cast<std::size_t>(rng.uniform_int(
                                           0, static_cast<std::int64_t>(L - pulse)));
                for (std::size_t t = at; t < at + pulse; ++t) {
                    q[t] += sign * mag * ctx.q_std;
                    h[t] += sign * mag * ctx.h_std;
                }
            } else {
                const double tau = rng.uniform(1.0, 6.0);
                params["tau"] = tau;
                const std::size_t at = seg.start + static_cast<std::size_t>(rng.uniform_int(
                                           0, static_cast<std::int64_t>(L) - 1));
                for (std::size_t t = at; t < seg.end(); ++t) {
                    q[t] += sign * mag * ctx.q_std *
                            std::exp(-static_cast<double>(t - at) / tau);
                }
            }
            break;
        }
        case TestAnomalyType::kBackwater: {
            // obstruction raises stage while true discharge is unchanged;
            // onset is always gradual (> 6 h)
            const double alpha_max = rng.uniform(0.1, 0.4);
            const std::size_t onset = std::min<std::size_t>(
                L > 1 ? L - 1 : 1, static_cast<std::size_t>(rng.uniform_int(6, 24)));
            const std::size_t release = std::min<std::size_t>(
                L > onset ? L - onset : 1, static_cast<std::size_t>(rng.uniform_int(6, 24)));
            params["alpha_max"] = alpha_max;
            params["onset_hours"] = onset;
            params["release_hours"] = release;
            double period = 0.0, phase = 0.0;
            if (variant == 2) {
                period = rng.uniform(24.0, 96.0);
                phase = rng.uniform(0.0, 6.283185307179586);
                params["period"] = period;
                params["phase"] = phase;
            }
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const std::size_t k = t - seg.start;
                double env;
                if (k < onset) {
                    const double s = static_cast<double>(k) / static_cast<double>(onset);
                    env = variant == 1 ? sigmoid(12.0 * (s - 0.5)) : s;
                } else if (L - 1 - k < release) {
                    const double s =
                        static_cast<double>(L - 1 - k) / static_cast<double>(release);
                    env = variant == 1 ? sigmoid(12.0 * (s - 0.5)) : s;
                } else {
                    env = 1.0;
                }
                double alpha = alpha_max * env;
                if (variant == 2) {
                    alpha *= 1.0 + 0.15 * std::sin(6.283185307179586 *
                                                       static_cast<double>(k) / period +
                                                   phase);
                }
                alpha = std::max(0.0, alpha);
                if (std::isfinite(h[t])) h[t] *= 1.0 + alpha;
            }
            break;
        }
        case TestAnomalyType::kIceBackwater: {
            const double alpha_max = rng.uniform(0.15, 0.55);
            const double beta_max = rng.uniform(0.0, 0.10);
            params["alpha_max"] = alpha_max;
            params["beta_max"] = beta_max;
            std::vector<double> alpha(L, 0.0);
            if (variant == 0) {
                const std::size_t ramp = std::min<std::size_t>(
                    L > 1 ? L - 1 : 1, static_cast<std::size_t>(rng.uniform_int(12, 48)));
                params["peak_hours"] = ramp;
                for (std::size_t k = 0; k < L; ++k) {
                    alpha[k] = k < ramp ? alpha_max * static_cast<double>(k) /
                                              static_cast<double>(ramp)
                                        : alpha_max;
                }
            } else if (variant == 1) {
                const double frac = rng.uniform(0.3, 0.7);
                const double krec = rng.uniform(0.01, 0.05);
                params["recover_frac"] = frac;
                params["k"] = krec;
                const std::size_t recover =
                    static_cast<std::size_t>(frac * static_cast<double>(L));
                for (std::size_t k = 0; k < L; ++k) {
                    alpha[k] = k <= recover
                                   ? alpha_max
                                   : alpha_max * std::exp(-krec *
                                                          static_cast<double>(k - recover));
                }
            } else {
                const double alpha_base = rng.uniform(0.2, 0.4);
                const int events = static_cast<int>(rng.uniform_int(2, 5));
                params["alpha_base"] = alpha_base;
                params["events"] = events;
                json ev = json::array();
                std::vector<double> centers(events), amps(events), widths(events);
                for (int e = 0; e < events; ++e) {
                    centers[e] = rng.uniform(0.0, static_cast<double>(L));
                    amps[e] = rng.uniform(-0.3, -0.1);  // negative: breakup
                    widths[e] = rng.uniform(1.0, 6.0);
                    ev.push_back({{"t", centers[e]}, {"a", amps[e]}, {"w", widths[e]}});
                }
                params["event_list"] = ev;
                for (std::size_t k = 0; k < L; ++k) {
                    double a = alpha_base;
                    for (int e = 0; e < events; ++e) {
                        const double d = static_cast<double>(k) - centers[e];
                        a += amps[e] * std::exp(-d * d / (2.0 * widths[e] * widths[e]));
                    }
                    alpha[k] = std::max(0.0, a);
                }
            }
            const double alpha_ref = variant == 2 ? params["alpha_base"].get<double>()
                                                  : alpha_max;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const double a = alpha[t - seg.start];
                const double beta =
                    std::clamp(alpha_ref > 0.0 ? beta_max * a / alpha_ref : 0.0, 0.0, 0.95);
                if (std::isfinite(h[t])) h[t] *= 1.0 + a;
                if (std::isfinite(q[t])) q[t] *= 1.0 - beta;
            }
            break;
        }
        case TestAnomalyType::kDebrisEffect: {
            const double alpha_max = rng.uniform(0.1, 0.5);
            const double release_frac = rng.uniform(0.7, 0.95);
            params["alpha_max"] = alpha_max;
            params["release_frac"] = release_frac;
            const std::size_t release =
                static_cast<std::size_t>(release_frac * static_cast<double>(L));
            std::vector<double> alpha(L, 0.0);
            if (variant == 0) {
                for (std::size_t k = 0; k < L; ++k) {
                    alpha[k] = k < release ? alpha_max * static_cast<double>(k) /
                                                 std::max<double>(1.0, release)
                                           : 0.0;
                }
            } else if (variant == 1) {
                const int steps = static_cast<int>(rng.uniform_int(2, 4));
                params["steps"] = steps;
                std::vector<std::size_t> at(steps);
                for (int s = 0; s < steps; ++s) {
                    at[s] = static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<std::int64_t>(release)));
                }
                std::sort(at.begin(), at.end());
                for (std::size_t k = 0; k < L; ++k) {
                    if (k >= release) break;
                    double a = 0.0;
                    for (int s = 0; s < steps; ++s) {
                        if (k >= at[s]) a += alpha_max / steps;
                    }
                    alpha[k] = a;
                }
            } else {
                const int flushes = static_cast<int>(rng.uniform_int(1, 3));
                params["flushes"] = flushes;
                std::vector<std::size_t> at(flushes);
                for (int s = 0; s < flushes; ++s) {
                    at[s] = static_cast<std::size_t>(
                        rng.uniform_int(1, std::max<std::int64_t>(1, static_cast<std::int64_t>(L) - 1)));
                }
                std::sort(at.begin(), at.end());
                double a = 0.0;
                int next = 0;
                const double rate = alpha_max / static_cast<double>(std::max<std::size_t>(1, L));
                for (std::size_t k = 0; k < L; ++k) {
                    while (next < flushes && k == at[next]) {
                        a *= 0.5;
                        ++next;
                    }
                    alpha[k] = a;
                    a += rate * 2.0;
                }
            }
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                if (std::isfinite(h[t])) h[t] *= 1.0 + alpha[t - seg.start];
            }
            break;
        }
        case TestAnomalyType::kSedimentation: {
            const double delta_end = rng.uniform(0.2, 1.0);
            params["delta_end_ft"] = delta_end;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const double s = progress(t);
                double d;
                if (variant == 0) {
                    d = delta_end * s;
                } else if (variant == 1) {
                    d = delta_end * std::sqrt(s);
                } else {
                    d = delta_end * sigmoid(10.0 * (s - 0.5));
                }
                if (std::isfinite(h[t])) h[t] += d;
            }
            break;
        }
        case TestAnomalyType::kDrift: {
            if (variant == 0) {
                const double bq = rng.uniform(-0.5, 0.5);    // ft^3/s per hour
                const double bh = rng.uniform(-0.01, 0.01);  // ft per hour
                params["beta_q"] = bq;
                params["beta_h"] = bh;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    const double k = static_cast<double>(t - seg.start);
                    if (std::isfinite(q[t])) q[t] += bq * k;
                    if (std::isfinite(h[t])) h[t] += bh * k;
                }
            } else if (variant == 1) {
                const double aq = rng.uniform(-0.01, 0.01);
                const double ah = rng.uniform(-0.005, 0.005);
                params["alpha_q"] = aq;
                params["alpha_h"] = ah;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    const double k = static_cast<double>(t - seg.start);
                    if (std::isfinite(q[t])) q[t] *= std::exp(aq * k);
                    if (std::isfinite(h[t])) h[t] *= std::exp(ah * k);
                }
            } else if (variant == 2) {
                const double dq = rng.uniform(-ctx.q_mean / 2.0, ctx.q_mean / 2.0);
                const double kq = rng.uniform(0.1, 0.5);
                const double dh = rng.uniform(-0.05, 0.05) * ctx.h_mean;
                const double kh = rng.uniform(0.1, 0.5);
                params["delta_q"] = dq;
                params["k_q"] = kq;
                params["delta_h"] = dh;
                params["k_h"] = kh;
                const double mid = static_cast<double>(seg.start) +
                                   static_cast<double>(L) / 2.0;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    const double x = static_cast<double>(t) - mid;
                    if (std::isfinite(q[t])) q[t] += dq * sigmoid(kq * x);
                    if (std::isfinite(h[t])) h[t] += dh * sigmoid(kh * x);
                }
            } else {
                const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
                const double devq = sign * rng.uniform(0.1, 0.3) * ctx.q_mean;
                const double devh = sign * rng.uniform(0.01, 0.05) * ctx.h_mean;
                const double bq = rng.uniform(-1.0, 1.0) * devq / static_cast<double>(L);
                const double aq = (devq - bq * static_cast<double>(L)) /
                                  (static_cast<double>(L) * static_cast<double>(L));
                const double bh = rng.uniform(-1.0, 1.0) * devh / static_cast<double>(L);
                const double ah = (devh - bh * static_cast<double>(L)) /
                                  (static_cast<double>(L) * static_cast<double>(L));
                params["endpoint_q"] = devq;
                params["endpoint_h"] = devh;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    const double k = static_cast<double>(t - seg.start);
                    if (std::isfinite(q[t])) q[t] += aq * k * k + bq * k;
                    if (std::isfinite(h[t])) h[t] += ah * k * k + bh * k;
                }
            }
            break;
        }
        case TestAnomalyType::kRatingDrift: {
            const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
            const double g_max = sign * rng.uniform(0.1, 0.4);
            params["g_max"] = g_max;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const double s = progress(t);
                double g;
                if (variant == 0) {
                    g = g_max * s;
                } else if (variant == 1) {
                    g = std::exp(std::log1p(g_max) * s) - 1.0;
                } else {
                    g = g_max * sigmoid(10.0 * (s - 0.5));
                }
                if (std::isfinite(q[t])) q[t] *= 1.0 + g;
            }
            break;
        }
        case TestAnomalyType::kSensorFouling: {
            if (variant == 0) {
                const double bias_end = rng.uniform(0.05, 0.3);
                params["bias_end_ft"] = bias_end;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    if (std::isfinite(h[t])) h[t] -= bias_end * progress(t);
                }
            } else if (variant == 1) {
                const double w_end = rng.uniform(0.3, 0.8);
                params["w_end"] = w_end;
                // damping toward the segment mean
                std::vector<double> hs;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    if (std::isfinite(h[t])) hs.push_back(h[t]);
                }
                const double target = hs.empty() ? 0.0 : mean_of(hs);
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    const double w = w_end * progress(t);
                    if (std::isfinite(h[t])) h[t] = (1.0 - w) * h[t] + w * target;
                }
            } else {
                const double lambda_end = rng.uniform(0.05, 0.3);
                params["lambda_end"] = lambda_end;
                double state = h[seg.start];
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    if (!std::isfinite(h[t])) continue;
                    const double lambda = 1.0 + (lambda_end - 1.0) * progress(t);
                    state = (1.0 - lambda) * state + lambda * h[t];
                    h[t] = state;
                }
            }
            break;
        }
        case TestAnomalyType::kBiasStep: {
            const double sign = rng.bernoulli(0.5) ? 1.0 : -1.0;
            const double cq = sign * rng.uniform(1.0, 3.0) * ctx.q_std;
            const double ch = sign * rng.uniform(0.1, 0.5);
            params["offset_q"] = cq;
            params["offset_h"] = ch;
            if (variant == 2) {
                const double cq2 = -sign * rng.uniform(1.0, 3.0) * ctx.q_std;
                params["offset_q2"] = cq2;
                const std::size_t mid = seg.start + L / 2;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    if (std::isfinite(q[t])) q[t] += t < mid ? cq : cq2;
                }
            } else {
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    if ((variant == 0 || variant == 3) && std::isfinite(q[t])) q[t] += cq;
                    if ((variant == 1 || variant == 3) && std::isfinite(h[t])) h[t] += ch;
                }
            }
            break;
        }
        case TestAnomalyType::kTimeMisalignment: {
            *full_segment_mask = true;
            const int dq_shift =
                (rng.bernoulli(0.5) ? 1 : -1) * static_cast<int>(rng.uniform_int(1, 6));
            const int dh_shift =
                (rng.bernoulli(0.5) ? 1 : -1) * static_cast<int>(rng.uniform_int(1, 6));
            params["shift_q"] = dq_shift;
            params["shift_h"] = dh_shift;
            const std::vector<double> q0 = q, h0 = h;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                auto src = [&](int shift) {
                    return static_cast<std::size_t>(std::clamp<std::int64_t>(
                        static_cast<std::int64_t>(t) + shift, 0,
                        static_cast<std::int64_t>(T) - 1));
                };
                if (variant == 0 || variant == 2) q[t] = q0[src(dq_shift)];
                if (variant == 1 || variant == 2) h[t] = h0[src(dh_shift)];
            }
            break;
        }
        case TestAnomalyType::kQuantization: {
            const double grid_q = rng.uniform(0.02, 0.1) * std::max(ctx.q_spread, 1e-6);
            const double grid_h = rng.uniform(0.05, 0.5);
            params["grid_q"] = grid_q;
            params["grid_h"] = grid_h;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                if ((variant == 0 || variant == 2) && std::isfinite(q[t])) {
                    q[t] = std::round(q[t] / grid_q) * grid_q;
                }
                if ((variant == 1 || variant == 2) && std::isfinite(h[t])) {
                    h[t] = std::round(h[t] / grid_h) * grid_h;
                }
            }
            break;
        }
        case TestAnomalyType::kSplice: {
            *full_segment_mask = true;
            const std::vector<double> q0 = q, h0 = h;
            if (variant == 2) {
                // time-reversed copy of the segment itself
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    const std::size_t src = seg.start + (L - 1 - (t - seg.start));
                    q[t] = q0[src];
                    h[t] = h0[src];
                }
            } else {
                std::size_t src = seg.start;
                for (int tries = 0; tries < 20 && src == seg.start; ++tries) {
                    src = static_cast<std::size_t>(
                        rng.uniform_int(0, static_cast<std::int64_t>(T - L)));
                }
                params["source_start"] = src;
                const double dq = variant == 1 ? q0[seg.start] - q0[src] : 0.0;
                const double dh = variant == 1 ? h0[seg.start] - h0[src] : 0.0;
                for (std::size_t t = seg.start; t < seg.end(); ++t) {
                    q[t] = q0[src + (t - seg.start)] + dq;
                    h[t] = h0[src + (t - seg.start)] + dh;
                }
            }
            break;
        }
        case TestAnomalyType::kWarp: {
            *full_segment_mask = true;
            const std::vector<double> q0 = q, h0 = h;
            double w = 1.0, amp = 0.0, period = 1.0;
            if (variant == 0) {
                do {
                    w = rng.uniform(0.7, 1.3);
                } while (std::fabs(w - 1.0) < 0.05);
                params["w"] = w;
            } else if (variant == 1) {
                do {
                    w = rng.uniform(0.7, 1.3);
                } while (std::fabs(w - 1.0) < 0.05);
                params["w_end"] = w;
            } else {
                amp = rng.uniform(2.0, 6.0);
                period = rng.uniform(24.0, 96.0);
                params["amplitude"] = amp;
                params["period"] = period;
            }
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const double tau = static_cast<double>(t - seg.start);
                double src;
                if (variant == 0) {
                    src = static_cast<double>(seg.start) + tau * w;
                } else if (variant == 1) {
                    // rate ramps linearly from 1 to w across the segment
                    src = static_cast<double>(seg.start) + tau +
                          (w - 1.0) * tau * tau / (2.0 * static_cast<double>(L));
                } else {
                    src = static_cast<double>(t) +
                          amp * std::sin(6.283185307179586 * tau / period);
                }
                q[t] = linear_interp_at(q0, src);
                h[t] = linear_interp_at(h0, src);
            }
            break;
        }
        case TestAnomalyType::kNoiseBurst: {
            const double rel = rng.uniform(0.05, 0.2);
            params["relative_sigma"] = rel;
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                double scale = 1.0;
                if (variant == 1) scale = progress(t);
                if (variant == 2 && !rng.bernoulli(0.5)) continue;
                const double aq =
                    variant == 2 ? rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1 : -1)
                                 : rng.normal();
                const double ah =
                    variant == 2 ? rng.uniform(0.5, 1.5) * (rng.bernoulli(0.5) ? 1 : -1)
                                 : rng.normal();
                if (std::isfinite(q[t])) q[t] += aq * rel * ctx.q_std * scale;
                if (std::isfinite(h[t])) h[t] += ah * rel * ctx.h_std * scale;
            }
            break;
        }
        case TestAnomalyType::kGateOperation: {
            // real flow changes: stage follows discharge with a blunted
            // hydraulic exponent
            constexpr double kStageExp = 0.3;
            std::vector<double> factor(L, 1.0);
            if (variant == 0) {
                const double f = rng.uniform(1.5, 4.0);
                const std::size_t ramp = std::min<std::size_t>(
                    L / 2, static_cast<std::size_t>(rng.uniform_int(1, 2)));
                params["factor"] = f;
                params["ramp_hours"] = ramp;
                for (std::size_t k = 0; k < L; ++k) {
                    if (k < ramp) {
                        factor[k] = 1.0 + (f - 1.0) * static_cast<double>(k + 1) /
                                              static_cast<double>(ramp + 1);
                    } else if (L - 1 - k < ramp) {
                        factor[k] = 1.0 + (f - 1.0) * static_cast<double>(L - k) /
                                              static_cast<double>(ramp + 1);
                    } else {
                        factor[k] = f;
                    }
                }
            } else if (variant == 1) {
                const std::size_t period =
                    static_cast<std::size_t>(rng.uniform_int(6, 24));
                const double f_hi = rng.uniform(1.2, 2.5);
                const double f_lo = rng.uniform(0.3, 0.8);
                params["period"] = period;
                params["f_hi"] = f_hi;
                params["f_lo"] = f_lo;
                for (std::size_t k = 0; k < L; ++k) {
                    factor[k] = (k / std::max<std::size_t>(1, period / 2)) % 2 == 0 ? f_hi
                                                                                    : f_lo;
                }
            } else {
                const double f = rng.uniform(0.2, 0.6);
                params["drawdown_factor"] = f;
                const std::size_t ramp = std::max<std::size_t>(1, L / 3);
                for (std::size_t k = 0; k < L; ++k) {
                    factor[k] = k < ramp ? 1.0 + (f - 1.0) * static_cast<double>(k) /
                                                     static_cast<double>(ramp)
                                         : f;
                }
            }
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                const double f = factor[t - seg.start];
                if (std::isfinite(q[t])) q[t] *= f;
                if (std::isfinite(h[t])) h[t] *= std::pow(f, kStageExp);
            }
            break;
        }
        case TestAnomalyType::kUnitMismatch: {
            for (std::size_t t = seg.start; t < seg.end(); ++t) {
                if (variant == 0 && std::isfinite(q[t])) q[t] /= kCmsToCfs;
                if (variant == 1 && std::isfinite(q[t])) q[t] *= kCmsToCfs;
                if (variant == 2 && std::isfinite(h[t])) h[t] /= kMetersToFeet;
                if (variant == 3 && std::isfinite(h[t])) h[t] *= kMetersToFeet;
            }
            break;
        }
    }
    return params;
}

}  // namespace

TestInjectResult inject_test(const Window& window, const norm::SiteStats& stats,
                             const TestInjectConfig& config, const norm::NormConfig& norm_config,
                             std::uint64_t seed) {
    TestInjectResult out;
    out.window = window;
    out.record.seed = seed;
    out.record.space = InjectionSpace::kPhysical;
    out.record.catalog_version = kTestCatalogVersion;
    out.record.mask = AnomalyMask(kWindowLength);
    const std::size_t T = kWindowLength;

    try {
        norm::denormalize_window(window, stats, norm_config, &out.clean_physical_q,
                                 &out.clean_physical_h);
    } catch (const std::overflow_error& e) {
        out.aborted = true;
        out.abort_reason = e.what();
        return out;
    }

    Rng rng(seed);
    out.record.single_type = rng.uniform() < config.single_type_prob;
    const int n_types = out.record.single_type
                            ? 1
                            : static_cast<int>(rng.uniform_int(config.compound_min_types,
                                                               config.compound_max_types));
    std::vector<int> types;
    while (static_cast<int>(types.size()) < n_types) {
        const int t = static_cast<int>(rng.uniform_int(0, kNumTestTypes - 1));
        if (std::find(types.begin(), types.end(), t) == types.end()) types.push_back(t);
    }

    std::vector<double> q = out.clean_physical_q;
    std::vector<double> h = out.clean_physical_h;
    const PhysContext ctx = physical_context(q, h);

    std::vector<Segment> placed;
    std::vector<std::uint8_t> full_mask_flags;
    for (const int type_id : types) {
        const auto type = static_cast<TestAnomalyType>(type_id);
        std::size_t lo, hi;
        regime_bounds(test_type_regime(type), &lo, &hi);
        hi = std::min(hi, T);
        lo = std::min(lo, hi);
        const std::size_t len = static_cast<std::size_t>(rng.uniform_int(
            static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));

        Segment seg{0, len};
        bool want_overlap = !placed.empty() && rng.bernoulli(config.overlap_prob);
        if (want_overlap) {
            const Segment& prev =
                placed[static_cast<std::size_t>(rng.uniform_int(
                    0, static_cast<std::int64_t>(placed.size()) - 1))];
            const std::int64_t lo_start =
                std::max<std::int64_t>(0, static_cast<std::int64_t>(prev.start) -
                                              static_cast<std::int64_t>(len) + 1);
            const std::int64_t hi_start =
                std::min<std::int64_t>(static_cast<std::int64_t>(T - len),
                                       static_cast<std::int64_t>(prev.end()) - 1);
            seg.start = static_cast<std::size_t>(
                hi_start >= lo_start ? rng.uniform_int(lo_start, hi_start) : 0);
        } else if (!place_segment(len, T, placed, rng, &seg)) {
            seg.start = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(T - len)));
        }
        placed.push_back(seg);

        const int variant = static_cast<int>(rng.uniform_int(0, test_type_variants(type) - 1));
        bool full_mask = false;
        const json params = apply_test_transform(type, variant, seg, q, h, ctx, rng, &full_mask);
        full_mask_flags.push_back(full_mask ? 1 : 0);

        SegmentRecord rec;
        rec.type = type_id;
        rec.variant = variant;
        rec.start = seg.start;
        rec.length = seg.length;
        rec.params_json = params.dump();
        out.record.segments.push_back(std::move(rec));
    }

    // physical floor: recorded values cannot go negative
    for (std::size_t t = 0; t < T; ++t) {
        if (std::isfinite(q[t])) q[t] = std::max(0.0, q[t]);
        if (std::isfinite(h[t])) h[t] = std::max(0.0, h[t]);
    }

    // mask: changed values, plus whole segments for resampling transforms
    for (std::size_t t = 0; t < T; ++t) {
        const bool changed = (std::isfinite(q[t]) && q[t] != out.clean_physical_q[t]) ||
                             (std::isfinite(h[t]) && h[t] != out.clean_physical_h[t]);
        if (changed) out.record.mask.flags[t] = 1;
    }
    for (std::size_t i = 0; i < placed.size(); ++i) {
        if (!full_mask_flags[i]) continue;
        for (std::size_t t = placed[i].start; t < placed[i].end(); ++t) {
            out.record.mask.flags[t] = 1;
        }
    }
    // type labels: last segment containing the timestep wins
    for (std::size_t i = 0; i < placed.size(); ++i) {
        for (std::size_t t = placed[i].start; t < placed[i].end(); ++t) {
            if (out.record.mask.flags[t]) {
                out.record.mask.type_labels[t] =
                    static_cast<std::int16_t>(out.record.segments[i].type);
            }
        }
    }
    out.record.realized_coverage = out.record.mask.coverage();

    out.physical_q = q;
    out.physical_h = h;
    for (std::size_t t = 0; t < T; ++t) {
        if (!window.observation_mask.empty() && !window.observation_mask[t]) continue;
        out.window.at(static_cast<int>(t), kChanDischarge) =
            norm::normalize_value(q[t], stats.mu_lnq, stats.sigma_lnq, norm_config);
        out.window.at(static_cast<int>(t), kChanStage) =
            norm::normalize_value(h[t], stats.mu_lnh, stats.sigma_lnh, norm_config);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Record serialization (JSON lines)
// ---------------------------------------------------------------------------

std::string record_to_json_line(const CorruptionRecord& record, const std::string& site_id,
                                HourStamp start_hour) {
    json j;
    j["site"] = site_id;
    j["start"] = format_iso8601_utc_hour(start_hour);
    j["seed"] = record.seed;
    j["space"] = record.space == InjectionSpace::kPhysical ? "physical" : "normalized";
    j["clean"] = record.clean;
    j["single_type"] = record.single_type;
    j["coverage"] = record.realized_coverage;
    if (!record.catalog_version.empty()) j["catalog"] = record.catalog_version;

    json segs = json::array();
    for (const auto& s : record.segments) {
        json sj;
        sj["type"] = s.type;
        sj["type_name"] = record.space == InjectionSpace::kPhysical
                              ? test_type_name(static_cast<TestAnomalyType>(s.type))
                              : train_type_name(static_cast<TrainAnomalyType>(s.type));
        sj["variant"] = s.variant;
        sj["start"] = s.start;
        sj["length"] = s.length;
        sj["params"] = s.params_json.empty() ? json::object() : json::parse(s.params_json);
        segs.push_back(std::move(sj));
    }
    j["segments"] = std::move(segs);

    // run-length encoded mask: [start, end, type_label]
    json runs = json::array();
    const auto& flags = record.mask.flags;
    std::size_t t = 0;
    while (t < flags.size()) {
        if (!flags[t]) {
            ++t;
            continue;
        }
        const std::int16_t label = record.mask.type_labels[t];
        std::size_t end = t;
        while (end + 1 < flags.size() && flags[end + 1] &&
               record.mask.type_labels[end + 1] == label) {
            ++end;
        }
        runs.push_back({t, end + 1, label});
        t = end + 1;
    }
    j["mask_runs"] = std::move(runs);
    return j.dump();
}

CorruptionRecord record_from_json_line(const std::string& line, std::string* site_id,
                                       HourStamp* start_hour) {
    const json j = json::parse(line);
    if (site_id != nullptr) *site_id = j.at("site").get<std::string>();
    if (start_hour != nullptr) {
        *start_hour = parse_iso8601_utc_hour(j.at("start").get<std::string>());
    }
    CorruptionRecord r;
    r.seed = j.at("seed").get<std::uint64_t>();
    r.space = j.at("space").get<std::string>() == "physical" ? InjectionSpace::kPhysical
                                                             : InjectionSpace::kNormalized;
    r.clean = j.at("clean").get<bool>();
    r.single_type = j.at("single_type").get<bool>();
    r.realized_coverage = j.at("coverage").get<double>();
    if (j.contains("catalog")) r.catalog_version = j.at("catalog").get<std::string>();
    for (const auto& sj : j.at("segments")) {
        SegmentRecord s;
        s.type = sj.at("type").get<int>();
        s.variant = sj.at("variant").get<int>();
        s.start = sj.at("start").get<std::size_t>();
        s.length = sj.at("length").get<std::size_t>();
        s.params_json = sj.at("params").dump();
        r.segments.push_back(std::move(s));
    }
    r.mask = AnomalyMask(kWindowLength);
    for (const auto& run : j.at("mask_runs")) {
        const std::size_t lo = run.at(0).get<std::size_t>();
        const std::size_t hi = run.at(1).get<std::size_t>();
        const std::int16_t label = run.at(2).get<std::int16_t>();
        for (std::size_t t = lo; t < hi && t < r.mask.flags.size(); ++t) {
            r.mask.flags[t] = 1;
            r.mask.type_labels[t] = label;
        }
    }
    return r;
}

}  // namespace inject
}  // namespace streamqc
