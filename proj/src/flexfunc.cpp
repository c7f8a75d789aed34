#include "flexlattice/flexfunc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "flexlattice/rng.hpp"

namespace flexlattice {

void FlexibilityFunction::validate() const {
    if (tau_h < 0.0) throw ConfigError("ff.tau_h", "must be >= 0");
    if (!(alpha_h > tau_h)) throw ConfigError("ff.alpha_h", "must be > tau");
    if (!(beta_h >= alpha_h)) throw ConfigError("ff.beta_h", "must be >= alpha");
    if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("ff.delta", "must be in (0, 1]");
    if (rebound_ratio < 0.0) throw ConfigError("ff.rebound_ratio", "must be >= 0");
    if (!(rebound_duration_h > 0.0)) throw ConfigError("ff.rebound_duration_h", "must be > 0");
    if (!(p_base_kw > 0.0)) throw ConfigError("ff.p_base_kw", "must be > 0");
}

double step_response(const FlexibilityFunction& ff, double t_h) {
    if (t_h < 0.0) throw NegativeTime(t_h);
    const double depth = ff.delta * ff.p_base_kw;
    if (t_h < ff.tau_h) return 0.0;
    if (t_h <= ff.alpha_h)
        return -depth * (t_h - ff.tau_h) / (ff.alpha_h - ff.tau_h);
    if (t_h <= ff.beta_h) {
        if (ff.beta_h == ff.alpha_h) return 0.0;
        return -depth * (ff.beta_h - t_h) / (ff.beta_h - ff.alpha_h);
    }
    const double rebound_end = ff.beta_h + ff.rebound_duration_h;
    if (t_h < rebound_end) {
        const double area_a = depth * (ff.beta_h - ff.tau_h) / 2.0;
        const double peak = 2.0 * ff.rebound_ratio * area_a / ff.rebound_duration_h;
        const double mid = ff.beta_h + ff.rebound_duration_h / 2.0;
        // symmetric triangle over [beta, beta + duration]
        if (t_h <= mid) return peak * (t_h - ff.beta_h) / (ff.rebound_duration_h / 2.0);
        return peak * (rebound_end - t_h) / (ff.rebound_duration_h / 2.0);
    }
    return 0.0;
}

ReboundAreas rebound_areas(const FlexibilityFunction& ff) {
    const double a = ff.delta * ff.p_base_kw * (ff.beta_h - ff.tau_h) / 2.0;
    return ReboundAreas{a, ff.rebound_ratio * a};
}

Signal predict_response(const FlexibilityFunction& ff, const PenaltySignal& penalty) {
    const TimeGrid& grid = penalty.grid();
    const double dt = grid.step_h();
    if (dt > ff.alpha_h - ff.tau_h)
        throw GridTooCoarse("step " + std::to_string(dt) + " h exceeds ramp " +
                            std::to_string(ff.alpha_h - ff.tau_h) + " h");

    const double support_h = ff.beta_h + ff.rebound_duration_h;
    const auto support_steps = static_cast<std::size_t>(std::ceil(support_h / dt)) + 1;

    std::vector<double> out(grid.steps, 0.0);
    for (std::size_t k = 1; k < grid.steps; ++k) {
        const double increment = penalty[k] - penalty[k - 1];
        if (increment == 0.0) continue;
        const std::size_t last = std::min(grid.steps, k + support_steps);
        for (std::size_t i = k; i < last; ++i)
            out[i] += increment * step_response(ff, static_cast<double>(i - k) * dt);
    }
    return Signal(grid, std::move(out), Unit::kw);
}

namespace {

// parameter vector order: tau, alpha, beta, delta, r, rebound_duration
using Params = std::array<double, 6>;

FlexibilityFunction to_ff(const Params& p, double p_base) {
    return FlexibilityFunction{p[0], p[1], p[2], p[3], p[4], p[5], p_base};
}

void project_feasible(Params& p) {
    constexpr double eps = 1e-6;
    p[0] = std::max(p[0], 0.0);
    p[1] = std::max(p[1], p[0] + eps);
    p[2] = std::max(p[2], p[1]);
    p[3] = std::clamp(p[3], eps, 1.0);
    p[4] = std::max(p[4], 0.0);
    p[5] = std::max(p[5], eps);
}

double sum_sq_error(const Params& p, const std::vector<double>& y, double dt, double p_base) {
    const FlexibilityFunction ff = to_ff(p, p_base);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        const double e = step_response(ff, static_cast<double>(i) * dt) - y[i];
        acc += e * e;
    }
    return acc;
}

// Nelder-Mead on the projected parameter space. Good enough here: the
// objective is a sum of squares of piecewise-linear terms and the feature
// initializer lands within a grid step of the optimum.
Params nelder_mead(Params start, const std::function<double(const Params&)>& f) {
    constexpr std::size_t dim = 6;
    constexpr int max_iter = 4000;

    std::array<Params, dim + 1> simplex;
    std::array<double, dim + 1> value;
    simplex[0] = start;
    for (std::size_t i = 0; i < dim; ++i) {
        Params p = start;
        const double scale = (p[i] != 0.0) ? 0.05 * std::abs(p[i]) : 0.02;
        p[i] += scale;
        project_feasible(p);
        simplex[i + 1] = p;
    }
    for (std::size_t i = 0; i <= dim; ++i) value[i] = f(simplex[i]);

    auto order = [&] {
        std::array<std::size_t, dim + 1> idx{};
        for (std::size_t i = 0; i <= dim; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(),
                  [&](std::size_t a, std::size_t b) { return value[a] < value[b]; });
        std::array<Params, dim + 1> s2;
        std::array<double, dim + 1> v2;
        for (std::size_t i = 0; i <= dim; ++i) {
            s2[i] = simplex[idx[i]];
            v2[i] = value[idx[i]];
        }
        simplex = s2;
        value = v2;
    };

    for (int iter = 0; iter < max_iter; ++iter) {
        order();
        double spread = 0.0;
        for (std::size_t i = 0; i < dim; ++i)
            spread = std::max(spread, std::abs(simplex[dim][i] - simplex[0][i]));
        if (spread < 1e-11 && value[0] < 1e-30) break;
        if (spread < 1e-13) break;

        Params centroid{};
        for (std::size_t i = 0; i < dim; ++i)
            for (std::size_t j = 0; j < dim; ++j) centroid[j] += simplex[i][j] / dim;

        auto blend = [&](double coeff) {
            Params p;
            for (std::size_t j = 0; j < dim; ++j)
                p[j] = centroid[j] + coeff * (simplex[dim][j] - centroid[j]);
            project_feasible(p);
            return p;
        };

        const Params reflected = blend(-1.0);
        const double fr = f(reflected);
        if (fr < value[0]) {
            const Params expanded = blend(-2.0);
            const double fe = f(expanded);
            if (fe < fr) {
                simplex[dim] = expanded;
                value[dim] = fe;
            } else {
                simplex[dim] = reflected;
                value[dim] = fr;
            }
        } else if (fr < value[dim - 1]) {
            simplex[dim] = reflected;
            value[dim] = fr;
        } else {
            const Params contracted = blend(fr < value[dim] ? 0.5 : -0.5);
            const double fc = f(contracted);
            if (fc < std::min(fr, value[dim])) {
                simplex[dim] = contracted;
                value[dim] = fc;
            } else {
                // shrink toward the best vertex
                for (std::size_t i = 1; i <= dim; ++i) {
                    for (std::size_t j = 0; j < dim; ++j)
                        simplex[i][j] = simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j]);
                    project_feasible(simplex[i]);
                    value[i] = f(simplex[i]);
                }
            }
        }
    }
    order();
    return simplex[0];
}

}  // namespace

FitResult fit_from_step(const Signal& observed, double p_base_kw) {
    if (!(p_base_kw > 0.0)) throw ConfigError("p_base_kw", "must be > 0");
    const auto& y = observed.values();
    const double dt = observed.grid().step_h();
    const std::size_t n = y.size();

    double peak_drop = 0.0;
    for (double v : y) peak_drop = std::max(peak_drop, -v);
    if (peak_drop <= 1e-9 * p_base_kw) throw NoResponse();

    // feature extraction on the raw samples
    const double tol = 0.05 * peak_drop;
    std::size_t i_tau = 0;
    while (i_tau < n && -y[i_tau] < tol) ++i_tau;
    std::size_t i_alpha = i_tau;
    for (std::size_t i = i_tau; i < n; ++i)
        if (y[i] < y[i_alpha]) i_alpha = i;
    std::size_t i_beta = i_alpha;
    while (i_beta < n && y[i_beta] < -tol) ++i_beta;

    double neg_area = 0.0, pos_area = 0.0;
    std::size_t i_rebound_end = i_beta;
    for (std::size_t i = 0; i < n; ++i) {
        if (y[i] < 0.0) neg_area -= y[i] * dt;
        if (i >= i_beta && y[i] > 0.0) {
            pos_area += y[i] * dt;
            if (y[i] > tol) i_rebound_end = i + 1;
        }
    }

    Params guess;
    guess[0] = static_cast<double>(i_tau) * dt;                      // tau
    guess[1] = static_cast<double>(i_alpha) * dt;                    // alpha
    guess[2] = static_cast<double>(i_beta) * dt;                     // beta
    guess[3] = peak_drop / p_base_kw;                                // delta
    guess[4] = (neg_area > 0.0) ? pos_area / neg_area : 0.0;         // r
    guess[5] = static_cast<double>(i_rebound_end - i_beta) * dt;     // rebound duration
    project_feasible(guess);

    const auto objective = [&](const Params& p) { return sum_sq_error(p, y, dt, p_base_kw); };
    double y_sq = 0.0;
    for (double v : y) y_sq += v * v;

    // multi-start refinement: restart from the incumbent with deterministic
    // jitter until the residual reaches the noiseless floor or the attempt
    // budget runs out (noisy data never reaches the floor)
    Params best = nelder_mead(guess, objective);
    double best_value = objective(best);
    const double floor_value = 1e-16 * y_sq;
    for (std::uint64_t attempt = 0; attempt < 6 && best_value > floor_value; ++attempt) {
        Params start = best;
        if (attempt > 0) {
            for (std::size_t i = 0; i < start.size(); ++i) {
                const double u = rng::uniform(attempt, 0x666974ULL, i, 0) - 0.5;
                start[i] += u * (0.2 * std::abs(start[i]) + 0.02);
            }
            project_feasible(start);
        }
        const Params candidate = nelder_mead(start, objective);
        const double value = objective(candidate);
        if (value < best_value) {
            best = candidate;
            best_value = value;
        }
    }

    FitResult result;
    result.ff = to_ff(best, p_base_kw);
    result.residual_energy = objective(best) * dt;
    double energy = 0.0;
    for (double v : y) energy += v * v * dt;
    result.response_energy = energy;
    result.canonical = result.residual_energy <= 0.10 * energy;
    return result;
}

std::string write_ff_record(const FlexibilityFunction& ff) {
    char buf[64];
    std::ostringstream out;
    const auto put = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%.15g", v);
        out << key << " = " << buf << '\n';
    };
    put("tau_h", ff.tau_h);
    put("alpha_h", ff.alpha_h);
    put("beta_h", ff.beta_h);
    put("delta", ff.delta);
    put("rebound_ratio", ff.rebound_ratio);
    put("rebound_duration_h", ff.rebound_duration_h);
    put("p_base_kw", ff.p_base_kw);
    return out.str();
}

FlexibilityFunction read_ff_record(std::istream& in) {
    std::map<std::string, double> kv;
    std::string line;
    while (std::getline(in, line)) {
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        std::string key = line.substr(0, eq);
        key.erase(std::remove_if(key.begin(), key.end(), ::isspace), key.end());
        if (key.empty()) continue;
        kv[key] = std::stod(line.substr(eq + 1));
    }
    const auto need = [&](const char* key) {
        const auto it = kv.find(key);
        if (it == kv.end()) throw ConfigError(key, "missing from FF record");
        return it->second;
    };
    FlexibilityFunction ff{need("tau_h"),         need("alpha_h"),
                           need("beta_h"),        need("delta"),
                           need("rebound_ratio"), need("rebound_duration_h"),
                           need("p_base_kw")};
    ff.validate();
    return ff;
}

FlexibilityFunction read_ff_record_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingFile(path);
    return read_ff_record(in);
}

void write_ff_record_file(const std::string& path, const FlexibilityFunction& ff) {
    std::ofstream out(path);
    if (!out) throw MissingFile(path);
    out << write_ff_record(ff);
}

}  // namespace flexlattice
