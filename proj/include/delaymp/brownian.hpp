#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "core.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "time_grid.hpp"

namespace delaymp {

/// Frozen table of Brownian increments dW^j_i ~ N(0, dt) for a whole path
/// batch.  Increments, not levels, are stored; every consumer of a common-
/// random-number comparison must share one bundle instance.
class BrownianBundle {
  public:
    BrownianBundle(const TimeGrid& grid, int n_paths, int n_noise, std::uint64_t seed,
                   int threads = 1)
        : grid_(grid), n_paths_(n_paths), n_noise_(n_noise), seed_(seed) {
        require(n_paths >= 1, ErrorKind::parameter, "bundle needs at least one path");
        require(n_noise >= 1, ErrorKind::parameter, "bundle needs at least one noise component");
        data_.resize(static_cast<std::size_t>(n_paths) * grid.n_steps * n_noise);
        const double sd = std::sqrt(grid.dt);
        parallel_for(n_paths, threads, [&](int p) {
            NormalStream rng(seed, static_cast<std::uint64_t>(p));
            double* row = &data_[static_cast<std::size_t>(p) * grid_.n_steps * n_noise_];
            for (int i = 0; i < grid_.n_steps; ++i)
                for (int j = 0; j < n_noise_; ++j) row[i * n_noise_ + j] = sd * rng.normal();
        });
    }

    const TimeGrid& grid() const { return grid_; }
    int n_paths() const { return n_paths_; }
    int n_noise() const { return n_noise_; }
    std::uint64_t seed() const { return seed_; }

    /// Increment dW^j over [t_i, t_{i+1}) on path p.
    double increment(int p, int i, int j) const {
        return data_[(static_cast<std::size_t>(p) * grid_.n_steps + i) * n_noise_ + j];
    }

    /// Raw little-endian f64 dump, path-major then step then component.
    void dump(const std::string& file) const {
        std::FILE* f = std::fopen(file.c_str(), "wb");
        require(f != nullptr, ErrorKind::io, "cannot open increment dump file " + file);
        const std::size_t written = std::fwrite(data_.data(), sizeof(double), data_.size(), f);
        std::fclose(f);
        require(written == data_.size(), ErrorKind::io, "short write on increment dump");
    }

  private:
    TimeGrid grid_;
    int n_paths_;
    int n_noise_;
    std::uint64_t seed_;
    std::vector<double> data_;
};

struct MomentCheck {
    bool pass = true;
    bool variance_checked = true;   // false when M < 2
    double worst_mean_z = 0.0;      // max |mean| / sqrt(dt/M)
    double worst_var_z = 0.0;       // max |s^2 - dt| / (dt * sqrt(2/(M-1)))
};

/// Per-increment mean and variance z-scores against N(0, dt); flags any
/// score exceeding `z_max`.
inline MomentCheck empirical_moment_check(const BrownianBundle& b, double z_max = 4.0) {
    MomentCheck out;
    const int m = b.n_paths();
    const double dt = b.grid().dt;
    if (m < 2) out.variance_checked = false;
    for (int i = 0; i < b.grid().n_steps; ++i) {
        for (int j = 0; j < b.n_noise(); ++j) {
            double sum = 0.0, sumsq = 0.0;
            for (int p = 0; p < m; ++p) {
                const double w = b.increment(p, i, j);
                sum += w;
                sumsq += w * w;
            }
            const double mean = sum / m;
            const double zm = std::abs(mean) / std::sqrt(dt / m);
            out.worst_mean_z = std::max(out.worst_mean_z, zm);
            if (m >= 2) {
                const double var = (sumsq - m * mean * mean) / (m - 1);
                const double zv = std::abs(var - dt) / (dt * std::sqrt(2.0 / (m - 1)));
                out.worst_var_z = std::max(out.worst_var_z, zv);
            }
        }
    }
    out.pass = out.worst_mean_z <= z_max && (!out.variance_checked || out.worst_var_z <= z_max);
    return out;
}

}  // namespace delaymp
