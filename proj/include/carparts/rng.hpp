#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace carparts {

// All randomness in the toolkit flows from a single master seed through
// named substreams, so outputs are reproducible regardless of evaluation
// order. Distributions are hand-rolled on top of mt19937_64 because the
// std:: distribution algorithms are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // uniform in [0, 1)
    double uniform()
    {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // uniform integer in [lo, hi] inclusive
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
    {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(engine_() % span);
    }

    // standard normal via Box-Muller
    double normal()
    {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0)
            u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
} // namespace detail

// Derive the seed of a named substream from a master seed. Stable across
// platforms and process runs.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name, std::uint64_t index = 0)
{
    std::uint64_t h = detail::splitmix64(master);
    for (const char c : name)
        h = detail::splitmix64(h ^ static_cast<std::uint64_t>(static_cast<unsigned char>(c)));
    return detail::splitmix64(h ^ detail::splitmix64(index));
}

inline Rng substream(std::uint64_t master, std::string_view name, std::uint64_t index = 0)
{
    return Rng(substream_seed(master, name, index));
}

} // namespace carparts
