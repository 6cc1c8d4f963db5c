#pragma once

// Trial-indexed random streams. Every (seed, trial, substream) triple maps
// to an independent engine state, so results never depend on the order in
// which trials are executed.

#include <cstdint>

namespace rrlab {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

struct StreamId {
    std::uint64_t seed = 0;
    std::uint64_t trial = 0;
    std::uint64_t substream = 0;
};

/// Substream tags used by the library; experiments add their own above 16.
enum Substream : std::uint64_t {
    kCoefficients = 0,
    kGaussianPaths = 1,
    kSynthetic = 2,
};

inline std::uint64_t stream_key(StreamId const& id)
{
    std::uint64_t h = detail::splitmix64(id.seed);
    h = detail::splitmix64(h ^ id.trial);
    return detail::splitmix64(h ^ (id.substream * 0xd1b54a32d192ed03ULL));
}

/// SplitMix64 output sequence started at the stream key. Seeding is a single
/// word, which matters because every trial opens a fresh stream; the
/// generator passes BigCrush and satisfies UniformRandomBitGenerator.
class Engine {
public:
    using result_type = std::uint64_t;

    explicit Engine(std::uint64_t state) : state_(state) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()()
    {
        result_type const out = detail::splitmix64(state_);
        state_ += 0x9e3779b97f4a7c15ULL;
        return out;
    }

private:
    std::uint64_t state_;
};

inline Engine make_engine(StreamId const& id) { return Engine{stream_key(id)}; }

inline Engine make_engine(std::uint64_t seed, std::uint64_t trial, std::uint64_t substream = 0)
{
    return make_engine(StreamId{seed, trial, substream});
}

}  // namespace rrlab
