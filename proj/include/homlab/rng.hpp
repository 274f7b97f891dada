/*
   Copyright 2026 The homogenize-lab authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#pragma once

#include <cmath>
#include <cstdint>

namespace homlab {

/// Counter-based generator (Philox4x32-10, Salmon et al., SC 2011).
/// A stream is addressed by a 64-bit key and a 64-bit stream id; the
/// same (key, stream) pair replays the same sequence on any machine,
/// any thread count. Streams with distinct ids are statistically
/// independent, which is what makes trajectory-indexed parallel Monte
/// Carlo reproducible.
class Philox4x32 {
public:
    Philox4x32(uint64_t key, uint64_t stream) {
        key_[0] = static_cast<uint32_t>(key);
        key_[1] = static_cast<uint32_t>(key >> 32);
        counter_[0] = 0;
        counter_[1] = 0;
        counter_[2] = static_cast<uint32_t>(stream);
        counter_[3] = static_cast<uint32_t>(stream >> 32);
        block_pos_ = 4;
        has_spare_ = false;
        spare_ = 0.0;
    }

    uint32_t next_u32() {
        if (block_pos_ == 4) {
            fill_block();
        }
        return block_[block_pos_++];
    }

    uint64_t next_u64() {
        const uint64_t lo = next_u32();
        const uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    /// Uniform on the open interval (0,1), 53-bit resolution.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via the trigonometric Box-Muller transform.
    /// Consumption is fixed: two uniforms per generated pair.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = 2.0 * M_PI * u2;
        spare_ = r * std::sin(phi);
        has_spare_ = true;
        return r * std::cos(phi);
    }

private:
    static constexpr uint32_t kWeyl0 = 0x9E3779B9u;
    static constexpr uint32_t kWeyl1 = 0xBB67AE85u;
    static constexpr uint32_t kMul0 = 0xD2511F53u;
    static constexpr uint32_t kMul1 = 0xCD9E8D57u;

    static void mul_hilo(uint32_t a, uint32_t b, uint32_t* lo, uint32_t* hi) {
        const uint64_t p = static_cast<uint64_t>(a) * b;
        *lo = static_cast<uint32_t>(p);
        *hi = static_cast<uint32_t>(p >> 32);
    }

    void fill_block() {
        uint32_t c[4] = {counter_[0], counter_[1], counter_[2], counter_[3]};
        uint32_t k[2] = {key_[0], key_[1]};
        for (int round = 0; round < 10; ++round) {
            uint32_t lo0, hi0, lo1, hi1;
            mul_hilo(kMul0, c[0], &lo0, &hi0);
            mul_hilo(kMul1, c[2], &lo1, &hi1);
            const uint32_t n0 = hi1 ^ c[1] ^ k[0];
            const uint32_t n1 = lo1;
            const uint32_t n2 = hi0 ^ c[3] ^ k[1];
            const uint32_t n3 = lo0;
            c[0] = n0;
            c[1] = n1;
            c[2] = n2;
            c[3] = n3;
            k[0] += kWeyl0;
            k[1] += kWeyl1;
        }
        block_[0] = c[0];
        block_[1] = c[1];
        block_[2] = c[2];
        block_[3] = c[3];
        block_pos_ = 0;
        // 64-bit position counter; the stream id in counter_[2..3] is
        // never perturbed (2^64 blocks per stream).
        if (++counter_[0] == 0) {
            ++counter_[1];
        }
    }

    uint32_t counter_[4];
    uint32_t key_[2];
    uint32_t block_[4];
    int block_pos_;
    double spare_;
    bool has_spare_;
};

namespace detail {
inline uint64_t splitmix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Derives the stream id for a (experiment, epsilon index, trajectory
/// index) tuple. Sequential splitmix64 absorption: distinct tuples map
/// to distinct, well-separated stream ids with probability 1 - O(2^-64).
inline uint64_t derive_stream(uint64_t experiment_id, uint64_t eps_index,
                              uint64_t traj_index) {
    uint64_t s = detail::splitmix64(0x243F6A8885A308D3ull ^ experiment_id);
    s = detail::splitmix64(s ^ (eps_index + 0x13198A2E03707344ull));
    s = detail::splitmix64(s ^ (traj_index + 0xA4093822299F31D0ull));
    return s;
}

/// A trajectory-addressed stream: stream(master_seed, experiment,
/// eps_index, traj_index). Same tuple, same sequence, regardless of
/// worker count or platform.
inline Philox4x32 make_stream(uint64_t master_seed, uint64_t experiment_id,
                              uint64_t eps_index, uint64_t traj_index) {
    return Philox4x32(master_seed,
                      derive_stream(experiment_id, eps_index, traj_index));
}

}  // namespace homlab
