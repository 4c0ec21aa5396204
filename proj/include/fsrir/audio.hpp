#pragma once

#include <cstddef>
#include <vector>

namespace fsrir {

// Two-channel time-domain impulse response at a fixed sample rate.
// Channels always have equal length and finite values.
struct BinauralRir {
    std::vector<double> left;
    std::vector<double> right;
    int sample_rate = 16000;

    size_t length() const { return left.size(); }
    void validate() const;  // throws ShapeError / DegenerateInputError

    double energy() const;
};

}  // namespace fsrir
