#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "unirec/tape.hpp"

namespace unirec {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Standard bias-corrected Adam over a fixed parameter list. Moments are kept
// in doubles; step() applies the update and zeroes the gradients.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);

    void step();
    int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    struct Slot {
        Tensor m;
        Tensor v;
    };
    std::vector<Parameter*> params_;
    std::vector<Slot> slots_;
    AdamConfig cfg_;
    int64_t t_ = 0;
};

// Binary checkpoint container: versioned header, then per parameter
// id / shape / raw little-endian doubles. Save + load round-trips bitwise.
void save_checkpoint(const std::string& path, const std::vector<Parameter*>& params);
void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params);

}  // namespace unirec
