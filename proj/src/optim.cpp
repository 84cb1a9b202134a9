#include "unirec/optim.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "unirec/common.hpp"

namespace unirec {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    slots_.reserve(params_.size());
    for (Parameter* p : params_) {
        slots_.push_back({Tensor::zeros(p->value.shape), Tensor::zeros(p->value.shape)});
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        Slot& s = slots_[i];
        for (int64_t j = 0; j < p.value.numel(); ++j) {
            const double g = p.grad.at(j);
            s.m.at(j) = cfg_.beta1 * s.m.at(j) + (1.0 - cfg_.beta1) * g;
            s.v.at(j) = cfg_.beta2 * s.v.at(j) + (1.0 - cfg_.beta2) * g * g;
            const double mhat = s.m.at(j) / bc1;
            const double vhat = s.v.at(j) / bc2;
            p.value.at(j) -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p.zero_grad();
    }
}

namespace {

constexpr char kMagic[8] = {'U', 'R', 'C', 'K', 'P', 'T', '0', '1'};

void write_u64(std::ofstream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint64_t read_u64(std::ifstream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_u64(os, params.size());
    for (const Parameter* p : params) {
        write_u64(os, p->id.size());
        os.write(p->id.data(), static_cast<std::streamsize>(p->id.size()));
        write_u64(os, p->value.shape.size());
        for (int d : p->value.shape) write_u64(os, static_cast<uint64_t>(d));
        os.write(reinterpret_cast<const char*>(p->value.data.data()),
                 static_cast<std::streamsize>(sizeof(double) * p->value.data.size()));
    }
    if (!os) throw DataError("checkpoint write failed: " + path);
}

void load_checkpoint(const std::string& path, const std::vector<Parameter*>& params) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw DataError("bad checkpoint header: " + path);
    }
    const uint64_t count = read_u64(is);
    if (count != params.size()) {
        throw DataError("checkpoint parameter count mismatch in " + path);
    }
    for (Parameter* p : params) {
        const uint64_t id_len = read_u64(is);
        std::string id(id_len, '\0');
        is.read(id.data(), static_cast<std::streamsize>(id_len));
        if (id != p->id) throw DataError("checkpoint parameter id mismatch: " + id + " vs " + p->id);
        const uint64_t rank = read_u64(is);
        std::vector<int> shape(rank);
        for (uint64_t i = 0; i < rank; ++i) shape[i] = static_cast<int>(read_u64(is));
        if (shape != p->value.shape) throw DataError("checkpoint shape mismatch for " + id);
        is.read(reinterpret_cast<char*>(p->value.data.data()),
                static_cast<std::streamsize>(sizeof(double) * p->value.data.size()));
        if (!is) throw DataError("truncated checkpoint: " + path);
        p->zero_grad();
    }
}

}  // namespace unirec
