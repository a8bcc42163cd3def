#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gentron/model.hpp"
#include "gentron/optim.hpp"

namespace gentron {

// Distinct failure modes so callers (and exit codes) can tell a corrupt file
// from a wrong-schema file.
struct BadMagicError : IoError {
    using IoError::IoError;
};
struct BadVersionError : IoError {
    using IoError::IoError;
};
struct TruncatedError : IoError {
    using IoError::IoError;
};
struct SchemaError : IoError {
    using IoError::IoError;
};

inline constexpr char kCheckpointMagic[8] = {'G', 'T', 'R', 'N', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

// Wire layout: 8-byte magic, u32 version, u32 tensor count, then per tensor
// (u16 name length, name bytes, u8 rank, u32 dims..., f32 little-endian
// payload), then a u32-length-prefixed UTF-8 JSON config snapshot.
struct CheckpointTensor {
    std::string name;
    std::vector<int> dims;
    std::vector<float> values;
};

struct Checkpoint {
    std::vector<CheckpointTensor> tensors;
    std::string config_json;

    const CheckpointTensor* find(const std::string& name) const;
};

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

// Model params (in schema order) plus, when an optimizer is supplied, its
// moments as "opt.m.<param>" / "opt.v.<param>" and the step counter "opt.step".
Checkpoint snapshot(const GenTron& model, const AdamW* opt = nullptr);
void save_checkpoint(const GenTron& model, const std::string& path, const AdamW* opt = nullptr);

// Rebuilds the model from the embedded config snapshot.
GenTron load_model(const std::string& path);
GenTron load_model(const Checkpoint& ckpt);

// Strict: every model parameter must appear with its exact shape, and the
// file may not carry extra non-optimizer tensors.
void load_into(GenTron& model, const Checkpoint& ckpt);
void load_optimizer(AdamW& opt, const Checkpoint& ckpt);

} // namespace gentron
