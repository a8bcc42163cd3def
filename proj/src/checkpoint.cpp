#include "gentron/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>
#include <unordered_set>

#include "gentron/config.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian; big-endian hosts need byte swaps");

namespace gentron {

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::ifstream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw TruncatedError("checkpoint: truncated file");
    return v;
}

void take_bytes(std::ifstream& in, void* dst, size_t n) {
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (!in) throw TruncatedError("checkpoint: truncated file");
}

} // namespace

const CheckpointTensor* Checkpoint::find(const std::string& name) const {
    for (const auto& t : tensors)
        if (t.name == name) return &t;
    return nullptr;
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("checkpoint: cannot write " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put<uint32_t>(out, kCheckpointVersion);
    put<uint32_t>(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
        if (t.name.size() > std::numeric_limits<uint16_t>::max())
            throw ValueError("checkpoint: tensor name too long");
        if (t.dims.size() > std::numeric_limits<uint8_t>::max())
            throw ValueError("checkpoint: tensor rank too large");
        int64_t n = 1;
        for (int d : t.dims) {
            if (d < 1) throw ValueError("checkpoint: nonpositive dim");
            n *= d;
        }
        if (static_cast<size_t>(n) != t.values.size())
            throw ValueError("checkpoint: dims do not match payload size");
        put<uint16_t>(out, static_cast<uint16_t>(t.name.size()));
        out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
        put<uint8_t>(out, static_cast<uint8_t>(t.dims.size()));
        for (int d : t.dims) put<uint32_t>(out, static_cast<uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.values.data()),
                  static_cast<std::streamsize>(t.values.size() * sizeof(float)));
    }
    put<uint32_t>(out, static_cast<uint32_t>(ckpt.config_json.size()));
    out.write(ckpt.config_json.data(), static_cast<std::streamsize>(ckpt.config_json.size()));
    if (!out) throw IoError("checkpoint: short write to " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open " + path);

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in) throw TruncatedError("checkpoint: truncated header");
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw BadMagicError("checkpoint: bad magic");
    const auto version = take<uint32_t>(in);
    if (version != kCheckpointVersion)
        throw BadVersionError("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    const auto count = take<uint32_t>(in);
    ckpt.tensors.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        CheckpointTensor t;
        const auto name_len = take<uint16_t>(in);
        t.name.resize(name_len);
        take_bytes(in, t.name.data(), name_len);
        const auto rank = take<uint8_t>(in);
        int64_t n = 1;
        for (uint8_t r = 0; r < rank; ++r) {
            const auto d = take<uint32_t>(in);
            if (d == 0 || n > (int64_t(1) << 32)) throw SchemaError("checkpoint: bad dims");
            t.dims.push_back(static_cast<int>(d));
            n *= d;
        }
        t.values.resize(static_cast<size_t>(n));
        take_bytes(in, t.values.data(), static_cast<size_t>(n) * sizeof(float));
        ckpt.tensors.push_back(std::move(t));
    }
    const auto json_len = take<uint32_t>(in);
    ckpt.config_json.resize(json_len);
    take_bytes(in, ckpt.config_json.data(), json_len);
    // anything after the snapshot means the writer and reader disagree
    in.peek();
    if (!in.eof()) throw SchemaError("checkpoint: trailing bytes after config snapshot");
    return ckpt;
}

Checkpoint snapshot(const GenTron& model, const AdamW* opt) {
    Checkpoint ckpt;
    for (const auto& name : model.param_names()) {
        const auto& p = model.param(name);
        ckpt.tensors.push_back({name, p.shape, *p.data});
    }
    if (opt) {
        for (size_t i = 0; i < opt->size(); ++i) {
            ckpt.tensors.push_back({"opt.m." + opt->name(i), opt->m(i).shape, *opt->m(i).data});
            ckpt.tensors.push_back({"opt.v." + opt->name(i), opt->v(i).shape, *opt->v(i).data});
        }
        ckpt.tensors.push_back(
            {"opt.step", {1}, {static_cast<float>(opt->step_count())}});
    }
    ckpt.config_json = model_config_to_json(model.config());
    return ckpt;
}

void save_checkpoint(const GenTron& model, const std::string& path, const AdamW* opt) {
    write_checkpoint(snapshot(model, opt), path);
}

void load_into(GenTron& model, const Checkpoint& ckpt) {
    std::unordered_set<std::string> known;
    for (const auto& name : model.param_names()) {
        known.insert(name);
        const auto* t = ckpt.find(name);
        if (!t) throw SchemaError("checkpoint: missing tensor '" + name + "'");
        auto& p = model.param(name);
        if (t->dims != p.shape) throw SchemaError("checkpoint: shape mismatch for '" + name + "'");
        *p.data = t->values;
    }
    for (const auto& t : ckpt.tensors)
        if (t.name.rfind("opt.", 0) != 0 && !known.count(t.name))
            throw SchemaError("checkpoint: unexpected tensor '" + t.name + "'");
}

GenTron load_model(const Checkpoint& ckpt) {
    GenTron model(model_config_from_json(ckpt.config_json), 0);
    load_into(model, ckpt);
    return model;
}

GenTron load_model(const std::string& path) { return load_model(read_checkpoint(path)); }

void load_optimizer(AdamW& opt, const Checkpoint& ckpt) {
    for (size_t i = 0; i < opt.size(); ++i) {
        const auto* m = ckpt.find("opt.m." + opt.name(i));
        const auto* v = ckpt.find("opt.v." + opt.name(i));
        if (!m || !v) throw SchemaError("checkpoint: missing optimizer moments for '" +
                                        opt.name(i) + "'");
        if (m->dims != opt.m(i).shape || v->dims != opt.v(i).shape)
            throw SchemaError("checkpoint: optimizer moment shape mismatch");
        *opt.m(i).data = m->values;
        *opt.v(i).data = v->values;
    }
    const auto* s = ckpt.find("opt.step");
    if (!s || s->values.size() != 1) throw SchemaError("checkpoint: missing opt.step");
    opt.set_step_count(static_cast<int64_t>(s->values[0]));
}

} // namespace gentron
