#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hwm/numcore/binio.hpp"
#include "hwm/train/train.hpp"

namespace hwm::train {

using binio::get_f32;
using binio::get_le;
using binio::put_f32;
using binio::put_le;

namespace {

constexpr std::uint32_t kVersion = 1;

void put_record(std::ostream& os, const std::string& name, const num::Tensor<float>& t) {
    put_le(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le(os, static_cast<std::uint32_t>(t.rank()));
    for (const auto d : t.shape()) {
        put_le(os, static_cast<std::uint32_t>(d));
    }
    for (std::int64_t i = 0; i < t.numel(); ++i) {
        put_f32(os, t[i]);
    }
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointHeader& header, const num::ParamStore<float>& store,
                     AdamW* opt) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) {
            throw std::runtime_error("cannot write checkpoint " + tmp);
        }
        binio::put_magic(os, "HWMC");
        put_le(os, kVersion);
        put_le(os, static_cast<std::uint32_t>(header.config.size()));
        os.write(header.config.data(), static_cast<std::streamsize>(header.config.size()));
        put_le(os, header.step);
        put_le(os, header.seed);
        put_le(os, opt ? opt->t() : header.opt_t);
        put_le(os, opt ? opt->skipped() : header.opt_skipped);
        const auto n = static_cast<std::uint32_t>(store.slot_count() * (opt ? 3 : 1));
        put_le(os, n);
        for (int i = 0; i < store.slot_count(); ++i) {
            put_record(os, store.slot(i).name, store.slot(i).value);
        }
        if (opt) {
            for (int i = 0; i < store.slot_count(); ++i) {
                put_record(os, "opt.m." + store.slot(i).name, opt->m()[static_cast<std::size_t>(i)]);
                put_record(os, "opt.v." + store.slot(i).name, opt->v()[static_cast<std::size_t>(i)]);
            }
        }
        if (!os) {
            throw std::runtime_error("write failed for checkpoint " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw std::runtime_error("cannot open checkpoint " + path);
    }
    binio::expect_magic(is, "HWMC", path);
    const auto version = get_le<std::uint32_t>(is);
    if (version != kVersion) {
        throw binio::FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint c;
    c.header.config.resize(get_le<std::uint32_t>(is));
    is.read(c.header.config.data(), static_cast<std::streamsize>(c.header.config.size()));
    c.header.step = get_le<std::uint64_t>(is);
    c.header.seed = get_le<std::uint64_t>(is);
    c.header.opt_t = get_le<std::int64_t>(is);
    c.header.opt_skipped = get_le<std::int64_t>(is);
    const auto n = get_le<std::uint32_t>(is);
    for (std::uint32_t r = 0; r < n; ++r) {
        std::string name(get_le<std::uint32_t>(is), '\0');
        is.read(name.data(), static_cast<std::streamsize>(name.size()));
        num::Shape shape(get_le<std::uint32_t>(is));
        for (auto& d : shape) {
            d = get_le<std::uint32_t>(is);
        }
        num::Tensor<float> t(shape);
        for (std::int64_t i = 0; i < t.numel(); ++i) {
            t[i] = get_f32(is);
        }
        if (!c.records.emplace(std::move(name), std::move(t)).second) {
            throw binio::FormatError(path + ": duplicate record");
        }
    }
    return c;
}

void restore(const Checkpoint& ckpt, num::ParamStore<float>& store, AdamW* opt) {
    if (!store.allocated()) {
        store.allocate();
    }
    auto fetch = [&](const std::string& name, const num::Shape& shape) -> const num::Tensor<float>& {
        const auto it = ckpt.records.find(name);
        if (it == ckpt.records.end()) {
            throw binio::FormatError("checkpoint lacks record '" + name + "'");
        }
        if (it->second.shape() != shape) {
            throw binio::FormatError("checkpoint record '" + name + "' has shape " + num::shape_str(it->second.shape()) +
                                     ", model expects " + num::shape_str(shape));
        }
        return it->second;
    };
    for (int i = 0; i < store.slot_count(); ++i) {
        auto& slot = store.slot(i);
        slot.value = fetch(slot.name, slot.shape);
        if (opt) {
            opt->m()[static_cast<std::size_t>(i)] = fetch("opt.m." + slot.name, slot.shape);
            opt->v()[static_cast<std::size_t>(i)] = fetch("opt.v." + slot.name, slot.shape);
        }
    }
    if (opt) {
        opt->set_counters(ckpt.header.opt_t, ckpt.header.opt_skipped);
    }
}

}  // namespace hwm::train
