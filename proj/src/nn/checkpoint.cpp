#include "cortical/nn/checkpoint.hpp"

#include <cmath>
#include <cstring>

#include "binio.hpp"
#include "cortical/common.hpp"

namespace cortical::nn {
namespace {

constexpr char kMagic[4] = {'C', 'K', 'P', 'T'};

using detail::crc32_of;

std::vector<std::uint32_t> layer_dims(const Layer<float>& l) {
    const Shape in = l.input_shape(), out = l.output_shape();
    std::vector<std::uint32_t> d = {static_cast<std::uint32_t>(in.h),  static_cast<std::uint32_t>(in.w),
                                    static_cast<std::uint32_t>(in.c),  static_cast<std::uint32_t>(out.h),
                                    static_cast<std::uint32_t>(out.w), static_cast<std::uint32_t>(out.c)};
    const LayerSpec s = l.spec();
    switch (s.kind) {
        case LayerKind::conv2d:
            d.insert(d.end(), {static_cast<std::uint32_t>(s.filters), static_cast<std::uint32_t>(s.kernel),
                               static_cast<std::uint32_t>(s.stride)});
            break;
        case LayerKind::maxpool:
            d.push_back(s.pad_to ? 1u : 0u);
            d.push_back(s.pad_to ? static_cast<std::uint32_t>(s.pad_to->first) : 0u);
            d.push_back(s.pad_to ? static_cast<std::uint32_t>(s.pad_to->second) : 0u);
            break;
        case LayerKind::dropout:
            d.push_back(static_cast<std::uint32_t>(std::lround(s.rate * 1e6)));
            break;
        case LayerKind::dense:
            d.push_back(static_cast<std::uint32_t>(s.units));
            break;
        case LayerKind::reshape:
            d.insert(d.end(), {static_cast<std::uint32_t>(s.target.h), static_cast<std::uint32_t>(s.target.w),
                               static_cast<std::uint32_t>(s.target.c)});
            break;
        default:
            break;
    }
    return d;
}

LayerSpec spec_from(LayerKind kind, const std::vector<std::uint32_t>& d, std::size_t offset) {
    auto need = [&](std::size_t n) {
        if (d.size() != 6 + n) throw FormatError("checkpoint: wrong dimension count for layer kind", offset);
    };
    switch (kind) {
        case LayerKind::conv2d:
            need(3);
            return LayerSpec::conv(d[6], d[7], d[8]);
        case LayerKind::batchnorm:
            need(0);
            return LayerSpec::batchnorm();
        case LayerKind::relu:
            need(0);
            return LayerSpec::relu();
        case LayerKind::maxpool:
            need(3);
            if (d[6]) return LayerSpec::maxpool(std::pair<std::size_t, std::size_t>{d[7], d[8]});
            return LayerSpec::maxpool();
        case LayerKind::dropout:
            need(1);
            return LayerSpec::dropout(static_cast<double>(d[6]) / 1e6);
        case LayerKind::flatten:
            need(0);
            return LayerSpec::flatten();
        case LayerKind::dense:
            need(1);
            return LayerSpec::dense(d[6]);
        case LayerKind::reshape:
            need(3);
            return LayerSpec::reshape({d[6], d[7], d[8]});
    }
    throw FormatError("checkpoint: unknown layer kind " + std::to_string(static_cast<int>(kind)), offset);
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(Sequential<float>& model) {
    if (model.size() > 0xFFFF) throw InvalidInput("checkpoint: too many layers");
    detail::ByteWriter w;
    for (char c : kMagic) w.put(static_cast<std::uint8_t>(c));
    w.put(kCheckpointVersion);
    w.put(static_cast<std::uint16_t>(model.size()));
    for (std::size_t i = 0; i < model.size(); ++i) {
        auto& l = model.layer(i);
        w.put(static_cast<std::uint8_t>(l.kind()));
        const auto dims = layer_dims(l);
        w.put(static_cast<std::uint8_t>(dims.size()));
        for (auto v : dims) w.put(v);
        const auto ps = l.params();
        w.put(static_cast<std::uint8_t>(ps.size()));
        for (const auto& p : ps) {
            w.put(static_cast<std::uint32_t>(p.value->size()));
            w.array(std::span<const float>(*p.value));
        }
    }
    w.put(crc32_of(w.buf.data(), w.buf.size()));
    return std::move(w.buf);
}

Sequential<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 + 1 + 2 + 4) throw FormatError("checkpoint truncated", bytes.size());
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("checkpoint: bad magic", 0);
    if (bytes[4] != kCheckpointVersion)
        throw UnsupportedVersion("checkpoint version " + std::to_string(bytes[4]) + " (expected 1)");
    const std::size_t body = bytes.size() - 4;
    std::uint32_t stored;
    std::memcpy(&stored, bytes.data() + body, 4);
    if (stored != crc32_of(bytes.data(), body)) throw FormatError("checkpoint: CRC32 mismatch", body);

    detail::ByteReader r(std::span<const std::uint8_t>(bytes.data(), body), "checkpoint");
    for (int i = 0; i < 5; ++i) r.get<std::uint8_t>("header");
    const auto count = r.get<std::uint16_t>("layer count");
    if (count == 0) throw FormatError("checkpoint: no layers", r.pos());

    std::vector<LayerSpec> specs;
    std::vector<std::vector<std::uint32_t>> dims;
    std::vector<std::vector<std::vector<float>>> tensors;
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < count; ++i) {
        offsets.push_back(r.pos());
        const auto kind = static_cast<LayerKind>(r.get<std::uint8_t>("layer kind"));
        const auto nd = r.get<std::uint8_t>("dimension count");
        std::vector<std::uint32_t> d(nd);
        for (auto& v : d) v = r.get<std::uint32_t>("dimension");
        if (nd < 6) throw FormatError("checkpoint: layer has fewer than 6 dimensions", offsets.back());
        specs.push_back(spec_from(kind, d, offsets.back()));
        dims.push_back(std::move(d));
        const auto nt = r.get<std::uint8_t>("tensor count");
        std::vector<std::vector<float>> ts(nt);
        for (auto& t : ts) {
            const auto n = r.get<std::uint32_t>("tensor length");
            r.need(static_cast<std::size_t>(n) * 4, "tensor payload");
            t.resize(n);
            r.array(std::span<float>(t), "tensor payload");
        }
        tensors.push_back(std::move(ts));
    }
    if (r.pos() != body) throw FormatError("checkpoint: trailing bytes before CRC", r.pos());

    Sequential<float> model({dims[0][0], dims[0][1], dims[0][2]}, specs);
    for (std::size_t i = 0; i < count; ++i) {
        const auto& l = model.layer(i);
        if (layer_dims(l) != dims[i]) throw FormatError("checkpoint: layer shape mismatch", offsets[i]);
        auto ps = model.layer(i).params();
        if (ps.size() != tensors[i].size()) throw FormatError("checkpoint: tensor count mismatch", offsets[i]);
        for (std::size_t k = 0; k < ps.size(); ++k) {
            if (ps[k].value->size() != tensors[i][k].size())
                throw FormatError("checkpoint: tensor size mismatch for " + ps[k].name, offsets[i]);
            *ps[k].value = std::move(tensors[i][k]);
        }
    }
    return model;
}

void save_checkpoint(Sequential<float>& model, const std::filesystem::path& path) {
    detail::write_file(path, encode_checkpoint(model));
}

Sequential<float> load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(detail::read_file(path)); }

bool is_untrained(Sequential<float>& model) {
    for (std::size_t i = 0; i < model.size(); ++i) {
        auto* bn = dynamic_cast<BatchNorm<float>*>(&model.layer(i));
        if (!bn) continue;
        for (float v : bn->running_mean)
            if (v != 0.0f) return false;
        for (float v : bn->running_var)
            if (v != 1.0f) return false;
    }
    return true;
}

}  // namespace cortical::nn
