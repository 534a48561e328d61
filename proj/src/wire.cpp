#include "fedsim/wire.hpp"

#include <cstring>
#include <string>

#include "fedsim/errors.hpp"

namespace fedsim::wire {

namespace {

constexpr std::uint8_t kTagWeights = 0x01;
constexpr std::uint8_t kTagClassMeans = 0x02;
constexpr std::uint8_t kTagFeatureSet = 0x03;

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u16(std::vector<std::uint8_t>& out, std::uint64_t v, const char* what) {
    if (v > 0xffff) throw EncodingError(std::string(what) + " overflows u16 header field");
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint64_t v, const char* what) {
    if (v > 0xffffffffULL) throw EncodingError(std::string(what) + " overflows u32 header field");
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
}

struct Reader {
    std::span<const std::uint8_t> bytes;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > bytes.size()) throw ParseError("wire message truncated");
    }
    std::uint8_t u8() {
        need(1);
        return bytes[pos++];
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos] | (bytes[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f32() {
        need(4);
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
};

void encode_weights(std::vector<std::uint8_t>& out, const fed::WeightSnapshot& msg) {
    put_u8(out, kTagWeights);
    put_u16(out, msg.backbone.layers.size(), "layer count");
    for (const auto& layer : msg.backbone.layers) {
        put_u16(out, layer.weight.rows, "layer rows");
        put_u16(out, layer.weight.cols, "layer cols");
    }
    if (msg.head) {
        put_u16(out, msg.head->anchors.rows, "head rows");
        put_u16(out, msg.head->anchors.cols, "head cols");
    } else {
        put_u16(out, 0, "head rows");
        put_u16(out, 0, "head cols");
    }
    put_u16(out, msg.head_bias ? msg.head_bias->size() : 0, "bias length");
    for (const auto& layer : msg.backbone.layers) {
        for (double v : layer.weight.data) put_f32(out, v);
        for (double v : layer.bias) put_f32(out, v);
    }
    if (msg.head) {
        for (double v : msg.head->anchors.data) put_f32(out, v);
    }
    if (msg.head_bias) {
        for (double v : *msg.head_bias) put_f32(out, v);
    }
}

void encode_class_means(std::vector<std::uint8_t>& out, const fed::ClassMeanFeatures& msg) {
    put_u8(out, kTagClassMeans);
    put_u16(out, msg.by_class.size(), "class count");
    put_u16(out, msg.dim, "feature dim");
    for (const auto& [class_id, entry] : msg.by_class) {
        if (class_id < 0) throw EncodingError("negative class id");
        put_u16(out, static_cast<std::uint64_t>(class_id), "class id");
        put_u32(out, entry.count, "class sample count");
    }
    for (const auto& [class_id, entry] : msg.by_class) {
        if (entry.mean.size() != msg.dim) throw ShapeError("class mean dim mismatch");
        for (double v : entry.mean) put_f32(out, v);
    }
}

void encode_feature_set(std::vector<std::uint8_t>& out, const fed::LabeledFeatureSet& msg) {
    put_u8(out, kTagFeatureSet);
    put_u32(out, msg.items.size(), "item count");
    put_u16(out, msg.dim, "feature dim");
    for (const auto& item : msg.items) {
        if (item.label < 0) throw EncodingError("negative label");
        put_u16(out, static_cast<std::uint64_t>(item.label), "label");
        if (item.feature.size() != msg.dim) throw ShapeError("feature dim mismatch");
        for (double v : item.feature) put_f32(out, v);
    }
}

}  // namespace

std::vector<std::uint8_t> encode(const fed::RoundMessage& msg) {
    std::vector<std::uint8_t> out;
    std::visit(
        [&out](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, fed::WeightSnapshot>) {
                encode_weights(out, m);
            } else if constexpr (std::is_same_v<T, fed::ClassMeanFeatures>) {
                encode_class_means(out, m);
            } else {
                encode_feature_set(out, m);
            }
        },
        msg);
    return out;
}

namespace {

fed::RoundMessage decode_body(Reader& r) {
    const std::uint8_t tag = r.u8();
    if (tag == kTagWeights) {
        fed::WeightSnapshot msg;
        const std::uint16_t n_layers = r.u16();
        std::vector<std::pair<std::uint16_t, std::uint16_t>> shapes(n_layers);
        for (auto& [rows, cols] : shapes) {
            rows = r.u16();
            cols = r.u16();
        }
        const std::uint16_t head_rows = r.u16();
        const std::uint16_t head_cols = r.u16();
        const std::uint16_t bias_len = r.u16();
        for (auto [rows, cols] : shapes) {
            nn::DenseLayer layer;
            layer.weight = Matrix(rows, cols);
            for (double& v : layer.weight.data) v = r.f32();
            layer.bias = Vector(rows);
            for (double& v : layer.bias) v = r.f32();
            msg.backbone.layers.push_back(std::move(layer));
        }
        if (head_rows > 0) {
            nn::HeadParams head;
            head.anchors = Matrix(head_rows, head_cols);
            for (double& v : head.anchors.data) v = r.f32();
            msg.head = std::move(head);
        }
        if (bias_len > 0) {
            Vector bias(bias_len);
            for (double& v : bias) v = r.f32();
            msg.head_bias = std::move(bias);
        }
        return msg;
    }
    if (tag == kTagClassMeans) {
        fed::ClassMeanFeatures msg;
        const std::uint16_t n_entries = r.u16();
        msg.dim = r.u16();
        std::vector<std::pair<std::uint16_t, std::uint32_t>> meta(n_entries);
        for (auto& [id, count] : meta) {
            id = r.u16();
            count = r.u32();
        }
        for (auto [id, count] : meta) {
            fed::ClassMeanEntry entry;
            entry.count = count;
            entry.mean.resize(msg.dim);
            for (double& v : entry.mean) v = r.f32();
            msg.by_class.emplace(static_cast<int>(id), std::move(entry));
        }
        return msg;
    }
    if (tag == kTagFeatureSet) {
        fed::LabeledFeatureSet msg;
        const std::uint32_t n_items = r.u32();
        msg.dim = r.u16();
        msg.items.reserve(n_items);
        for (std::uint32_t i = 0; i < n_items; ++i) {
            fed::LabeledFeature item;
            item.label = static_cast<int>(r.u16());
            item.feature.resize(msg.dim);
            for (double& v : item.feature) v = r.f32();
            msg.items.push_back(std::move(item));
        }
        return msg;
    }
    throw ParseError("unknown wire tag " + std::to_string(tag));
}

}  // namespace

fed::RoundMessage decode(std::span<const std::uint8_t> bytes) {
    Reader r{bytes};
    fed::RoundMessage msg = decode_body(r);
    if (r.pos != bytes.size()) {
        throw ParseError("wire message has " + std::to_string(bytes.size() - r.pos) +
                         " trailing bytes");
    }
    return msg;
}

MessageSize measure(const fed::RoundMessage& msg) {
    MessageSize size;
    std::visit(
        [&size](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, fed::WeightSnapshot>) {
                size.header_bytes = 1 + 2 + 4 * m.backbone.layers.size() + 4 + 2;
                std::uint64_t scalars = 0;
                for (const auto& layer : m.backbone.layers) {
                    scalars += layer.weight.data.size() + layer.bias.size();
                }
                if (m.head) scalars += m.head->anchors.data.size();
                if (m.head_bias) scalars += m.head_bias->size();
                size.payload_bytes = scalars * 4;
            } else if constexpr (std::is_same_v<T, fed::ClassMeanFeatures>) {
                size.header_bytes = 1 + 2 + 2 + 6 * m.by_class.size();
                size.payload_bytes = static_cast<std::uint64_t>(m.by_class.size()) * m.dim * 4;
            } else {
                size.header_bytes = 1 + 4 + 2;
                size.payload_bytes =
                    static_cast<std::uint64_t>(m.items.size()) * (2 + 4ull * m.dim);
            }
        },
        msg);
    return size;
}

}  // namespace fedsim::wire
