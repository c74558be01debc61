#include "msgtl/pipeline.hpp"

#include <zlib.h>

#include <bit>
#include <fstream>
#include <sstream>

// Layout reference: docs/registry_format.md

namespace msgtl {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'G', 'T'};

std::uint32_t crc_of(const std::string& bytes, std::size_t from, std::size_t to) {
    uLong crc = crc32(0L, Z_NULL, 0);
    const auto* p = reinterpret_cast<const Bytef*>(bytes.data() + from);
    std::size_t n = to - from;
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

class Writer {
public:
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void str(const std::string& s) {
        u64(s.size());
        out_ += s;
    }

    std::size_t mark() const { return out_.size(); }
    /// CRC32 of everything written since `from`.
    void crc_since(std::size_t from) { u32(crc_of(out_, from, out_.size())); }

    void f64_array(std::span<const double> values) {
        const auto m = mark();
        u64(values.size());
        for (double v : values) f64(v);
        crc_since(m);
    }
    void mask_array(const Mask& mask) {
        const auto m = mark();
        u64(mask.size());
        for (std::size_t i = 0; i < mask.size(); i += 8) {
            std::uint8_t byte = 0;
            for (std::size_t b = 0; b < 8 && i + b < mask.size(); ++b) {
                if (mask[i + b]) byte |= static_cast<std::uint8_t>(1u << b);
            }
            u8(byte);
        }
        crc_since(m);
    }

    std::string& bytes() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& bytes) : in_(bytes) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(in_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str() {
        const std::uint64_t n = u64();
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::size_t mark() const { return pos_; }
    void check_crc(std::size_t from, const std::string& what) {
        const std::uint32_t expected = crc_of(in_, from, pos_);
        if (u32() != expected) throw RegistryChecksumError("registry: checksum mismatch in " + what);
    }

    std::vector<double> f64_array(const std::string& what, std::size_t expected_count) {
        const auto m = mark();
        const std::uint64_t n = u64();
        need_items(n, 8, 4);
        std::vector<double> v(n);
        for (auto& x : v) x = f64();
        check_crc(m, what);
        if (n != expected_count) throw RegistryError("registry: " + what + " has the wrong length");
        return v;
    }
    Mask mask_array(const std::string& what, std::size_t expected_count) {
        const auto m = mark();
        const std::uint64_t n = u64();
        need_items((n + 7) / 8, 1, 4);
        Mask mask(n);
        for (std::size_t i = 0; i < n; i += 8) {
            const std::uint8_t byte = u8();
            for (std::size_t b = 0; b < 8 && i + b < n; ++b) mask[i + b] = (byte >> b) & 1u;
        }
        check_crc(m, what);
        if (n != expected_count) throw RegistryError("registry: " + what + " has the wrong length");
        return mask;
    }

    bool at_end() const { return pos_ == in_.size(); }

private:
    // The header's declared size has already been checked against the real
    // size, so running past the end here means a corrupted length field.
    void need(std::uint64_t n) {
        if (n > in_.size() - pos_) throw RegistryChecksumError("registry: corrupted length field at byte " + std::to_string(pos_));
    }

    void need_items(std::uint64_t n, std::uint64_t item, std::uint64_t extra) {
        const std::uint64_t left = in_.size() - pos_;
        if (left < extra || n > (left - extra) / item) need(left + 1);
    }

    const std::string& in_;
    std::size_t pos_ = 0;
};

constexpr std::size_t kHeaderSize = 4 + 4 + 8 + 8 + 4;

}  // namespace

std::string serialize_registry(const ModelRegistry& registry) {
    Writer w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(registry.format_version);
    w.u64(registry.stages.size());
    w.u64(0);  // total size, patched below
    w.crc_since(4);  // placeholder, recomputed below

    for (const auto& s : registry.stages) {
        const auto meta = w.mark();
        w.u64(s.stage_index);
        w.str(s.name);
        w.u64(s.raw_feature_count);
        w.str(to_kv_text(s.config.to_map()));
        const auto& topo = s.network.topology;
        w.u64(topo.gamma);
        w.u64(topo.omega);
        w.u64(topo.widths.size());
        for (auto width : topo.widths) w.u64(width);
        w.u8(static_cast<std::uint8_t>(s.network.hidden));
        w.u8(static_cast<std::uint8_t>(s.network.output));
        w.u64(s.network.revision);
        const auto& rep = s.report;
        w.u64(rep.stage_index);
        w.u64(rep.transferred_parameters);
        w.u64(rep.fresh_parameters);
        w.f64(rep.pf_ones_fraction);
        w.f64(rep.pb_ones_fraction);
        w.u64(rep.mask_seed);
        w.u64(rep.regions.size());
        for (const auto& r : rep.regions) {
            w.u64(r.rows);
            w.u64(r.cols);
        }
        w.crc_since(meta);

        for (const auto& layer : s.network.layers) {
            const auto lm = w.mark();
            w.u64(layer.transferred.rows);
            w.u64(layer.transferred.cols);
            w.crc_since(lm);
            w.f64_array(layer.live_weights.values());
            w.f64_array(layer.snapshot_weights.values());
            w.f64_array(layer.live_bias);
            w.f64_array(layer.snapshot_bias);
            w.mask_array(layer.pf_weights);
            w.mask_array(layer.pb_weights);
            w.mask_array(layer.pf_bias);
            w.mask_array(layer.pb_bias);
        }
    }

    std::string& out = w.bytes();
    const std::uint64_t total = out.size();
    for (int i = 0; i < 8; ++i) out[16 + i] = static_cast<char>(static_cast<std::uint8_t>(total >> (8 * i)));
    const std::uint32_t crc = crc_of(out, 4, 24);
    for (int i = 0; i < 4; ++i) out[24 + i] = static_cast<char>(static_cast<std::uint8_t>(crc >> (8 * i)));
    return out;
}

ModelRegistry deserialize_registry(const std::string& bytes) {
    if (bytes.size() < 8) throw RegistryTruncatedError("registry: file is too short for a header");
    if (bytes.compare(0, 4, std::string(kMagic, 4)) != 0) throw RegistryError("registry: bad magic (not an MSGT file)");
    Reader header(bytes);
    for (int i = 0; i < 4; ++i) header.u8();
    const std::uint32_t version = header.u32();
    if (version != kRegistryFormatVersion) {
        throw RegistryVersionError("registry: format version " + std::to_string(version) + " is not supported (this build reads version " +
                                   std::to_string(kRegistryFormatVersion) + ")");
    }
    if (bytes.size() < kHeaderSize) throw RegistryTruncatedError("registry: file is too short for a header");
    const std::uint64_t stage_count = header.u64();
    const std::uint64_t total = header.u64();
    header.check_crc(4, "header");
    if (bytes.size() < total) {
        throw RegistryTruncatedError("registry: truncated, " + std::to_string(bytes.size()) + " of " + std::to_string(total) +
                                     " bytes present");
    }
    if (bytes.size() > total) throw RegistryError("registry: " + std::to_string(bytes.size() - total) + " trailing bytes");

    Reader r(bytes);
    for (std::size_t i = 0; i < kHeaderSize; ++i) r.u8();

    ModelRegistry registry;
    registry.format_version = version;
    for (std::uint64_t k = 0; k < stage_count; ++k) {
        const std::string where = "stage record " + std::to_string(k);
        StageEntry s;
        const auto meta = r.mark();
        s.stage_index = r.u64();
        s.name = r.str();
        s.raw_feature_count = r.u64();
        const std::string config_text = r.str();
        Topology topo;
        topo.gamma = r.u64();
        topo.omega = r.u64();
        const std::uint64_t depth = r.u64();
        if (depth > (1u << 20)) throw RegistryChecksumError("registry: implausible layer count in " + where);
        topo.widths.resize(depth);
        for (auto& width : topo.widths) width = r.u64();
        const std::uint8_t hidden = r.u8();
        const std::uint8_t output = r.u8();
        const std::uint64_t revision = r.u64();
        TransferReport rep;
        rep.stage_index = r.u64();
        rep.transferred_parameters = r.u64();
        rep.fresh_parameters = r.u64();
        rep.pf_ones_fraction = r.f64();
        rep.pb_ones_fraction = r.f64();
        rep.mask_seed = r.u64();
        const std::uint64_t regions = r.u64();
        if (regions > depth) throw RegistryChecksumError("registry: implausible region count in " + where);
        rep.regions.resize(regions);
        for (auto& reg : rep.regions) {
            reg.rows = r.u64();
            reg.cols = r.u64();
        }
        r.check_crc(meta, where);

        try {
            s.config = TrainConfig::from_map(parse_kv_text(config_text));
        } catch (const std::exception& e) {
            throw RegistryError("registry: bad config in " + where + ": " + e.what());
        }
        if (hidden > 1 || output > 1) throw RegistryError("registry: unknown activation in " + where);
        s.network = zero_network(topo);
        s.network.hidden = static_cast<Activation>(hidden);
        s.network.output = static_cast<Activation>(output);
        s.network.revision = revision;
        s.report = std::move(rep);

        for (std::size_t l = 0; l < s.network.layers.size(); ++l) {
            auto& layer = s.network.layers[l];
            const std::string lw = where + " layer " + std::to_string(l);
            const auto lm = r.mark();
            layer.transferred.rows = r.u64();
            layer.transferred.cols = r.u64();
            r.check_crc(lm, lw + " region");
            const std::size_t nw = layer.live_weights.size();
            const std::size_t nb = layer.live_bias.size();
            layer.live_weights = Matrix(layer.fan_in(), layer.fan_out(), r.f64_array(lw + " live weights", nw));
            layer.snapshot_weights =
                Matrix(layer.fan_in(), layer.fan_out(), r.f64_array(lw + " snapshot weights", nw));
            layer.live_bias = r.f64_array(lw + " live bias", nb);
            layer.snapshot_bias = r.f64_array(lw + " snapshot bias", nb);
            layer.pf_weights = r.mask_array(lw + " forward mask", nw);
            layer.pb_weights = r.mask_array(lw + " backward mask", nw);
            layer.pf_bias = r.mask_array(lw + " forward bias mask", nb);
            layer.pb_bias = r.mask_array(lw + " backward bias mask", nb);
        }
        try {
            s.network.validate();
        } catch (const std::exception& e) {
            throw RegistryError("registry: " + where + " is inconsistent: " + e.what());
        }
        registry.stages.push_back(std::move(s));
    }
    if (!r.at_end()) throw RegistryError("registry: unread bytes after the last stage");
    return registry;
}

void save_registry(const ModelRegistry& registry, const std::filesystem::path& path) {
    const std::string bytes = serialize_registry(registry);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RegistryError("registry: cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw RegistryError("registry: write to '" + path.string() + "' failed");
}

ModelRegistry load_registry(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw RegistryError("registry: cannot open '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return deserialize_registry(buf.str());
}

}  // namespace msgtl
