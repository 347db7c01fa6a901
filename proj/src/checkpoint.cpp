#include "snn/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace snn {

namespace {

constexpr char kMagic[4] = {'S', 'N', 'N', 'B'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, std::uint64_t v) {
    put_u32(out, static_cast<std::uint32_t>(v));
    put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

void put_tensor(std::ostream& out, const Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) put_f32(out, t[i]);
}

struct Reader {
    std::ifstream in;
    explicit Reader(const std::string& path) : in(path, std::ios::binary) {
        if (!in) throw IoError("cannot open checkpoint: " + path);
    }
    void raw(void* dst, std::size_t n) {
        in.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (in.gcount() != static_cast<std::streamsize>(n))
            throw FormatError("checkpoint truncated");
    }
    std::uint8_t u8() {
        std::uint8_t v;
        raw(&v, 1);
        return v;
    }
    std::uint32_t u32() {
        unsigned char b[4];
        raw(b, 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    std::uint64_t u64() {
        const std::uint64_t lo = u32();
        return lo | (static_cast<std::uint64_t>(u32()) << 32);
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    void tensor_into(Tensor& t) {
        // bulk read then byte-swap-free reinterpret: file and host are both
        // little-endian floats
        std::vector<unsigned char> buf(t.size() * 4);
        raw(buf.data(), buf.size());
        for (std::size_t i = 0; i < t.size(); ++i) {
            std::uint32_t bits = static_cast<std::uint32_t>(buf[i * 4]) |
                                 (static_cast<std::uint32_t>(buf[i * 4 + 1]) << 8) |
                                 (static_cast<std::uint32_t>(buf[i * 4 + 2]) << 16) |
                                 (static_cast<std::uint32_t>(buf[i * 4 + 3]) << 24);
            float v;
            std::memcpy(&v, &bits, 4);
            t[i] = v;
        }
    }
};

}  // namespace

void checkpoint_save(const NetworkModel& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    put_u32(out, kVersion);
    put_u8(out, static_cast<std::uint8_t>(model.rule));
    put_u8(out, static_cast<std::uint8_t>(model.mode));
    put_u8(out, model.le_sum_over_time ? 1 : 0);
    put_u32(out, static_cast<std::uint32_t>(model.topo.size()));
    for (const auto& l : model.topo) {
        put_u8(out, l.kind == LayerKind::Conv ? 0 : 1);
        put_u8(out, static_cast<std::uint8_t>(l.neuron));
        if (l.kind == LayerKind::Conv) {
            put_u32(out, static_cast<std::uint32_t>(l.in_c));
            put_u32(out, static_cast<std::uint32_t>(l.in_h));
            put_u32(out, static_cast<std::uint32_t>(l.in_w));
            put_u32(out, static_cast<std::uint32_t>(l.out_c));
            put_u32(out, static_cast<std::uint32_t>(l.ksize));
            put_u32(out, static_cast<std::uint32_t>(l.stride));
        } else {
            put_u32(out, static_cast<std::uint32_t>(l.in_dim));
            put_u32(out, static_cast<std::uint32_t>(l.out_dim));
        }
    }
    put_f32(out, model.lif.decay);
    put_f32(out, model.lif.v_th);
    put_f32(out, model.lif.surrogate_slope);
    put_u32(out, static_cast<std::uint32_t>(model.T));
    put_u64(out, model.seed);
    for (const auto& l : model.layers) {
        put_tensor(out, l.w);
        if (!l.v.empty()) put_tensor(out, l.v);
        put_tensor(out, l.g);
        if (!l.g_v.empty()) put_tensor(out, l.g_v);
    }
    if (!out) throw IoError("write failed: " + path);
}

NetworkModel checkpoint_load(const std::string& path) {
    Reader r(path);
    char magic[4];
    r.raw(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw VersionError("unsupported checkpoint version " + std::to_string(version));

    NetworkModel model;
    const std::uint8_t rule = r.u8();
    if (rule > 3) throw FormatError("bad rule tag");
    model.rule = static_cast<Rule>(rule);
    const std::uint8_t mode = r.u8();
    if (mode > 1) throw FormatError("bad mode tag");
    model.mode = static_cast<Mode>(mode);
    model.le_sum_over_time = r.u8() != 0;

    const std::uint32_t n_layers = r.u32();
    if (n_layers == 0 || n_layers > 1024) throw FormatError("implausible layer count");
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const std::uint8_t kind = r.u8();
        const std::uint8_t neuron = r.u8();
        if (kind > 1 || neuron > 2) throw FormatError("bad layer descriptor");
        if (kind == 0) {
            const std::size_t in_c = r.u32(), in_h = r.u32(), in_w = r.u32();
            const std::size_t out_c = r.u32(), ks = r.u32(), stride = r.u32();
            if (ks == 0 || stride == 0 || ks > in_h || ks > in_w)
                throw FormatError("bad conv descriptor");
            model.topo.push_back(
                LayerSpec::conv(in_c, in_h, in_w, out_c, ks, stride, static_cast<NeuronKind>(neuron)));
        } else {
            const std::size_t in_dim = r.u32(), out_dim = r.u32();
            if (in_dim == 0 || out_dim == 0) throw FormatError("bad fc descriptor");
            model.topo.push_back(
                LayerSpec::fc(in_dim, out_dim, static_cast<NeuronKind>(neuron)));
        }
    }
    model.lif.decay = r.f32();
    model.lif.v_th = r.f32();
    model.lif.surrogate_slope = r.f32();
    model.T = static_cast<int>(r.u32());
    model.seed = r.u64();

    const std::size_t classes = model.topo.back().flat_out();
    model.layers.resize(n_layers);
    for (std::uint32_t i = 0; i < n_layers; ++i) {
        const LayerSpec& spec = model.topo[i];
        LayerParams& p = model.layers[i];
        p.w = Tensor(spec.weight_shape());
        r.tensor_into(p.w);
        if (spec.neuron == NeuronKind::REC) {
            p.v = spec.kind == LayerKind::Fc ? Tensor({spec.out_dim, spec.out_dim})
                                             : Tensor({spec.flat_out()});
            r.tensor_into(p.v);
        }
        if (model.rule == Rule::DFA || model.rule == Rule::LE)
            p.g = Tensor({classes, spec.flat_out()});
        else
            p.g = Tensor(spec.weight_shape());
        r.tensor_into(p.g);
        if (spec.neuron == NeuronKind::REC) {
            p.g_v = Tensor(p.v.shape());
            r.tensor_into(p.g_v);
        }
    }
    // reject trailing bytes
    char extra;
    r.in.read(&extra, 1);
    if (r.in.gcount() != 0) throw FormatError("checkpoint has trailing bytes");

    model.refresh_derived();
    return model;
}

}  // namespace snn
