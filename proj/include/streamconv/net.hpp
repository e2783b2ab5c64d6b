// Declarative network description: an ordered list of LayerSpecs (stem +
// residual stages + head) plus the streaming split point. The spec list is
// lowered to a flat sequence of atomic ops (conv / norm / relu / pool)
// grouped into blocks; executors and the tile planner work on the lowered
// form.
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "streamconv/kernels.hpp"

namespace streamconv {

enum class LayerKind {
    Conv,
    Relu,
    MaxPool,
    FrozenNorm,
    ResidualBlock,
    GlobalPool,
    Linear
};

struct LayerSpec {
    LayerKind kind;
    i64 kernel = 0;  // spatial kinds only
    i64 stride = 1;
    i64 pad = 0;
    i64 in_ch = 0;
    i64 out_ch = 0;
    int stage = 1;  // 1..4; drives the freeze schedule
    bool trainable = true;

    bool spatial() const {
        return kind == LayerKind::Conv || kind == LayerKind::Relu ||
               kind == LayerKind::MaxPool || kind == LayerKind::FrozenNorm ||
               kind == LayerKind::ResidualBlock;
    }
};

struct NetSpec {
    std::vector<LayerSpec> layers;
    i64 split_index = 0;  // layers [0, split_index) run tiled ("streamed")
    i64 input_channels = 3;

    void validate() const {
        if (layers.empty()) throw std::invalid_argument("net: no layers");
        i64 gap_index = -1;
        int prev_stage = 0;
        for (std::size_t i = 0; i < layers.size(); ++i) {
            const LayerSpec& l = layers[i];
            if (l.kind == LayerKind::GlobalPool && gap_index < 0)
                gap_index = static_cast<i64>(i);
            if ((l.kind == LayerKind::Conv ||
                 l.kind == LayerKind::MaxPool) &&
                (l.kernel < 1 || l.stride < 1 || l.pad < 0))
                throw std::invalid_argument("net: bad geometry at layer " +
                                            std::to_string(i));
            if (l.kind == LayerKind::ResidualBlock &&
                (l.stride < 1 || l.in_ch < 1 || l.out_ch < 1))
                throw std::invalid_argument("net: bad residual block at " +
                                            std::to_string(i));
            if (l.spatial()) {
                if (l.stage < prev_stage)
                    throw std::invalid_argument(
                        "net: stage indices must be monotone");
                prev_stage = l.stage;
            }
        }
        if (gap_index < 0)
            throw std::invalid_argument("net: missing global_pool");
        if (split_index < 1 || split_index >= gap_index)
            throw std::invalid_argument(
                "net: split_index must lie in [1, index of global_pool)");
        for (i64 i = 0; i < split_index; ++i)
            if (!layers[i].spatial())
                throw std::invalid_argument(
                    "net: non-spatial layer before split_index");
    }
};

// ---------------------------------------------------------------------------
// lowered form
// ---------------------------------------------------------------------------

struct AtomicOp {
    enum class Kind { Conv, Norm, Relu, Pool } kind;
    i64 k = 1, s = 1, p = 0;
    i64 in_ch = 0, out_ch = 0;
    std::string name;  // parameter prefix ("s2.b0.conv1"); empty if no params
    int stage = 1;
    bool trainable = true;
};

struct BlockIR {
    bool residual = false;
    std::vector<AtomicOp> main;
    std::vector<AtomicOp> shortcut;  // residual only; empty = identity
    int stage = 1;
    std::string name;
    i64 out_ch = 0;
};

struct LoweredNet {
    std::vector<BlockIR> blocks;  // all spatial structure, in order
    i64 split_block = 0;          // blocks [0, split_block) are streamed
    std::string head_name = "head";
    i64 head_in_ch = 0;
    int head_stage = 4;
    bool head_trainable = true;
    i64 input_channels = 3;
};

inline LoweredNet lower(const NetSpec& net) {
    net.validate();
    LoweredNet out;
    out.input_channels = net.input_channels;
    i64 ch = net.input_channels;
    int block_counter_in_stage = 0;
    int cur_stage = -1;
    i64 gap_index = -1;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (!l.spatial()) {
            gap_index = static_cast<i64>(i);
            break;
        }
        if (l.stage != cur_stage) {
            cur_stage = l.stage;
            block_counter_in_stage = 0;
        }
        BlockIR b;
        b.stage = l.stage;
        switch (l.kind) {
            case LayerKind::Conv: {
                b.name = "conv" + std::to_string(i);
                if (i == 0) b.name = "stem.conv";
                b.main.push_back(AtomicOp{AtomicOp::Kind::Conv, l.kernel,
                                          l.stride, l.pad, ch, l.out_ch,
                                          b.name, l.stage, l.trainable});
                ch = l.out_ch;
                break;
            }
            case LayerKind::FrozenNorm: {
                b.name = i <= 2 ? "stem.norm" : "norm" + std::to_string(i);
                b.main.push_back(AtomicOp{AtomicOp::Kind::Norm, 1, 1, 0, ch,
                                          ch, b.name, l.stage, l.trainable});
                break;
            }
            case LayerKind::Relu: {
                b.name = "relu" + std::to_string(i);
                b.main.push_back(AtomicOp{AtomicOp::Kind::Relu, 1, 1, 0, ch,
                                          ch, "", l.stage, false});
                break;
            }
            case LayerKind::MaxPool: {
                b.name = "pool" + std::to_string(i);
                b.main.push_back(AtomicOp{AtomicOp::Kind::Pool, l.kernel,
                                          l.stride, l.pad, ch, ch, "",
                                          l.stage, false});
                break;
            }
            case LayerKind::ResidualBlock: {
                b.residual = true;
                b.name = "s" + std::to_string(l.stage) + ".b" +
                         std::to_string(block_counter_in_stage++);
                const i64 oc = l.out_ch;
                b.main = {
                    AtomicOp{AtomicOp::Kind::Conv, 3, l.stride, 1, ch, oc,
                             b.name + ".conv1", l.stage, l.trainable},
                    AtomicOp{AtomicOp::Kind::Norm, 1, 1, 0, oc, oc,
                             b.name + ".norm1", l.stage, l.trainable},
                    AtomicOp{AtomicOp::Kind::Relu, 1, 1, 0, oc, oc, "",
                             l.stage, false},
                    AtomicOp{AtomicOp::Kind::Conv, 3, 1, 1, oc, oc,
                             b.name + ".conv2", l.stage, l.trainable},
                    AtomicOp{AtomicOp::Kind::Norm, 1, 1, 0, oc, oc,
                             b.name + ".norm2", l.stage, l.trainable},
                };
                if (l.stride != 1 || ch != oc) {
                    b.shortcut = {
                        AtomicOp{AtomicOp::Kind::Conv, 1, l.stride, 0, ch, oc,
                                 b.name + ".sc.conv", l.stage, l.trainable},
                        AtomicOp{AtomicOp::Kind::Norm, 1, 1, 0, oc, oc,
                                 b.name + ".sc.norm", l.stage, l.trainable},
                    };
                }
                ch = oc;
                break;
            }
            default:
                throw std::logic_error("lower: unreachable");
        }
        b.out_ch = ch;
        out.blocks.push_back(std::move(b));
        if (static_cast<i64>(i) + 1 == net.split_index)
            out.split_block = static_cast<i64>(out.blocks.size());
    }
    // tail: global_pool then linear
    if (gap_index < 0 || net.layers[gap_index].kind != LayerKind::GlobalPool)
        throw std::invalid_argument("net: expected global_pool after blocks");
    if (gap_index + 1 >= static_cast<i64>(net.layers.size()) ||
        net.layers[gap_index + 1].kind != LayerKind::Linear)
        throw std::invalid_argument("net: expected linear head after pool");
    const LayerSpec& head = net.layers[gap_index + 1];
    out.head_in_ch = ch;
    out.head_stage = head.stage;
    out.head_trainable = head.trainable;
    if (head.out_ch != 1)
        throw std::invalid_argument("net: head must emit a single logit");
    return out;
}

// Main-path spatial geometry of a block range, flattened for the
// receptive-field recurrences and the shape algebra.
struct GeomOp {
    i64 k = 1, s = 1, p = 0;
};

inline std::vector<GeomOp> flatten_geometry(const LoweredNet& net, i64 lo,
                                            i64 hi) {
    std::vector<GeomOp> ops;
    for (i64 i = lo; i < hi; ++i)
        for (const AtomicOp& op : net.blocks[i].main)
            ops.push_back(GeomOp{op.k, op.s, op.p});
    return ops;
}

// Per-layer output extent composition: floor((in + 2p - k)/s) + 1 per op.
inline i64 out_extent_through(std::span<const GeomOp> ops, i64 in) {
    i64 e = in;
    for (const GeomOp& op : ops) {
        e = conv_out_extent(e, op.k, op.s, op.p);
        if (e < 1)
            throw std::invalid_argument(
                "net: spatial extent collapses to zero");
    }
    return e;
}

inline std::pair<i64, i64> prefix_output_extent(const LoweredNet& net, i64 h,
                                                i64 w) {
    auto ops = flatten_geometry(net, 0, net.split_block);
    return {out_extent_through(ops, h), out_extent_through(ops, w)};
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

struct ResNetConfig {
    std::vector<i64> channels = {16, 32, 64, 128};
    std::vector<int> blocks = {2, 2, 2, 2};
    i64 stem_channels_from(std::size_t) const { return channels.at(0); }
};

// Stem conv 7x7/s2/p3 -> norm -> relu -> maxpool 3x3/s2/p1 -> four stages of
// residual blocks (first block of stages 2..4 downsamples) -> global average
// pool -> single-logit head. split_after_stage picks the streaming boundary
// at a stage boundary; use make_net_spec for arbitrary split indices.
inline NetSpec make_resnet(const ResNetConfig& cfg, int split_after_stage) {
    if (cfg.channels.size() != 4 || cfg.blocks.size() != 4)
        throw std::invalid_argument("make_resnet: need 4 stages");
    NetSpec net;
    net.input_channels = 3;
    net.layers.push_back(
        LayerSpec{LayerKind::Conv, 7, 2, 3, 3, cfg.channels[0], 1, true});
    net.layers.push_back(
        LayerSpec{LayerKind::FrozenNorm, 0, 1, 0, cfg.channels[0],
                  cfg.channels[0], 1, true});
    net.layers.push_back(LayerSpec{LayerKind::Relu, 0, 1, 0, cfg.channels[0],
                                   cfg.channels[0], 1, true});
    net.layers.push_back(LayerSpec{LayerKind::MaxPool, 3, 2, 1,
                                   cfg.channels[0], cfg.channels[0], 1, true});
    i64 ch = cfg.channels[0];
    i64 split_index = -1;
    for (int stage = 1; stage <= 4; ++stage) {
        const i64 oc = cfg.channels[static_cast<std::size_t>(stage - 1)];
        for (int b = 0; b < cfg.blocks[static_cast<std::size_t>(stage - 1)];
             ++b) {
            const i64 stride = (stage > 1 && b == 0) ? 2 : 1;
            net.layers.push_back(LayerSpec{LayerKind::ResidualBlock, 3, stride,
                                           1, ch, oc, stage, true});
            ch = oc;
        }
        if (stage == split_after_stage)
            split_index = static_cast<i64>(net.layers.size());
    }
    net.layers.push_back(
        LayerSpec{LayerKind::GlobalPool, 0, 1, 0, ch, ch, 4, true});
    net.layers.push_back(LayerSpec{LayerKind::Linear, 0, 1, 0, ch, 1, 4, true});
    if (split_index < 0)
        throw std::invalid_argument("make_resnet: bad split_after_stage");
    net.split_index = split_index;
    return net;
}

// Desk-scale default: stages of [2,2,2,2] blocks at 16/32/64/128 channels,
// streamed through stage 2.
inline NetSpec make_desk_net() { return make_resnet(ResNetConfig{}, 2); }

// Full ResNet-34 geometry (64/128/256/512, blocks [3,4,6,3]); the streaming
// boundary sits after the first block of stage 4, where the feature map of a
// 16384^2 input is 512x512x512.
inline NetSpec make_resnet34_analog() {
    ResNetConfig cfg;
    cfg.channels = {64, 128, 256, 512};
    cfg.blocks = {3, 4, 6, 3};
    NetSpec net = make_resnet(cfg, 3);
    net.split_index += 1;  // include stage4.b0 in the streamed prefix
    return net;
}

}  // namespace streamconv
