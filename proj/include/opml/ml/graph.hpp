#pragma once

#include <opml/ml/ops.hpp>
#include <opml/fpvm/layout.hpp>

#include <cstring>
#include <fstream>
#include <optional>
#include <string_view>

namespace opml::ml {

class GraphError : public Error {
 public:
  using Error::Error;
};

enum class OpKind : std::uint8_t {
  Input = 0,
  Const = 1,
  MatMul = 2,
  BiasAdd = 3,
  ReLU = 4,
  ArgMax = 5,
};

inline constexpr std::uint8_t kOpKindCount = 6;

inline std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::Input: return "Input";
    case OpKind::Const: return "Const";
    case OpKind::MatMul: return "MatMul";
    case OpKind::BiasAdd: return "BiasAdd";
    case OpKind::ReLU: return "ReLU";
    case OpKind::ArgMax: return "ArgMax";
  }
  return "?";
}

inline bool is_compute(OpKind op) { return op != OpKind::Input && op != OpKind::Const; }
inline bool takes_params(OpKind op) { return op == OpKind::MatMul || op == OpKind::BiasAdd; }

/// Node of a computation graph. Compute nodes have exactly one activation
/// input; MatMul and BiasAdd also name a Const node holding their weights.
struct GraphNode {
  std::uint32_t id = 0;
  OpKind op = OpKind::Input;
  std::vector<std::uint32_t> input_ids;
  std::optional<std::uint32_t> params;
  std::optional<FixedTensor> value;                // Const payload
  std::vector<std::uint32_t> input_shape;          // Input only

  bool operator==(const GraphNode&) const = default;
};

// Node outputs live in 128 KiB fields, one per node id, of a 2^27-leaf tree.
inline constexpr std::uint32_t kMaxNodes = 1u << 13;

class CompGraph {
 public:
  CompGraph() = default;
  CompGraph(std::vector<GraphNode> nodes, std::uint32_t output_id) : nodes_(std::move(nodes)), output_id_(output_id) {
    validate();
  }

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const GraphNode& node(std::uint32_t id) const { return nodes_.at(id); }
  std::size_t size() const { return nodes_.size(); }
  std::uint32_t output_id() const { return output_id_; }
  std::uint32_t input_id() const { return input_id_; }
  const std::vector<std::uint32_t>& shape(std::uint32_t id) const { return shapes_.at(id); }
  std::vector<std::uint32_t> const_ids() const {
    std::vector<std::uint32_t> out;
    for (const auto& n : nodes_) {
      if (n.op == OpKind::Const) out.push_back(n.id);
    }
    return out;
  }
  std::size_t compute_node_count() const {
    std::size_t c = 0;
    for (const auto& n : nodes_) c += is_compute(n.op) ? 1 : 0;
    return c;
  }

  bool operator==(const CompGraph& o) const { return nodes_ == o.nodes_ && output_id_ == o.output_id_; }

  void check_input(const FixedTensor& x) const {
    if (x.shape != shapes_.at(input_id_)) throw ShapeError("input shape does not match the graph's Input node");
  }

 private:
  void validate() {
    if (nodes_.empty()) throw GraphError("graph has no nodes");
    if (nodes_.size() > kMaxNodes) throw GraphError("graph has too many nodes");
    if (output_id_ >= nodes_.size()) throw GraphError("output id out of range");
    shapes_.assign(nodes_.size(), {});
    bool have_input = false;
    for (std::uint32_t i = 0; i < nodes_.size(); ++i) {
      const GraphNode& n = nodes_[i];
      const std::string where = "node " + std::to_string(i) + " (" + std::string(op_name(n.op)) + "): ";
      if (n.id != i) throw GraphError(where + "ids must equal positions in topological order");
      if (static_cast<std::uint8_t>(n.op) >= kOpKindCount) throw GraphError(where + "unknown op");
      if (n.op != OpKind::Const && n.value) throw GraphError(where + "only Const nodes carry a value");
      if (n.op != OpKind::Input && !n.input_shape.empty()) throw GraphError(where + "only Input nodes declare a shape");
      if (takes_params(n.op) != n.params.has_value()) throw GraphError(where + "params presence mismatch");
      switch (n.op) {
        case OpKind::Input:
          if (have_input) throw GraphError(where + "graph must have exactly one Input node");
          have_input = true;
          input_id_ = i;
          if (!n.input_ids.empty()) throw GraphError(where + "Input takes no inputs");
          if (n.input_shape.size() != 2) throw ShapeError(where + "Input must be rank 2");
          FixedTensor::element_count(n.input_shape);
          shapes_[i] = n.input_shape;
          break;
        case OpKind::Const:
          if (!n.input_ids.empty()) throw GraphError(where + "Const takes no inputs");
          if (!n.value) throw GraphError(where + "Const without value");
          shapes_[i] = n.value->shape;
          break;
        default: {
          if (n.input_ids.size() != 1) throw GraphError(where + "compute nodes take exactly one input");
          const std::uint32_t u = n.input_ids[0];
          if (u >= i) throw GraphError(where + "input does not precede node");
          const auto& xs = shapes_[u];
          if (xs.size() != 2) throw ShapeError(where + "activation must be rank 2");
          if (n.params) {
            const std::uint32_t p = *n.params;
            if (p >= i || nodes_[p].op != OpKind::Const) throw GraphError(where + "params must name an earlier Const");
            const auto& ps = shapes_[p];
            if (n.op == OpKind::MatMul) {
              if (ps.size() != 2 || ps[0] != xs[1]) throw ShapeError(where + "weight shape incompatible");
              if (xs[1] > kMaxInnerDim) throw ShapeError(where + "inner dimension exceeds 2^14");
              shapes_[i] = {xs[0], ps[1]};
            } else {
              if (ps.size() != 1 || ps[0] != xs[1]) throw ShapeError(where + "bias shape incompatible");
              shapes_[i] = xs;
            }
          } else if (n.op == OpKind::ReLU) {
            shapes_[i] = xs;
          } else {
            shapes_[i] = {1};
          }
        }
      }
      const std::uint64_t bytes = 4 + 4 * shapes_[i].size() + 4 * std::uint64_t{FixedTensor::element_count(shapes_[i])};
      if (bytes > layout::kTensorFieldBytes) throw ShapeError(where + "tensor exceeds 128 KiB field");
    }
    if (!have_input) throw GraphError("graph has no Input node");
  }

  std::vector<GraphNode> nodes_;
  std::uint32_t output_id_ = 0;
  std::uint32_t input_id_ = 0;
  std::vector<std::vector<std::uint32_t>> shapes_;
};

/// Builder for hand-written graphs and fixtures.
class GraphBuilder {
 public:
  std::uint32_t input(std::vector<std::uint32_t> shape) {
    GraphNode n;
    n.op = OpKind::Input;
    n.input_shape = std::move(shape);
    return push(std::move(n));
  }
  std::uint32_t constant(FixedTensor value) {
    GraphNode n;
    n.op = OpKind::Const;
    n.value = std::move(value);
    return push(std::move(n));
  }
  std::uint32_t matmul(std::uint32_t x, std::uint32_t w) { return compute(OpKind::MatMul, x, w); }
  std::uint32_t bias_add(std::uint32_t x, std::uint32_t b) { return compute(OpKind::BiasAdd, x, b); }
  std::uint32_t relu(std::uint32_t x) { return compute(OpKind::ReLU, x, std::nullopt); }
  std::uint32_t argmax(std::uint32_t x) { return compute(OpKind::ArgMax, x, std::nullopt); }

  /// Dense layer: matmul by a fresh weight Const, then bias_add.
  std::uint32_t dense(std::uint32_t x, FixedTensor w, FixedTensor b) {
    const std::uint32_t wid = constant(std::move(w));
    const std::uint32_t bid = constant(std::move(b));
    return bias_add(matmul(x, wid), bid);
  }

  CompGraph build(std::uint32_t output_id) { return CompGraph(std::move(nodes_), output_id); }
  CompGraph build() {
    const auto last = static_cast<std::uint32_t>(nodes_.size() - 1);
    return build(last);
  }

 private:
  std::uint32_t compute(OpKind op, std::uint32_t x, std::optional<std::uint32_t> params) {
    GraphNode n;
    n.op = op;
    n.input_ids = {x};
    n.params = params;
    return push(std::move(n));
  }
  std::uint32_t push(GraphNode n) {
    n.id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(std::move(n));
    return nodes_.back().id;
  }

  std::vector<GraphNode> nodes_;
};

/// Evaluates one compute node on concrete operands.
inline FixedTensor apply_op(OpKind op, const FixedTensor& x, const FixedTensor* params, unsigned threads = 1) {
  switch (op) {
    case OpKind::MatMul: return threads > 1 ? matmul_fx_parallel(x, *params, threads) : matmul_fx(x, *params);
    case OpKind::BiasAdd: return bias_add_fx(x, *params);
    case OpKind::ReLU: return relu_fx(x);
    case OpKind::ArgMax: return argmax_fx(x);
    default: throw GraphError("apply_op: not a compute op");
  }
}

// Model file:
//   "OPML" | u16 version=1 | u16 frac=16 | u32 node_count | u32 output_id
//   node_count records:
//     u8 op | u8 n_inputs | u32 inputs[n_inputs] | u32 params (0xFFFFFFFF = none)
//     Input:  u8 rank | u32 dims[rank]
//     Const:  u32 blob_offset | u32 blob_len
//   u32 blob_len | blob (concatenated tensor serializations)
inline constexpr std::uint16_t kModelFormatVersion = 1;
inline constexpr std::uint32_t kNoParams = 0xFFFF'FFFF;

inline Bytes serialize_model(const CompGraph& g) {
  Bytes out{'O', 'P', 'M', 'L'};
  put_u16(out, kModelFormatVersion);
  put_u16(out, FixedTensor::frac);
  put_u32(out, static_cast<std::uint32_t>(g.size()));
  put_u32(out, g.output_id());
  Bytes blob;
  for (const auto& n : g.nodes()) {
    put_u8(out, static_cast<std::uint8_t>(n.op));
    put_u8(out, static_cast<std::uint8_t>(n.input_ids.size()));
    for (auto u : n.input_ids) put_u32(out, u);
    put_u32(out, n.params.value_or(kNoParams));
    if (n.op == OpKind::Input) {
      put_u8(out, static_cast<std::uint8_t>(n.input_shape.size()));
      for (auto d : n.input_shape) put_u32(out, d);
    } else if (n.op == OpKind::Const) {
      const Bytes t = n.value->serialize();
      put_u32(out, static_cast<std::uint32_t>(blob.size()));
      put_u32(out, static_cast<std::uint32_t>(t.size()));
      blob.insert(blob.end(), t.begin(), t.end());
    }
  }
  put_u32(out, static_cast<std::uint32_t>(blob.size()));
  out.insert(out.end(), blob.begin(), blob.end());
  return out;
}

/// All-or-nothing: throws ParseError (with byte offset), GraphError or
/// ShapeError and never returns a partial graph.
inline CompGraph deserialize_model(ByteView bytes) {
  ByteReader in(bytes);
  const auto magic = in.take(4);
  if (std::memcmp(magic.data(), "OPML", 4) != 0) throw ParseError(0, "bad model magic");
  if (in.u16() != kModelFormatVersion) throw ParseError(4, "unsupported model version");
  if (in.u16() != FixedTensor::frac) throw ParseError(6, "unsupported fixed-point fraction bits");
  const std::uint32_t count = in.u32();
  if (count == 0 || count > kMaxNodes) throw ParseError(8, "node count out of range");
  const std::uint32_t output_id = in.u32();

  struct Pending {
    GraphNode node;
    std::uint32_t blob_off = 0, blob_len = 0;
    std::size_t record_offset = 0;
  };
  std::vector<Pending> pending(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Pending& p = pending[i];
    p.record_offset = in.offset();
    p.node.id = i;
    const std::uint8_t op = in.u8();
    if (op >= kOpKindCount) throw ParseError(p.record_offset, "unknown op code");
    p.node.op = static_cast<OpKind>(op);
    const std::uint8_t n_inputs = in.u8();
    for (std::uint8_t k = 0; k < n_inputs; ++k) p.node.input_ids.push_back(in.u32());
    const std::uint32_t params = in.u32();
    if (params != kNoParams) p.node.params = params;
    if (p.node.op == OpKind::Input) {
      const std::uint8_t rank = in.u8();
      for (std::uint8_t k = 0; k < rank; ++k) p.node.input_shape.push_back(in.u32());
    } else if (p.node.op == OpKind::Const) {
      p.blob_off = in.u32();
      p.blob_len = in.u32();
    }
  }
  const std::uint32_t blob_len = in.u32();
  const std::size_t blob_start = in.offset();
  const ByteView blob = in.take(blob_len);
  in.expect_end();

  std::vector<GraphNode> nodes;
  nodes.reserve(count);
  for (auto& p : pending) {
    if (p.node.op == OpKind::Const) {
      if (std::uint64_t{p.blob_off} + p.blob_len > blob.size()) throw ParseError(p.record_offset, "const blob range out of bounds");
      try {
        p.node.value = FixedTensor::deserialize(blob.subspan(p.blob_off, p.blob_len));
      } catch (const ParseError& e) {
        throw ParseError(blob_start + p.blob_off + e.offset(), "bad const tensor");
      }
    }
    nodes.push_back(std::move(p.node));
  }
  return CompGraph(std::move(nodes), output_id);
}

inline Bytes read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (f.bad()) throw IoError("read failed: " + path);
  return data;
}

inline void write_file(const std::string& path, ByteView data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create " + path);
  f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!f) throw IoError("write failed: " + path);
}

inline CompGraph load_model(const std::string& path) { return deserialize_model(read_file(path)); }
inline void save_model(const CompGraph& g, const std::string& path) { write_file(path, serialize_model(g)); }
inline FixedTensor load_tensor(const std::string& path) { return FixedTensor::deserialize(read_file(path)); }
inline void save_tensor(const FixedTensor& t, const std::string& path) { write_file(path, t.serialize()); }

}  // namespace opml::ml
