#pragma once

// Preprocessing plan optimizer: enumerates legal orderings of a linear
// preprocessing chain, prunes with rewrite rules, and picks the cheapest
// plan under an arithmetic-operation cost model.
//
// Geometry is held once per graph (resize target and crop box in resized
// coordinates). Concrete op parameters are derived from it by materialize(),
// so a Crop moved ahead of the Resize samples exactly the same source
// positions as the original order.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "visinf/image.hpp"
#include "visinf/jpegdec.hpp"

namespace visinf::dag {

enum class OpKind { Decode, Resize, Crop, ConvertDtype, Normalize, ChannelReorder, Fused };
enum class DType { U8, F32 };
enum class Layout { HWC, CHW };

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::Decode: return "Decode";
    case OpKind::Resize: return "Resize";
    case OpKind::Crop: return "Crop";
    case OpKind::ConvertDtype: return "ConvertDtype";
    case OpKind::Normalize: return "Normalize";
    case OpKind::ChannelReorder: return "ChannelReorder";
    case OpKind::Fused: return "Fused";
  }
  return "?";
}

inline OpKind op_kind_from_string(const std::string& s) {
  for (auto k : {OpKind::Decode, OpKind::Resize, OpKind::Crop, OpKind::ConvertDtype, OpKind::Normalize,
                 OpKind::ChannelReorder, OpKind::Fused}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown op kind '" + s + "'");
}

inline const char* to_string(DType d) { return d == DType::U8 ? "U8" : "F32"; }
inline const char* to_string(Layout l) { return l == Layout::HWC ? "HWC" : "CHW"; }

// Byte-width proxy used by the cost model.
inline int dtype_weight(DType d) { return d == DType::U8 ? 1 : 4; }

inline bool is_fusable(OpKind k) {
  return k == OpKind::ConvertDtype || k == OpKind::Normalize || k == OpKind::ChannelReorder;
}

struct Shape {
  int h{0};
  int w{0};
  int c{3};
  Layout layout{Layout::HWC};

  std::int64_t elements() const { return std::int64_t(h) * w * c; }
  std::int64_t pixels() const { return std::int64_t(h) * w; }
  bool operator==(const Shape&) const = default;
};

struct CropBox {
  int top{0};
  int left{0};
  int height{0};
  int width{0};
  bool operator==(const CropBox&) const = default;
};

// Output row i samples source row (i + pre_y + 0.5) * scale_y - 0.5, clamped
// to [0, src_h - 1]; the input tensor starts at source row origin_y.
struct ResizeParams {
  int out_h{0};
  int out_w{0};
  double scale_y{1.0};
  double scale_x{1.0};
  int pre_y{0};
  int pre_x{0};
  int origin_y{0};
  int origin_x{0};
  int src_h{0};
  int src_w{0};
  bool operator==(const ResizeParams&) const = default;
};

struct PreprocOp {
  OpKind kind{OpKind::Decode};
  std::vector<OpKind> members;  // Fused only
  DType in_dtype{DType::U8};
  DType out_dtype{DType::U8};
  Shape in_shape;
  Shape out_shape;
  ResizeParams resize;  // Resize only
  CropBox crop;         // Crop only, in input-tensor coordinates

  bool operator==(const PreprocOp&) const = default;
};

struct Geometry {
  std::optional<std::array<int, 2>> resize;  // (h, w) of the full resized image
  std::optional<CropBox> crop;              // in resized coordinates (source if no resize)
  bool operator==(const Geometry&) const = default;
};

struct NormalizeParams {
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
  float scale{1.0f / 255.0f};
  bool operator==(const NormalizeParams&) const = default;
};

struct PreprocGraph {
  std::vector<PreprocOp> ops;
  Shape source_shape;
  Shape target_shape;
  Geometry geometry;
  NormalizeParams norm;

  bool operator==(const PreprocGraph&) const = default;
};

struct PlanCost {
  std::int64_t arithmetic_ops{0};
  auto operator<=>(const PlanCost&) const = default;
};

// One step of a plan: a single op, or a fused group when size() > 1.
using Step = std::vector<OpKind>;
using Structure = std::vector<Step>;

class GraphError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

inline CropBox source_window(const Shape& src, const Geometry& g) {
  // Crop window of the resized image mapped back to source pixels, rounded
  // outward and widened to the bilinear footprint of every output sample.
  const auto [rh, rw] = *g.resize;
  const auto& box = *g.crop;
  const double sy = double(src.h) / rh;
  const double sx = double(src.w) / rw;
  const auto axis = [](int lo, int len, double s, int extent) {
    const int hi = lo + len;
    int a = static_cast<int>(std::floor(lo * s));
    int b = static_cast<int>(std::ceil(hi * s));
    const double first = std::clamp((lo + 0.5) * s - 0.5, 0.0, double(extent - 1));
    const double last = std::clamp((hi - 1 + 0.5) * s - 0.5, 0.0, double(extent - 1));
    a = std::min(a, static_cast<int>(std::floor(first)));
    b = std::max(b, static_cast<int>(std::floor(last)) + 2);
    return std::array<int, 2>{std::max(a, 0), std::min(b, extent)};
  };
  const auto ys = axis(box.top, box.height, sy, src.h);
  const auto xs = axis(box.left, box.width, sx, src.w);
  return {ys[0], xs[0], ys[1] - ys[0], xs[1] - xs[0]};
}

}  // namespace detail

// Builds a fully-annotated graph for a plan structure. Throws GraphError on
// an illegal ordering.
inline PreprocGraph materialize(const Structure& structure, const Shape& source, const Geometry& geometry,
                                const NormalizeParams& norm = {}) {
  if (source.h <= 0 || source.w <= 0 || source.c <= 0) throw GraphError("source shape must be positive");
  PreprocGraph g;
  g.source_shape = source;
  g.geometry = geometry;
  g.norm = norm;
  if (geometry.resize && ((*geometry.resize)[0] <= 0 || (*geometry.resize)[1] <= 0)) {
    throw GraphError("resize target must be positive");
  }
  if (geometry.crop) {
    const auto& b = *geometry.crop;
    const int lim_h = geometry.resize ? (*geometry.resize)[0] : source.h;
    const int lim_w = geometry.resize ? (*geometry.resize)[1] : source.w;
    if (b.top < 0 || b.left < 0 || b.height <= 0 || b.width <= 0 || b.top + b.height > lim_h ||
        b.left + b.width > lim_w) {
      throw GraphError("crop box outside image");
    }
  }

  Shape cur = source;
  DType dtype = DType::U8;
  bool decoded = false;
  bool resized = false;
  bool cropped = false;
  bool converted = false;
  int decode_count = 0;
  std::optional<CropBox> window;  // set when the crop runs before the resize

  const auto apply = [&](OpKind k, PreprocOp& op) {
    switch (k) {
      case OpKind::Decode:
        if (decode_count++ > 0) throw GraphError("graph must contain exactly one Decode");
        decoded = true;
        cur = source;
        cur.layout = Layout::HWC;
        dtype = DType::U8;
        return;
      case OpKind::Resize: {
        if (!geometry.resize) throw GraphError("Resize present but geometry has no resize target");
        if (resized) throw GraphError("duplicate Resize");
        if (cur.layout != Layout::HWC) throw GraphError("Resize requires HWC layout");
        const auto [rh, rw] = *geometry.resize;
        auto& p = op.resize;
        p.scale_y = double(source.h) / rh;
        p.scale_x = double(source.w) / rw;
        p.src_h = source.h;
        p.src_w = source.w;
        if (cropped && geometry.crop) {
          p.pre_y = geometry.crop->top;
          p.pre_x = geometry.crop->left;
          p.origin_y = window->top;
          p.origin_x = window->left;
          p.out_h = geometry.crop->height;
          p.out_w = geometry.crop->width;
        } else {
          p.out_h = rh;
          p.out_w = rw;
        }
        cur.h = p.out_h;
        cur.w = p.out_w;
        resized = true;
        return;
      }
      case OpKind::Crop: {
        if (!geometry.crop) throw GraphError("Crop present but geometry has no crop box");
        if (cropped) throw GraphError("duplicate Crop");
        if (cur.layout != Layout::HWC) throw GraphError("Crop requires HWC layout");
        if (geometry.resize && !resized) {
          window = detail::source_window(source, geometry);
          op.crop = *window;
        } else {
          op.crop = *geometry.crop;
        }
        cur.h = op.crop.height;
        cur.w = op.crop.width;
        cropped = true;
        return;
      }
      case OpKind::ConvertDtype:
        if (dtype != DType::U8) throw GraphError("ConvertDtype expects U8 input");
        dtype = DType::F32;
        converted = true;
        return;
      case OpKind::Normalize:
        if (dtype != DType::F32) throw GraphError("Normalize requires F32 input (ConvertDtype must precede it)");
        return;
      case OpKind::ChannelReorder:
        if (cur.layout != Layout::HWC) throw GraphError("duplicate ChannelReorder");
        if ((geometry.resize && !resized) || (geometry.crop && !cropped)) {
          throw GraphError("ChannelReorder must follow all spatial ops");
        }
        cur.layout = Layout::CHW;
        return;
      case OpKind::Fused:
        throw GraphError("nested fusion");
    }
  };

  for (std::size_t i = 0; i < structure.size(); ++i) {
    const Step& step = structure[i];
    if (step.empty()) throw GraphError("empty step");
    if (i == 0 && step.front() != OpKind::Decode) throw GraphError("Decode must be first");
    if (i > 0 && !decoded) throw GraphError("Decode must be first");
    PreprocOp op;
    op.in_dtype = dtype;
    op.in_shape = cur;
    if (step.size() == 1) {
      op.kind = step.front();
      apply(op.kind, op);
    } else {
      op.kind = OpKind::Fused;
      op.members = step;
      for (auto k : step) {
        if (!is_fusable(k)) throw GraphError(std::string("op ") + to_string(k) + " cannot be fused");
        apply(k, op);
      }
    }
    op.out_dtype = dtype;
    op.out_shape = cur;
    g.ops.push_back(std::move(op));
  }

  if (decode_count != 1) throw GraphError("graph must contain exactly one Decode");
  if (geometry.resize && !resized) throw GraphError("geometry requires a Resize op");
  if (geometry.crop && !cropped) throw GraphError("geometry requires a Crop op");
  if (!converted || dtype != DType::F32 || cur.layout != Layout::CHW) {
    throw GraphError("graph output must be F32 channels-first");
  }
  g.target_shape = cur;
  return g;
}

inline Structure structure_of(const PreprocGraph& g) {
  Structure s;
  for (const auto& op : g.ops) s.push_back(op.kind == OpKind::Fused ? op.members : Step{op.kind});
  return s;
}

// Re-derives a graph from its own structure and checks it matches.
inline void validate(const PreprocGraph& g) {
  const auto rebuilt = materialize(structure_of(g), g.source_shape, g.geometry, g.norm);
  if (!(rebuilt == g)) throw GraphError("graph annotations inconsistent with its op order");
}

// Decode -> Resize (short side to `resize_short`) -> centre Crop
// (`crop_h` x `crop_w`, omitted when it would be the identity) ->
// ConvertDtype -> Normalize -> ChannelReorder.
inline PreprocGraph canonical_pipeline(int src_h, int src_w, int resize_short, int crop_h, int crop_w,
                                       const NormalizeParams& norm = {}) {
  if (src_h <= 0 || src_w <= 0 || resize_short <= 0 || crop_h <= 0 || crop_w <= 0) {
    throw GraphError("dimensions must be positive");
  }
  const double s = double(resize_short) / std::min(src_h, src_w);
  const int rh = std::max(resize_short, static_cast<int>(std::lround(src_h * s)));
  const int rw = std::max(resize_short, static_cast<int>(std::lround(src_w * s)));
  if (crop_h > rh || crop_w > rw) throw GraphError("crop larger than resized image");
  Geometry geo;
  geo.resize = std::array<int, 2>{rh, rw};
  Structure st{{OpKind::Decode}, {OpKind::Resize}};
  if (crop_h < rh || crop_w < rw) {
    geo.crop = CropBox{(rh - crop_h) / 2, (rw - crop_w) / 2, crop_h, crop_w};
    st.push_back({OpKind::Crop});
  }
  st.push_back({OpKind::ConvertDtype});
  st.push_back({OpKind::Normalize});
  st.push_back({OpKind::ChannelReorder});
  return materialize(st, Shape{src_h, src_w, 3, Layout::HWC}, geo, norm);
}

inline PreprocGraph canonical_pipeline(int src_h, int src_w, int resize_short, int crop,
                                       const NormalizeParams& norm = {}) {
  return canonical_pipeline(src_h, src_w, resize_short, crop, crop, norm);
}

// Per-op arithmetic counts per output element.
inline int op_count(OpKind k) {
  switch (k) {
    case OpKind::Resize: return 8;
    case OpKind::ConvertDtype: return 1;
    case OpKind::Normalize: return 3;
    case OpKind::ChannelReorder: return 1;
    case OpKind::Crop:
    case OpKind::Decode:
    case OpKind::Fused: return 0;
  }
  return 0;
}

inline std::int64_t op_cost(const PreprocOp& op) {
  if (op.kind == OpKind::Decode || op.kind == OpKind::Crop) return 0;
  const std::int64_t elems = op.out_shape.elements();
  if (op.kind == OpKind::Fused) {
    // Same total as the members run one by one, each at its own dtype.
    std::int64_t total = 0;
    DType d = op.in_dtype;
    for (auto k : op.members) {
      if (k == OpKind::ConvertDtype) d = DType::F32;
      total += std::int64_t(op_count(k)) * elems * dtype_weight(d);
    }
    return total;
  }
  const DType d = op.kind == OpKind::Resize ? op.in_dtype : op.out_dtype;
  return std::int64_t(op_count(op.kind)) * elems * dtype_weight(d);
}

inline PlanCost plan_cost(const PreprocGraph& g) {
  PlanCost c;
  for (const auto& op : g.ops) c.arithmetic_ops += op_cost(op);
  return c;
}

inline std::string op_token(const PreprocOp& op) {
  std::string s;
  if (op.kind == OpKind::Fused) {
    s += "Fused(";
    for (std::size_t j = 0; j < op.members.size(); ++j) {
      if (j) s += '+';
      s += to_string(op.members[j]);
    }
    s += ')';
  } else {
    s += to_string(op.kind);
  }
  return s + ':' + to_string(op.in_dtype);
}

// Deterministic textual form of a plan's op order, fusion and dtypes.
inline std::string plan_signature(const PreprocGraph& g) {
  std::string s;
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    if (i) s += '|';
    s += op_token(g.ops[i]);
  }
  return s;
}

namespace detail {

// Splits every maximal run of adjacent fusable single ops into groups in
// all 2^(L-1) ways.
inline void fusion_variants(const std::vector<OpKind>& ops, std::vector<Structure>& out) {
  std::vector<std::size_t> joinable;  // indices i where ops[i] and ops[i+1] may be joined
  for (std::size_t i = 0; i + 1 < ops.size(); ++i) {
    if (is_fusable(ops[i]) && is_fusable(ops[i + 1])) joinable.push_back(i);
  }
  const std::size_t n = joinable.size();
  for (std::uint64_t mask = 0; mask < (std::uint64_t(1) << n); ++mask) {
    std::vector<bool> join(ops.size(), false);
    for (std::size_t b = 0; b < n; ++b) {
      if (mask & (std::uint64_t(1) << b)) join[joinable[b]] = true;
    }
    Structure st;
    Step cur{ops[0]};
    for (std::size_t i = 1; i < ops.size(); ++i) {
      if (join[i - 1]) {
        cur.push_back(ops[i]);
      } else {
        st.push_back(cur);
        cur = {ops[i]};
      }
    }
    st.push_back(cur);
    out.push_back(std::move(st));
  }
}

inline bool try_materialize(const Structure& st, const PreprocGraph& like, PreprocGraph& out) {
  try {
    out = materialize(st, like.source_shape, like.geometry, like.norm);
    return true;
  } catch (const GraphError&) {
    return false;
  }
}

}  // namespace detail

// All orderings reachable by: moving ConvertDtype/Normalize to any point
// after Decode, swapping Resize and Crop, and fusing adjacent runs of
// {ConvertDtype, Normalize, ChannelReorder}. Orderings that violate dtype or
// layout legality are dropped.
inline std::vector<PreprocGraph> enumerate_orderings(const PreprocGraph& graph) {
  validate(graph);
  std::vector<OpKind> spatial;
  std::vector<OpKind> movable;  // ConvertDtype before Normalize
  bool reorder = false;
  for (const auto& step : structure_of(graph)) {
    for (auto k : step) {
      if (k == OpKind::Resize || k == OpKind::Crop) spatial.push_back(k);
      if (k == OpKind::ConvertDtype) movable.insert(movable.begin(), k);
      if (k == OpKind::Normalize) movable.push_back(k);
      if (k == OpKind::ChannelReorder) reorder = true;
    }
  }

  std::vector<std::vector<OpKind>> skeletons;
  std::sort(spatial.begin(), spatial.end());
  do {
    auto sk = spatial;
    if (reorder) sk.push_back(OpKind::ChannelReorder);
    skeletons.push_back(sk);
  } while (std::next_permutation(spatial.begin(), spatial.end()));

  std::vector<PreprocGraph> result;
  std::set<std::string> seen;
  for (const auto& sk : skeletons) {
    // Interleave the movable ops (order preserved) into the skeleton.
    const std::size_t total = sk.size() + movable.size();
    std::vector<bool> slot(total, false);
    std::fill(slot.end() - static_cast<std::ptrdiff_t>(movable.size()), slot.end(), true);
    do {
      std::vector<OpKind> flat{OpKind::Decode};
      std::size_t si = 0;
      std::size_t mi = 0;
      for (std::size_t i = 0; i < total; ++i) flat.push_back(slot[i] ? movable[mi++] : sk[si++]);
      std::vector<Structure> variants;
      detail::fusion_variants(flat, variants);
      for (const auto& st : variants) {
        PreprocGraph g;
        if (!detail::try_materialize(st, graph, g)) continue;
        if (seen.insert(plan_signature(g)).second) result.push_back(std::move(g));
      }
    } while (std::next_permutation(slot.begin(), slot.end()));
  }
  return result;
}

namespace detail {

inline std::optional<std::size_t> find_kind(const PreprocGraph& g, OpKind k) {
  for (std::size_t i = 0; i < g.ops.size(); ++i) {
    if (g.ops[i].kind == k) return i;
  }
  return std::nullopt;
}

// Op sequence with Resize and Crop collapsed to one token, annotated with
// dtypes: plans sharing this key differ only in the spatial order.
inline std::string spatial_key(const PreprocGraph& g) {
  std::string s;
  for (const auto& op : g.ops) {
    const bool spatial = op.kind == OpKind::Resize || op.kind == OpKind::Crop;
    s += spatial ? std::string("Spatial:") + to_string(op.in_dtype) : op_token(op);
    s += '|';
  }
  return s;
}

// Op sequence with ConvertDtype removed and dtypes ignored: plans sharing
// this key differ only in where the conversion happens.
inline std::string dtype_key(const PreprocGraph& g) {
  std::string s;
  for (const auto& op : g.ops) {
    if (op.kind == OpKind::ConvertDtype) continue;
    if (op.kind == OpKind::Fused) {
      s += '(';
      for (auto m : op.members) {
        if (m != OpKind::ConvertDtype) s += std::string(to_string(m)) + '+';
      }
      s += ')';
    } else {
      s += to_string(op.kind);
    }
    s += '|';
  }
  return s;
}

inline std::int64_t resize_input_pixels(const PreprocGraph& g) {
  const auto i = find_kind(g, OpKind::Resize);
  return i ? g.ops[*i].in_shape.pixels() : 0;
}

inline int resize_dtype_width(const PreprocGraph& g) {
  const auto i = find_kind(g, OpKind::Resize);
  return i ? dtype_weight(g.ops[*i].in_dtype) : 0;
}

inline bool has_unfused_run(const PreprocGraph& g) {
  for (std::size_t i = 0; i + 1 < g.ops.size(); ++i) {
    const auto fusable = [](const PreprocOp& op) { return op.kind == OpKind::Fused || is_fusable(op.kind); };
    if (fusable(g.ops[i]) && fusable(g.ops[i + 1])) return true;
  }
  return false;
}

}  // namespace detail

// Drops plans that a rewrite rule proves no better than a sibling:
// a Resize that consumes more pixels than an otherwise-identical plan's,
// a Resize on a wider dtype than an otherwise-identical plan's, and any
// plan that leaves a fusable run unfused.
inline std::vector<PreprocGraph> prune_plans(const std::vector<PreprocGraph>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("prune_plans: no candidates");
  std::map<std::string, std::int64_t> min_pixels;
  std::map<std::string, int> min_width;
  const auto dkey = [](const PreprocGraph& g) {
    return detail::dtype_key(g) + "#" + std::to_string(detail::resize_input_pixels(g));
  };
  for (const auto& g : candidates) {
    const auto pk = detail::spatial_key(g);
    const auto px = detail::resize_input_pixels(g);
    auto [it, fresh] = min_pixels.emplace(pk, px);
    if (!fresh) it->second = std::min(it->second, px);
    const auto wk = dkey(g);
    const auto w = detail::resize_dtype_width(g);
    auto [jt, fresh2] = min_width.emplace(wk, w);
    if (!fresh2) jt->second = std::min(jt->second, w);
  }
  std::vector<PreprocGraph> kept;
  for (const auto& g : candidates) {
    if (detail::has_unfused_run(g)) continue;
    if (detail::resize_input_pixels(g) > min_pixels.at(detail::spatial_key(g))) continue;
    if (detail::resize_dtype_width(g) > min_width.at(dkey(g))) continue;
    kept.push_back(g);
  }
  return kept;
}

namespace detail {

// Pairwise order inversions of `g`'s flattened op kinds relative to `ref`.
inline int inversions(const PreprocGraph& g, const PreprocGraph& ref) {
  std::vector<OpKind> ref_order;
  for (const auto& step : structure_of(ref)) ref_order.insert(ref_order.end(), step.begin(), step.end());
  std::vector<std::size_t> rank;
  for (const auto& step : structure_of(g)) {
    for (auto k : step) {
      const auto it = std::find(ref_order.begin(), ref_order.end(), k);
      rank.push_back(static_cast<std::size_t>(it - ref_order.begin()));
    }
  }
  int n = 0;
  for (std::size_t i = 0; i < rank.size(); ++i) {
    for (std::size_t j = i + 1; j < rank.size(); ++j) n += rank[i] > rank[j];
  }
  return n;
}

}  // namespace detail

// Cheapest pruned ordering. Cost ties go to the plan that moves the fewest
// ops relative to the input, then to the smallest plan signature.
inline PreprocGraph optimize(const PreprocGraph& graph) {
  const auto pruned = prune_plans(enumerate_orderings(graph));
  const PreprocGraph* best = nullptr;
  std::tuple<PlanCost, int, std::string> best_key;
  for (const auto& g : pruned) {
    auto key = std::make_tuple(plan_cost(g), detail::inversions(g, graph), plan_signature(g));
    if (!best || key < best_key) {
      best = &g;
      best_key = std::move(key);
    }
  }
  return *best;
}

// ---------------------------------------------------------------------------
// Execution

// Dense tensor; U8 data is held as integral floats.
struct Tensor {
  Shape shape;
  DType dtype{DType::U8};
  std::vector<float> data;

  float& at(int y, int x, int ch) { return data[index(y, x, ch)]; }
  float at(int y, int x, int ch) const { return data[index(y, x, ch)]; }
  std::size_t index(int y, int x, int ch) const {
    if (shape.layout == Layout::HWC) return (std::size_t(y) * shape.w + x) * shape.c + ch;
    return (std::size_t(ch) * shape.h + y) * shape.w + x;
  }
};

inline Tensor to_tensor(const Image& img) {
  Tensor t;
  t.shape = Shape{img.height, img.width, Image::channels, Layout::HWC};
  t.dtype = DType::U8;
  t.data.assign(img.pixels.begin(), img.pixels.end());
  return t;
}

namespace detail {

inline Tensor run_resize(const Tensor& in, const ResizeParams& p, DType dtype) {
  Tensor out;
  out.shape = Shape{p.out_h, p.out_w, in.shape.c, Layout::HWC};
  out.dtype = dtype;
  out.data.resize(static_cast<std::size_t>(out.shape.elements()));
  struct Tap {
    int i0, i1;
    float f;
  };
  const auto taps = [](int n, int pre, double scale, int origin, int src, int in_extent) {
    std::vector<Tap> t(static_cast<std::size_t>(n));
    for (int o = 0; o < n; ++o) {
      const double s = std::clamp((o + pre + 0.5) * scale - 0.5, 0.0, double(src - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, src - 1);
      t[std::size_t(o)] = {std::clamp(i0 - origin, 0, in_extent - 1), std::clamp(i1 - origin, 0, in_extent - 1),
                           static_cast<float>(s - i0)};
    }
    return t;
  };
  const auto ty = taps(p.out_h, p.pre_y, p.scale_y, p.origin_y, p.src_h, in.shape.h);
  const auto tx = taps(p.out_w, p.pre_x, p.scale_x, p.origin_x, p.src_w, in.shape.w);
  for (int y = 0; y < p.out_h; ++y) {
    const auto& a = ty[std::size_t(y)];
    for (int x = 0; x < p.out_w; ++x) {
      const auto& b = tx[std::size_t(x)];
      for (int c = 0; c < in.shape.c; ++c) {
        const float top = in.at(a.i0, b.i0, c) + (in.at(a.i0, b.i1, c) - in.at(a.i0, b.i0, c)) * b.f;
        const float bot = in.at(a.i1, b.i0, c) + (in.at(a.i1, b.i1, c) - in.at(a.i1, b.i0, c)) * b.f;
        float v = top + (bot - top) * a.f;
        if (dtype == DType::U8) v = std::clamp(std::floor(v + 0.5f), 0.0f, 255.0f);
        out.at(y, x, c) = v;
      }
    }
  }
  return out;
}

inline void run_elementwise(Tensor& t, OpKind k, const NormalizeParams& norm) {
  switch (k) {
    case OpKind::ConvertDtype:
      t.dtype = DType::F32;
      return;
    case OpKind::Normalize: {
      const int c = t.shape.c;
      for (int y = 0; y < t.shape.h; ++y) {
        for (int x = 0; x < t.shape.w; ++x) {
          for (int ch = 0; ch < c; ++ch) {
            auto& v = t.at(y, x, ch);
            v = (v * norm.scale - norm.mean[std::size_t(ch % 3)]) / norm.stddev[std::size_t(ch % 3)];
          }
        }
      }
      return;
    }
    case OpKind::ChannelReorder: {
      Tensor out = t;
      out.shape.layout = Layout::CHW;
      for (int y = 0; y < t.shape.h; ++y) {
        for (int x = 0; x < t.shape.w; ++x) {
          for (int ch = 0; ch < t.shape.c; ++ch) out.at(y, x, ch) = t.at(y, x, ch);
        }
      }
      t = std::move(out);
      return;
    }
    default:
      throw GraphError("not an elementwise op");
  }
}

}  // namespace detail

// Runs every op after Decode starting from `tensor`, which must match the
// input of op `first`.
inline Tensor execute_from(const PreprocGraph& g, Tensor tensor, std::size_t first) {
  for (std::size_t i = first; i < g.ops.size(); ++i) {
    const auto& op = g.ops[i];
    switch (op.kind) {
      case OpKind::Decode:
        break;
      case OpKind::Resize:
        tensor = detail::run_resize(tensor, op.resize, op.in_dtype);
        break;
      case OpKind::Crop: {
        Tensor out;
        out.shape = op.out_shape;
        out.dtype = tensor.dtype;
        out.data.resize(static_cast<std::size_t>(out.shape.elements()));
        for (int y = 0; y < out.shape.h; ++y) {
          for (int x = 0; x < out.shape.w; ++x) {
            for (int c = 0; c < out.shape.c; ++c) out.at(y, x, c) = tensor.at(y + op.crop.top, x + op.crop.left, c);
          }
        }
        tensor = std::move(out);
        break;
      }
      case OpKind::Fused:
        for (auto k : op.members) detail::run_elementwise(tensor, k, g.norm);
        break;
      default:
        detail::run_elementwise(tensor, op.kind, g.norm);
    }
  }
  return tensor;
}

// Runs the graph on an already-decoded image.
inline Tensor execute(const PreprocGraph& g, const Image& decoded) {
  if (decoded.height != g.source_shape.h || decoded.width != g.source_shape.w) {
    throw GraphError("decoded image does not match graph source shape");
  }
  return execute_from(g, to_tensor(decoded), 1);
}

// Runs the graph on JPEG bytes. When a Crop directly follows Decode, only
// the crop window is decoded.
inline Tensor execute_jpeg(const PreprocGraph& g, std::span<const std::uint8_t> bytes) {
  if (g.ops.size() > 1 && g.ops[1].kind == OpKind::Crop) {
    const auto& w = g.ops[1].crop;
    const auto img = jpeg::decode_roi(bytes, {w.left, w.top, w.left + w.width, w.top + w.height});
    return execute_from(g, to_tensor(img), 2);
  }
  return execute(g, jpeg::decode_full(bytes));
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json shape_json(const Shape& s) {
  return {{"h", s.h}, {"w", s.w}, {"c", s.c}, {"layout", to_string(s.layout)}};
}

inline nlohmann::json to_json(const PreprocGraph& g) {
  nlohmann::json ops = nlohmann::json::array();
  for (const auto& op : g.ops) {
    nlohmann::json j{{"kind", to_string(op.kind)},
                     {"in_dtype", to_string(op.in_dtype)},
                     {"out_dtype", to_string(op.out_dtype)},
                     {"in_shape", shape_json(op.in_shape)},
                     {"out_shape", shape_json(op.out_shape)},
                     {"cost", op_cost(op)}};
    if (op.kind == OpKind::Fused) {
      auto& m = j["members"] = nlohmann::json::array();
      for (auto k : op.members) m.push_back(to_string(k));
    }
    if (op.kind == OpKind::Crop) {
      j["window"] = {{"top", op.crop.top}, {"left", op.crop.left}, {"height", op.crop.height}, {"width", op.crop.width}};
    }
    if (op.kind == OpKind::Resize) {
      j["resize"] = {{"out_h", op.resize.out_h}, {"out_w", op.resize.out_w}, {"origin_y", op.resize.origin_y},
                     {"origin_x", op.resize.origin_x}};
    }
    ops.push_back(std::move(j));
  }
  nlohmann::json geo = nlohmann::json::object();
  if (g.geometry.resize) geo["resize"] = {(*g.geometry.resize)[0], (*g.geometry.resize)[1]};
  if (g.geometry.crop) {
    const auto& c = *g.geometry.crop;
    geo["crop"] = {{"top", c.top}, {"left", c.left}, {"height", c.height}, {"width", c.width}};
  }
  return {{"source_shape", shape_json(g.source_shape)},
          {"target_shape", shape_json(g.target_shape)},
          {"geometry", geo},
          {"normalize", {{"mean", g.norm.mean}, {"std", g.norm.stddev}, {"scale", g.norm.scale}}},
          {"ops", ops},
          {"cost", plan_cost(g).arithmetic_ops}};
}

// Accepts the to_json layout; only kinds, members, geometry, shapes and
// normalization are read, the rest is re-derived.
inline PreprocGraph from_json(const nlohmann::json& j) {
  const auto shape = [](const nlohmann::json& s) {
    return Shape{s.at("h").get<int>(), s.at("w").get<int>(), s.value("c", 3), Layout::HWC};
  };
  Geometry geo;
  if (j.contains("geometry")) {
    const auto& gj = j.at("geometry");
    if (gj.contains("resize")) geo.resize = std::array<int, 2>{gj["resize"][0].get<int>(), gj["resize"][1].get<int>()};
    if (gj.contains("crop")) {
      const auto& c = gj["crop"];
      geo.crop = CropBox{c.at("top").get<int>(), c.at("left").get<int>(), c.at("height").get<int>(),
                         c.at("width").get<int>()};
    }
  }
  NormalizeParams norm;
  if (j.contains("normalize")) {
    const auto& n = j.at("normalize");
    if (n.contains("mean")) norm.mean = n["mean"].get<std::array<float, 3>>();
    if (n.contains("std")) norm.stddev = n["std"].get<std::array<float, 3>>();
    if (n.contains("scale")) norm.scale = n["scale"].get<float>();
  }
  Structure st;
  for (const auto& op : j.at("ops")) {
    const auto kind = op_kind_from_string(op.at("kind").get<std::string>());
    if (kind == OpKind::Fused) {
      Step s;
      for (const auto& m : op.at("members")) s.push_back(op_kind_from_string(m.get<std::string>()));
      st.push_back(s);
    } else {
      st.push_back({kind});
    }
  }
  return materialize(st, shape(j.at("source_shape")), geo, norm);
}

}  // namespace visinf::dag
