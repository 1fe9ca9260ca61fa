#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hypervox/layers.hpp"
#include "hypervox/tensor.hpp"

namespace hypervox {

enum class LayerKind { Conv, ConvPool, FC };

std::string_view to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Conv;
  int filters = 1;  // output channels, or output units for FC
  Triple kernel{1, 1, 1};
  Triple stride{1, 1, 1};
  Triple pad{0, 0, 0};
  bool relu = true;
  std::optional<float> dropout;  // FC only: applied to the layer input in train mode

  bool is_conv() const { return kind != LayerKind::FC; }
  /// A convolution whose kernel spans more than one pixel spatially.
  bool is_3d() const { return is_conv() && (kernel.h > 1 || kernel.w > 1); }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

enum class Family { A, B, C, D, E, Custom };

std::string_view to_string(Family family);
Family parse_family(std::string_view name);

struct NetworkSpec {
  Family family = Family::Custom;
  int n = 1;       // spatial neighbourhood
  int f = 1;       // input bands
  int nclass = 2;
  std::vector<LayerSpec> layers;

  Shape input_shape() const {
    return {1, static_cast<std::size_t>(f), static_cast<std::size_t>(n), static_cast<std::size_t>(n)};
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// Canonical architecture of a family for an n x n x f voxel and nclass outputs.
///
/// Layouts (Conv = stride 1, Pool = 1x1x3 kernel with spectral stride 2):
///   a: Conv3D[20] Pool[35] ConvPool3D[35]                        FC[50] FC[nclass]
///   b: Conv3D[20] Pool[35] Conv3D[35] Pool[35]                   FC[nclass]
///   c: Conv3D[20] Pool[35] Conv3D[35] Pool[35] Conv1D[35] Pool[35] FC[nclass]
///   d: Conv3D[20] Pool[2] Conv3D[35] Pool[2] Conv3D[35] Pool[2] Conv1D[35] Pool[4] FC[nclass]
///   e: d with one more Conv3D[35] Pool[2] pair before the 1D tail
///
/// Every conv uses spectral kernel 3 with spectral pad 1. The 3D convs use
/// 3x3 spatial kernels; the last (n-1)/2 of them drop the spatial padding
/// so the neighbourhood collapses to 1x1, earlier ones keep it with pad 1.
/// With n == 1 every kernel is 1x1 spatially. Every FC input carries 0.5
/// dropout.
NetworkSpec registry(Family family, int n, int f, int nclass);

/// Expected (N3D, N1D, NFC) of a family at neighbourhood n.
struct LayerCounts {
  int conv3d = 0;
  int conv1d = 0;
  int fc = 0;

  friend bool operator==(const LayerCounts&, const LayerCounts&) = default;
};

LayerCounts family_counts(Family family, int n);
LayerCounts count_layers(const NetworkSpec& spec);

struct LayerTrace {
  std::size_t index = 0;
  Shape input;
  Shape output;
  std::size_t params = 0;
};

struct ShapeTrace {
  std::vector<LayerTrace> layers;
  std::size_t flattened = 0;  // length of the vector entering the first FC
  std::vector<std::string> warnings;
};

/// Applies size_out per axis per layer. Throws ArchitectureError naming the
/// offending layer when an axis would drop below 1 or a kernel is wider than
/// its input.
ShapeTrace shape_trace(const NetworkSpec& spec);

std::size_t param_count(const NetworkSpec& spec);

/// Full structural check: shape trace, layer ordering, final FC width,
/// and family layer counts for registry families.
void validate(const NetworkSpec& spec);

/// Published parameter count for one configuration of a family.
struct ReferenceCount {
  std::string label;
  int n = 0;
  int f = 0;
  int nclass = 0;
  std::size_t published = 0;
};

std::vector<ReferenceCount> reference_counts(Family family);

/// Text form, one layer per line:
///   conv|convpool <filters> <k_spec,k_h,k_w> <s_spec,s_h,s_w> <p_spec,p_h,p_w> [norelu]
///   fc <units|nclass> [dropout=<rate>] [norelu|relu]
/// '#' starts a comment.
std::string to_text(const NetworkSpec& spec);
NetworkSpec parse_spec_text(std::string_view text, int n, int f, int nclass);
NetworkSpec load_spec_file(const std::string& path, int n, int f, int nclass);

/// Same layers on a new input geometry; the last FC is resized to nclass.
NetworkSpec retarget(const NetworkSpec& spec, int f, int nclass);

}  // namespace hypervox
