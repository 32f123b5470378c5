#pragma once

#include "mmslab/flows.hpp"
#include "mmslab/spectral.hpp"

#include <cstdint>
#include <iosfwd>

namespace mms {

/// Malformed, truncated or version-mismatched text artifact.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);

// Every format ends with a `checksum <hex>` line over the preceding bytes.
// Floating-point values are written with 17 significant digits.

void save_space(std::ostream& out, const MetricMeasureSpace& space);
/// Rebuilds the space from its factors (or edges) and checks the stored points against it.
std::shared_ptr<MetricMeasureSpace> load_space(std::istream& in);

void save_basis(std::ostream& out, const SpectralBasis& basis);
/// Throws std::invalid_argument when the stored basis does not fit `space`.
SpectralBasis load_basis(std::istream& in, const MetricMeasureSpace& space);

void save_flow(std::ostream& out, const FlowMap& flow);
FlowMap load_flow(std::istream& in, const MetricMeasureSpace& space);

/// %.17g formatting.
std::string format_double(double v);

}  // namespace mms
