#pragma once

// Crop-geometry rules used to validate externally prepared eye crops.

#include <cmath>
#include <string>

#include "verikit/errors.hpp"

namespace verikit::geometry {

/// Crop side as a multiple of the sclera radius.
inline constexpr double kScleraCropFactor = 7.6;

struct CropBox {
  double center_x = 0.0;
  double center_y = 0.0;
  double side = 0.0;

  double left() const { return center_x - side / 2.0; }
  double top() const { return center_y - side / 2.0; }
};

/// Square crop of side 7.6 * sclera_radius centred on the sclera centre.
inline CropBox sclera_crop_box(double center_x, double center_y, double sclera_radius) {
  if (!(sclera_radius > 0.0) || !std::isfinite(sclera_radius))
    throw DomainError("sclera radius must be positive, got " + std::to_string(sclera_radius));
  return CropBox{center_x, center_y, kScleraCropFactor * sclera_radius};
}

struct FaceCropLimits {
  double min_inter_eye = 50.0;
  double frontal_ratio = 0.4;
};

/// Frontal-face filter. Both the horizontal eye-midpoint offset and the
/// nose offset are checked against frontal_ratio * inter_eye_px.
inline bool face_crop_valid(double inter_eye_px, double eye_midpoint_offset_px,
                            double nose_offset_px, FaceCropLimits limits = {}) {
  if (!(inter_eye_px > 0.0))
    throw DomainError("inter-eye distance must be positive, got " + std::to_string(inter_eye_px));
  if (eye_midpoint_offset_px < 0.0 || nose_offset_px < 0.0)
    throw DomainError("offsets must be non-negative");
  const double limit = limits.frontal_ratio * inter_eye_px;
  return inter_eye_px >= limits.min_inter_eye && eye_midpoint_offset_px <= limit &&
         nose_offset_px <= limit;
}

}  // namespace verikit::geometry
