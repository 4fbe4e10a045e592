#pragma once

#include "creaseforge/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace creaseforge {

/// Annotated points of one principal line, normalized to [0,1]^2.
struct LinePoints {
  std::vector<Point2> points;
  int line_index = 1;  // 1, 2 or 3
};

struct LineFit {
  CoefficientVector coefficients;
  double residual_norm = 0.0;
};

/// One annotated ROI image. Points are in pixel coordinates as stored on disk.
struct Annotation {
  std::string image_id;
  int width = 0;
  int height = 0;
  std::array<std::vector<Point2>, 3> lines;
};

struct CreaseFit {
  std::string image_id;
  std::array<LineFit, 3> lines;
  std::array<Endpoints, 3> endpoints;
};

/// Least-squares fourth-order fit through the points (Householder QR on the
/// Vandermonde design). Points are sorted by x first, so the result does not
/// depend on the input order.
LineFit fit_polynomial(const LinePoints& line);

/// Pixel -> normalized coordinate under the pixel-center convention used by
/// the rasterizer: pixel p covers [p - 0.5, p + 0.5], so x = (p + 0.5) / size.
double normalize_coordinate(double pixel, int size);
double denormalize_coordinate(double normalized, int size);

std::array<LinePoints, 3> normalized_lines(const Annotation& annotation);

/// Fits every annotation. Errors are rethrown with the offending image_id.
std::vector<CreaseFit> fit_annotations(std::span<const Annotation> corpus);

Annotation annotation_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Annotation& annotation);
nlohmann::json to_json(const CreaseFit& fit);

/// JSON-Lines corpus, one annotation per line; blank lines are skipped.
std::vector<Annotation> read_annotations(const std::filesystem::path& path);

}  // namespace creaseforge
