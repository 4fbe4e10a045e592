#pragma once

#include "creaseforge/creasedist.hpp"
#include "creaseforge/rng.hpp"
#include "creaseforge/types.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace creaseforge {

/// 8-bit grayscale, row-major. 0 is background.
struct CreaseImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  CreaseImage() = default;
  CreaseImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t lit_count() const;

  bool operator==(const CreaseImage&) const = default;
};

struct WrinkleConfig {
  int count_min = 3;
  int count_max = 8;
  double length_min = 0.10;  // fraction of the image diagonal
  double length_max = 0.25;
  std::uint8_t intensity = 160;

  void validate() const;
};

struct RenderParams {
  int width = 128;
  int height = 128;
  double thickness = 1.0;  // stroke width in pixels
  std::uint8_t line_intensity = 255;
  WrinkleConfig wrinkles;

  void validate() const;
};

/// Lights every pixel whose square lies at distance < thickness / 2 from the
/// segment a-b (pixel coordinates, pixel p spans [p - 0.5, p + 0.5]).
/// Composites with max so weaker strokes never dim stronger ones.
void draw_segment(CreaseImage& image, Point2 a, Point2 b, double thickness, std::uint8_t value);

/// Distance from segment a-b to the axis-aligned box [lo, hi]; 0 when they meet.
double segment_box_distance(Point2 a, Point2 b, Point2 lo, Point2 hi);

/// Normalized [0,1]^2 point -> continuous pixel coordinate.
Point2 to_pixel(Point2 normalized, int width, int height);

/// Polyline of the crease in normalized coordinates, sampled uniformly in x
/// over [start, end].
std::vector<Point2> crease_polyline(const CreaseLine& line, int samples);

/// Samples used per principal line; independent of resolution above 512 px
/// so renders at different sizes trace the same polyline.
int polyline_samples(int width);

CreaseImage render_crease(const PolynomialCrease& crease, const RenderParams& params,
                          RandomStream& stream);

/// Draws the wrinkle segments for `params.wrinkles` onto `image`.
void draw_wrinkles(CreaseImage& image, const RenderParams& params, RandomStream& stream);

// Quadratic Bezier baseline.

std::vector<Point2> bezier_crease(Point2 start, Point2 control, Point2 end, int n_samples);

struct Box {
  Point2 lo;
  Point2 hi;
};

/// Sampling areas of the start, control and end points of each Bezier line.
struct BezierConfig {
  std::array<std::array<Box, 3>, 3> areas;

  /// The unit square split into three horizontal bands, one per line.
  static BezierConfig three_bands();
};

struct BezierCrease {
  std::array<std::array<Point2, 3>, 3> control_points;  // [line][start, control, end]
};

BezierCrease sample_bezier_crease(const BezierConfig& config, RandomStream& stream);

CreaseImage render_bezier_crease(const BezierCrease& crease, const RenderParams& params,
                                 RandomStream& stream);

struct IdentitySample {
  PolynomialCrease crease;
  CreaseImage image;
};

/// sample_coefficients followed by render_crease. The coefficient draws use
/// stream/"crease", the wrinkles stream/"wrinkles".
IdentitySample synthesize_identity(const CreaseDistribution& dist, GammaFactor gamma,
                                   const RenderParams& params, const RandomStream& stream);

}  // namespace creaseforge
