#include "creaseforge/raster.hpp"

#include "creaseforge/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace creaseforge {

namespace {

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) t = std::clamp(((p.x - a.x) * dx + (p.y - a.y) * dy) / len2, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double point_box_distance(Point2 p, Point2 lo, Point2 hi) {
  const double dx = std::max({lo.x - p.x, 0.0, p.x - hi.x});
  const double dy = std::max({lo.y - p.y, 0.0, p.y - hi.y});
  return std::hypot(dx, dy);
}

// Liang-Barsky: does the segment touch the closed box?
bool segment_meets_box(Point2 a, Point2 b, Point2 lo, Point2 hi) {
  double t0 = 0.0;
  double t1 = 1.0;
  const double dx = b.x - a.x;
  const double dy = b.y - a.y;
  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {a.x - lo.x, hi.x - a.x, a.y - lo.y, hi.y - a.y};
  for (int i = 0; i < 4; ++i) {
    if (p[i] == 0.0) {
      if (q[i] < 0.0) return false;
      continue;
    }
    const double r = q[i] / p[i];
    if (p[i] < 0.0) t0 = std::max(t0, r);
    else t1 = std::min(t1, r);
    if (t0 > t1) return false;
  }
  return true;
}

int clamp_index(double v, int size) {
  if (!(v > 0.0)) return 0;
  if (v >= size - 1) return size - 1;
  return static_cast<int>(v);
}

}  // namespace

void validate(const PolynomialCrease& crease) {
  for (int i = 0; i < 3; ++i) {
    const auto& line = crease.lines[i];
    for (double a : line.coefficients.a) {
      if (!std::isfinite(a)) throw Error(ErrorCode::NonFiniteInput, fmt::format("line {} coefficients", i + 1));
    }
    if (!(line.range.start >= 0.0 && line.range.start < line.range.end && line.range.end <= 1.0)) {
      throw Error(ErrorCode::InvalidRange,
                  fmt::format("line {}: need 0 <= xs < xe <= 1, got [{}, {}]", i + 1, line.range.start,
                              line.range.end));
    }
  }
}

std::size_t CreaseImage::lit_count() const {
  return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](auto v) { return v != 0; }));
}

void WrinkleConfig::validate() const {
  if (count_min < 0 || count_max < count_min) {
    throw Error(ErrorCode::InvalidRange, fmt::format("wrinkle count range [{}, {}]", count_min, count_max));
  }
  if (!(length_min >= 0.0) || !(length_max >= length_min)) {
    throw Error(ErrorCode::InvalidRange, fmt::format("wrinkle length range [{}, {}]", length_min, length_max));
  }
}

void RenderParams::validate() const {
  if (width < 8 || height < 8) {
    throw Error(ErrorCode::ImageTooSmall, fmt::format("{}x{} is below 8x8", width, height));
  }
  if (!(thickness >= 1.0)) throw Error(ErrorCode::InvalidArgument, "line thickness must be >= 1");
  wrinkles.validate();
}

double segment_box_distance(Point2 a, Point2 b, Point2 lo, Point2 hi) {
  if (segment_meets_box(a, b, lo, hi)) return 0.0;
  // Disjoint convex sets in the plane: the closest pair involves a vertex.
  double d = std::min(point_box_distance(a, lo, hi), point_box_distance(b, lo, hi));
  for (Point2 corner : {lo, Point2{hi.x, lo.y}, hi, Point2{lo.x, hi.y}}) {
    d = std::min(d, point_segment_distance(corner, a, b));
  }
  return d;
}

void draw_segment(CreaseImage& image, Point2 a, Point2 b, double thickness, std::uint8_t value) {
  const double half = 0.5 * thickness;
  const double reach = half + 0.5;
  const double min_x = std::min(a.x, b.x) - reach;
  const double max_x = std::max(a.x, b.x) + reach;
  const double min_y = std::min(a.y, b.y) - reach;
  const double max_y = std::max(a.y, b.y) + reach;
  if (max_x < -0.5 || max_y < -0.5 || min_x > image.width - 0.5 || min_y > image.height - 0.5) return;

  const int x0 = clamp_index(std::floor(min_x), image.width);
  const int x1 = clamp_index(std::ceil(max_x), image.width);
  const int y0 = clamp_index(std::floor(min_y), image.height);
  const int y1 = clamp_index(std::ceil(max_y), image.height);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Point2 lo{x - 0.5, y - 0.5};
      const Point2 hi{x + 0.5, y + 0.5};
      if (segment_box_distance(a, b, lo, hi) < half) {
        auto& px = image.at(x, y);
        px = std::max(px, value);
      }
    }
  }
}

Point2 to_pixel(Point2 normalized, int width, int height) {
  return {normalized.x * width - 0.5, normalized.y * height - 0.5};
}

int polyline_samples(int width) { return std::max(2 * width, 1024); }

std::vector<Point2> crease_polyline(const CreaseLine& line, int samples) {
  std::vector<Point2> pts;
  pts.reserve(samples);
  const double span = line.range.end - line.range.start;
  for (int k = 0; k < samples; ++k) {
    const double x = line.range.start + span * static_cast<double>(k) / (samples - 1);
    pts.push_back({x, line.coefficients(x)});
  }
  return pts;
}

namespace {

void draw_polyline(CreaseImage& image, const std::vector<Point2>& normalized, double thickness,
                   std::uint8_t value) {
  for (std::size_t k = 1; k < normalized.size(); ++k) {
    draw_segment(image, to_pixel(normalized[k - 1], image.width, image.height),
                 to_pixel(normalized[k], image.width, image.height), thickness, value);
  }
}

}  // namespace

void draw_wrinkles(CreaseImage& image, const RenderParams& params, RandomStream& stream) {
  const auto& w = params.wrinkles;
  const int count = stream.uniform_int(w.count_min, w.count_max);
  const double diagonal = std::hypot(image.width, image.height);
  for (int k = 0; k < count; ++k) {
    const Point2 a{stream.uniform(-0.5, image.width - 0.5), stream.uniform(-0.5, image.height - 0.5)};
    const double angle = stream.uniform(0.0, std::numbers::pi);
    const double length = stream.uniform(w.length_min, w.length_max) * diagonal;
    const Point2 b{a.x + length * std::cos(angle), a.y + length * std::sin(angle)};
    draw_segment(image, a, b, params.thickness, w.intensity);
  }
}

CreaseImage render_crease(const PolynomialCrease& crease, const RenderParams& params,
                          RandomStream& stream) {
  params.validate();
  validate(crease);
  CreaseImage image(params.width, params.height);
  const int samples = polyline_samples(params.width);
  for (const auto& line : crease.lines) {
    draw_polyline(image, crease_polyline(line, samples), params.thickness, params.line_intensity);
  }
  draw_wrinkles(image, params, stream);
  return image;
}

std::vector<Point2> bezier_crease(Point2 start, Point2 control, Point2 end, int n_samples) {
  if (n_samples < 2) throw Error(ErrorCode::TooFewSamples, fmt::format("n_samples = {}", n_samples));
  std::vector<Point2> pts;
  pts.reserve(n_samples);
  for (int k = 0; k < n_samples; ++k) {
    const double t = static_cast<double>(k) / (n_samples - 1);
    const double u = 1.0 - t;
    pts.push_back({u * u * start.x + 2.0 * t * u * control.x + t * t * end.x,
                   u * u * start.y + 2.0 * t * u * control.y + t * t * end.y});
  }
  return pts;
}

BezierConfig BezierConfig::three_bands() {
  BezierConfig config;
  for (int i = 0; i < 3; ++i) {
    const double top = i / 3.0;
    const double bottom = (i + 1) / 3.0;
    config.areas[i] = {Box{{0.0, top}, {0.25, bottom}},   // start
                       Box{{0.3, top}, {0.7, bottom}},    // control
                       Box{{0.75, top}, {1.0, bottom}}};  // end
  }
  return config;
}

BezierCrease sample_bezier_crease(const BezierConfig& config, RandomStream& stream) {
  BezierCrease crease;
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) {
      const Box& box = config.areas[i][k];
      crease.control_points[i][k] = {stream.uniform(box.lo.x, box.hi.x), stream.uniform(box.lo.y, box.hi.y)};
    }
  }
  return crease;
}

CreaseImage render_bezier_crease(const BezierCrease& crease, const RenderParams& params,
                                 RandomStream& stream) {
  params.validate();
  CreaseImage image(params.width, params.height);
  const int samples = polyline_samples(params.width);
  for (const auto& cp : crease.control_points) {
    draw_polyline(image, bezier_crease(cp[0], cp[1], cp[2], samples), params.thickness,
                  params.line_intensity);
  }
  draw_wrinkles(image, params, stream);
  return image;
}

IdentitySample synthesize_identity(const CreaseDistribution& dist, GammaFactor gamma,
                                   const RenderParams& params, const RandomStream& stream) {
  auto crease_stream = stream.child("crease");
  auto wrinkle_stream = stream.child("wrinkles");
  IdentitySample out;
  out.crease = sample_coefficients(dist, gamma, crease_stream);
  out.image = render_crease(out.crease, params, wrinkle_stream);
  return out;
}

}  // namespace creaseforge
