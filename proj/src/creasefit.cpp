#include "creaseforge/creasefit.hpp"

#include "creaseforge/error.hpp"

#include <Eigen/Dense>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace creaseforge {

namespace {

void check_points(const LinePoints& line) {
  if (line.points.size() < CoefficientVector::kSize) {
    throw Error(ErrorCode::FewerThanFivePoints,
                fmt::format("line {} has {} points", line.line_index, line.points.size()));
  }
  for (const auto& p : line.points) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) {
      throw Error(ErrorCode::NonFiniteInput, fmt::format("line {}", line.line_index));
    }
  }
}

}  // namespace

LineFit fit_polynomial(const LinePoints& line) {
  check_points(line);

  std::vector<Point2> pts = line.points;
  std::sort(pts.begin(), pts.end(), [](const Point2& l, const Point2& r) {
    return l.x < r.x || (l.x == r.x && l.y < r.y);
  });
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].x == pts[i - 1].x) {
      throw Error(ErrorCode::DuplicateAbscissa,
                  fmt::format("line {}: x = {} repeated", line.line_index, pts[i].x));
    }
  }

  const auto n = static_cast<Eigen::Index>(pts.size());
  constexpr Eigen::Index kCols = CoefficientVector::kSize;
  Eigen::MatrixXd design(n, kCols);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double power = 1.0;
    for (Eigen::Index j = 0; j < kCols; ++j) {
      design(i, j) = power;
      power *= pts[i].x;
    }
    rhs[i] = pts[i].y;
  }

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(design);
  const Eigen::VectorXd a = qr.solve(rhs);

  LineFit fit;
  for (Eigen::Index j = 0; j < kCols; ++j) fit.coefficients.a[j] = a[j];
  fit.residual_norm = (design * a - rhs).norm();
  return fit;
}

double normalize_coordinate(double pixel, int size) { return (pixel + 0.5) / size; }

double denormalize_coordinate(double normalized, int size) { return normalized * size - 0.5; }

std::array<LinePoints, 3> normalized_lines(const Annotation& annotation) {
  if (annotation.width <= 0 || annotation.height <= 0) {
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("{}: non-positive image size", annotation.image_id));
  }
  std::array<LinePoints, 3> out;
  for (int i = 0; i < 3; ++i) {
    out[i].line_index = i + 1;
    out[i].points.reserve(annotation.lines[i].size());
    for (const auto& p : annotation.lines[i]) {
      out[i].points.push_back({normalize_coordinate(p.x, annotation.width),
                               normalize_coordinate(p.y, annotation.height)});
    }
  }
  return out;
}

std::vector<CreaseFit> fit_annotations(std::span<const Annotation> corpus) {
  std::vector<CreaseFit> fits;
  fits.reserve(corpus.size());
  for (const auto& annotation : corpus) {
    CreaseFit fit;
    fit.image_id = annotation.image_id;
    try {
      const auto lines = normalized_lines(annotation);
      for (int i = 0; i < 3; ++i) {
        fit.lines[i] = fit_polynomial(lines[i]);
        const auto [lo, hi] = std::minmax_element(
            lines[i].points.begin(), lines[i].points.end(),
            [](const Point2& l, const Point2& r) { return l.x < r.x; });
        fit.endpoints[i] = {lo->x, hi->x};
      }
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("image '{}': {}", annotation.image_id, e.message()));
    }
    fits.push_back(std::move(fit));
  }
  return fits;
}

Annotation annotation_from_json(const nlohmann::json& j) {
  Annotation a;
  try {
    a.image_id = j.at("image_id").get<std::string>();
    a.width = j.at("width").get<int>();
    a.height = j.at("height").get<int>();
    const auto& lines = j.at("lines");
    if (!lines.is_array() || lines.size() != 3) {
      throw Error(ErrorCode::ParseError, fmt::format("'{}': expected exactly 3 lines", a.image_id));
    }
    for (std::size_t i = 0; i < 3; ++i) {
      for (const auto& p : lines[i]) {
        if (!p.is_array() || p.size() != 2) {
          throw Error(ErrorCode::ParseError, fmt::format("'{}': point must be [x, y]", a.image_id));
        }
        a.lines[i].push_back({p[0].get<double>(), p[1].get<double>()});
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
  if (a.width <= 0 || a.height <= 0) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("'{}': non-positive image size", a.image_id));
  }
  return a;
}

nlohmann::json to_json(const Annotation& annotation) {
  nlohmann::json lines = nlohmann::json::array();
  for (const auto& line : annotation.lines) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : line) pts.push_back({p.x, p.y});
    lines.push_back(std::move(pts));
  }
  return {{"image_id", annotation.image_id},
          {"width", annotation.width},
          {"height", annotation.height},
          {"lines", std::move(lines)}};
}

nlohmann::json to_json(const CreaseFit& fit) {
  nlohmann::json lines = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    lines.push_back({{"coefficients", fit.lines[i].coefficients.a},
                     {"residual", fit.lines[i].residual_norm},
                     {"xs", fit.endpoints[i].start},
                     {"xe", fit.endpoints[i].end}});
  }
  return {{"image_id", fit.image_id}, {"lines", std::move(lines)}};
}

std::vector<Annotation> read_annotations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open '{}'", path.string()));
  std::vector<Annotation> corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      corpus.push_back(annotation_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::ParseError, fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return corpus;
}

}  // namespace creaseforge
