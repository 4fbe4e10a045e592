#include "creaseforge/metrics.hpp"

#include "creaseforge/error.hpp"
#include "creaseforge/io.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace creaseforge {

void EmbeddingSet::validate() const {
  if (classes.empty()) throw Error(ErrorCode::InvalidArgument, "embedding set has no classes");
  Eigen::Index dim = -1;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    for (const auto& f : classes[c]) {
      if (dim < 0) dim = f.size();
      if (f.size() != dim || dim == 0) {
        throw Error(ErrorCode::ShapeMismatch, fmt::format("class {}: feature dimension differs", c));
      }
      if (!f.allFinite()) throw Error(ErrorCode::NonFiniteInput, fmt::format("class {}: non-finite feature", c));
      if (f.norm() == 0.0) throw Error(ErrorCode::InvalidArgument, fmt::format("class {}: zero-norm feature", c));
    }
  }
}

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return std::clamp(a.dot(b) / (a.norm() * b.norm()), -1.0, 1.0);
}

ScoreSummary summarize(std::span<const double> scores) {
  ScoreSummary s;
  s.count = scores.size();
  if (scores.empty()) return s;
  double sum = 0.0;
  for (double v : scores) sum += v;
  s.mean = sum / static_cast<double>(scores.size());
  double ss = 0.0;
  for (double v : scores) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(scores.size()));
  return s;
}

ScoreDistribution score_distribution(const EmbeddingSet& emb, std::uint64_t subsample_seed) {
  emb.validate();
  // normalize once; cosine of normalized vectors is a dot product
  std::vector<std::vector<Eigen::VectorXd>> unit(emb.classes.size());
  for (std::size_t c = 0; c < emb.classes.size(); ++c) {
    for (const auto& f : emb.classes[c]) unit[c].push_back(f.normalized());
  }
  auto score = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return std::clamp(a.dot(b), -1.0, 1.0); };

  ScoreDistribution out;
  for (const auto& cls : unit) {
    for (std::size_t i = 0; i < cls.size(); ++i) {
      for (std::size_t j = i + 1; j < cls.size(); ++j) out.genuine.push_back(score(cls[i], cls[j]));
    }
  }
  if (out.genuine.empty()) throw Error(ErrorCode::NoGenuinePairs, "no class has two samples");
  if (unit.size() < 2) throw Error(ErrorCode::NoImposterPairs, "need at least two classes");

  std::uint64_t total = 0;
  std::uint64_t samples = 0;
  for (const auto& cls : unit) samples += cls.size();
  for (const auto& cls : unit) total += cls.size() * (samples - cls.size());
  total /= 2;
  if (total == 0) throw Error(ErrorCode::NoImposterPairs, "no cross-class pairs");

  if (total <= kMaxImposterPairs) {
    out.imposter.reserve(total);
    for (std::size_t c = 0; c < unit.size(); ++c) {
      for (std::size_t d = c + 1; d < unit.size(); ++d) {
        for (const auto& a : unit[c]) {
          for (const auto& b : unit[d]) out.imposter.push_back(score(a, b));
        }
      }
    }
  } else {
    // flat index -> (class, sample)
    std::vector<std::pair<std::size_t, std::size_t>> flat;
    flat.reserve(samples);
    for (std::size_t c = 0; c < unit.size(); ++c) {
      for (std::size_t i = 0; i < unit[c].size(); ++i) flat.emplace_back(c, i);
    }
    RandomStream stream = RandomStream(subsample_seed).child("imposter-subsample");
    out.imposter.reserve(kMaxImposterPairs);
    const int last = static_cast<int>(flat.size()) - 1;
    while (out.imposter.size() < kMaxImposterPairs) {
      const auto& a = flat[stream.uniform_int(0, last)];
      const auto& b = flat[stream.uniform_int(0, last)];
      if (a.first == b.first) continue;
      out.imposter.push_back(score(unit[a.first][a.second], unit[b.first][b.second]));
    }
    out.imposter_subsampled = true;
  }
  out.genuine_summary = summarize(out.genuine);
  out.imposter_summary = summarize(out.imposter);
  return out;
}

Eigen::VectorXd spherical_mean(std::span<const Eigen::VectorXd> samples) {
  if (samples.empty()) throw Error(ErrorCode::InvalidArgument, "class has no samples");
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(samples.front().size());
  for (const auto& f : samples) sum += f.normalized();
  const double n = sum.norm();
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroNormCenter, "class samples cancel out");
  return sum / n;
}

namespace {

void check_threshold(double r) {
  if (!(r >= 0.0 && r <= 2.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("r = {} outside [0, 2]", r));
}

}  // namespace

double class_uniqueness(const EmbeddingSet& emb, double r) {
  check_threshold(r);
  emb.validate();
  std::vector<Eigen::VectorXd> centers;
  std::size_t unique = 0;
  for (const auto& cls : emb.classes) {
    const Eigen::VectorXd center = spherical_mean(cls);
    // compared against every earlier center, admitted or not
    const bool separated = std::all_of(centers.begin(), centers.end(), [&](const Eigen::VectorXd& u) {
      return 1.0 - cosine_similarity(center, u) > r;
    });
    unique += separated ? 1 : 0;
    centers.push_back(center);
  }
  return static_cast<double>(unique) / static_cast<double>(emb.classes.size());
}

double identity_consistency(const EmbeddingSet& emb, double r) {
  check_threshold(r);
  emb.validate();
  double total = 0.0;
  for (const auto& cls : emb.classes) {
    const Eigen::VectorXd center = spherical_mean(cls);
    std::size_t close = 0;
    for (const auto& f : cls) close += (1.0 - cosine_similarity(f, center) < r) ? 1 : 0;
    total += static_cast<double>(close) / static_cast<double>(cls.size());
  }
  return total / static_cast<double>(emb.classes.size());
}

double intra_class_diversity(std::span<const std::vector<Eigen::VectorXd>> images, std::optional<double> baseline) {
  if (images.empty()) throw Error(ErrorCode::InvalidArgument, "no classes");
  Eigen::Index size = -1;
  double total = 0.0;
  for (std::size_t c = 0; c < images.size(); ++c) {
    const auto& cls = images[c];
    if (cls.empty()) throw Error(ErrorCode::InvalidArgument, fmt::format("class {} has no images", c));
    for (const auto& img : cls) {
      if (size < 0) size = img.size();
      if (img.size() != size) throw Error(ErrorCode::ResolutionMismatch, fmt::format("class {}", c));
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(size);
    for (const auto& img : cls) mean += img;
    mean /= static_cast<double>(cls.size());
    double class_sum = 0.0;
    for (const auto& img : cls) class_sum += (img - mean).lpNorm<1>();
    total += class_sum / static_cast<double>(cls.size());
  }
  const double value = total / static_cast<double>(images.size());
  if (baseline) {
    if (!(*baseline > 0.0)) throw Error(ErrorCode::InvalidArgument, "D_intra baseline must be > 0");
    return value / *baseline;
  }
  return value;
}

TarAtFar tar_at_far(std::span<const double> genuine, std::span<const double> imposter, double far) {
  if (genuine.empty() || imposter.empty()) throw Error(ErrorCode::EmptyScores, "need genuine and imposter scores");
  if (!(far > 0.0 && far < 1.0)) throw Error(ErrorCode::InvalidArgument, fmt::format("far = {} outside (0, 1)", far));

  std::vector<double> imp(imposter.begin(), imposter.end());
  std::sort(imp.begin(), imp.end(), std::greater<>());
  const auto n = imp.size();
  // Largest number of imposters we may accept; guard against far*n landing
  // a hair below an integer.
  const auto allowed = static_cast<std::size_t>(std::floor(far * static_cast<double>(n) * (1.0 + 1e-12)));
  // Everything strictly above imp[allowed] is accepted: at most `allowed`
  // imposters, plus any ties with imp[allowed], which the threshold excludes.
  const double threshold = allowed >= n ? -std::numeric_limits<double>::infinity()
                                        : std::nextafter(imp[allowed], std::numeric_limits<double>::infinity());

  std::size_t accepted = 0;
  for (double g : genuine) accepted += g >= threshold ? 1 : 0;
  TarAtFar out{far, static_cast<double>(accepted) / static_cast<double>(genuine.size()), threshold};
  out.underpowered = static_cast<double>(n) * far < 1.0;
  return out;
}

TarAtFar tar_at_far(const ScoreDistribution& scores, double far) {
  return tar_at_far(scores.genuine, scores.imposter, far);
}

nlohmann::json to_json(const ScoreSummary& s) {
  return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}};
}

nlohmann::json to_json(const MetricReport& report) {
  nlohmann::json tar = nlohmann::json::array();
  for (const auto& t : report.tar) {
    nlohmann::json row = {{"far", t.far}, {"tar", t.tar}, {"threshold", t.threshold}};
    if (t.underpowered) row["underpowered"] = true;
    tar.push_back(std::move(row));
  }
  nlohmann::json j = {{"u_class", report.u_class},
                      {"c_identity", report.c_identity},
                      {"d_intra", report.d_intra ? nlohmann::json(*report.d_intra) : nlohmann::json()},
                      {"r", report.r},
                      {"genuine", to_json(report.genuine)},
                      {"imposter", to_json(report.imposter)},
                      {"tar_at_far", std::move(tar)}};
  if (report.d_intra_baseline) j["d_intra_baseline"] = *report.d_intra_baseline;
  if (report.imposter_subsampled) j["imposter_subsampled"] = true;
  return j;
}

EmbeddingSet read_embeddings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, fmt::format("cannot open '{}'", path.string()));
  EmbeddingSet emb;
  std::map<std::string, std::size_t> index;
  std::string line;
  std::size_t line_no = 0;
  Eigen::Index dim = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (line_no == 1 && fields.size() >= 1 && fields[0] == "class_id") continue;
    if (fields.size() < 3) {
      throw Error(ErrorCode::ParseError, fmt::format("{}:{}: need class_id,sample_id,e0,...", path.string(), line_no));
    }
    Eigen::VectorXd f(static_cast<Eigen::Index>(fields.size() - 2));
    for (std::size_t k = 2; k < fields.size(); ++k) {
      try {
        std::size_t used = 0;
        f[static_cast<Eigen::Index>(k - 2)] = std::stod(fields[k], &used);
      } catch (const std::exception&) {
        throw Error(ErrorCode::ParseError, fmt::format("{}:{}: bad number '{}'", path.string(), line_no, fields[k]));
      }
    }
    if (dim >= 0 && f.size() != dim) {
      throw Error(ErrorCode::ParseError, fmt::format("{}:{}: dimension {} != {}", path.string(), line_no, f.size(), dim));
    }
    dim = f.size();
    auto [it, inserted] = index.emplace(fields[0], emb.classes.size());
    if (inserted) {
      emb.classes.emplace_back();
      emb.class_ids.push_back(fields[0]);
    }
    emb.classes[it->second].push_back(std::move(f));
  }
  return emb;
}

void write_embeddings_csv(const std::filesystem::path& path, const EmbeddingSet& emb) {
  std::ostringstream out;
  const Eigen::Index dim = emb.classes.empty() || emb.classes.front().empty() ? 0 : emb.classes.front().front().size();
  out << "class_id,sample_id";
  for (Eigen::Index k = 0; k < dim; ++k) out << ",e" << k;
  out << '\n';
  for (std::size_t c = 0; c < emb.classes.size(); ++c) {
    const std::string id = c < emb.class_ids.size() ? emb.class_ids[c] : std::to_string(c);
    for (std::size_t i = 0; i < emb.classes[c].size(); ++i) {
      out << id << ',' << i;
      for (Eigen::Index k = 0; k < emb.classes[c][i].size(); ++k) out << ',' << fmt::format("{}", emb.classes[c][i][k]);
      out << '\n';
    }
  }
  write_file_atomic(path, out.str());
}

}  // namespace creaseforge
