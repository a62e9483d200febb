#pragma once

// Layer saturation analysis and depth upscaling by layer duplication.
// A layer whose output token representations stay close (in cosine) to
// its inputs is "saturated"; saturated layers are duplicated in place.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace autothink::upscale {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LayerActivations {
  int layer_index = 0;
  Matrix input_repr;   // tokens x hidden
  Matrix output_repr;  // tokens x hidden
};

struct LayerCosine {
  double mean = 0.0;
  std::size_t excluded_tokens = 0;
  std::vector<double> per_token;  // NaN for excluded tokens
};

struct SaturationReport {
  std::vector<int> layers;  // analyzed layer indices, ascending
  std::vector<double> scores;
  std::vector<std::size_t> excluded_token_counts;
  std::vector<std::vector<double>> per_token;
};

struct UpscalePlan {
  int original_depth = 0;
  std::vector<int> duplicated;  // ascending
  std::vector<int> sequence;
};

class AllTokensDegenerate : public std::runtime_error {
 public:
  explicit AllTokensDegenerate(int layer)
      : std::runtime_error("layer " + std::to_string(layer) + ": every token has a near-zero representation") {}
};

inline constexpr double kDegenerateNorm = 1e-12;

/// Mean over tokens of cos(input_t, output_t). Tokens where either row
/// has norm below 1e-12 are skipped and counted.
inline LayerCosine layer_cosine_detail(const LayerActivations& act) {
  const auto& in = act.input_repr;
  const auto& out = act.output_repr;
  if (in.rows() != out.rows() || in.cols() != out.cols())
    throw std::invalid_argument("layer " + std::to_string(act.layer_index) + ": input/output shapes differ");
  if (in.rows() < 1 || in.cols() < 1)
    throw std::invalid_argument("layer " + std::to_string(act.layer_index) + ": empty activations");

  LayerCosine r;
  r.per_token.reserve(static_cast<std::size_t>(in.rows()));
  double sum = 0.0;
  std::size_t used = 0;
  for (Eigen::Index t = 0; t < in.rows(); ++t) {
    const double ni = in.row(t).norm(), no = out.row(t).norm();
    if (ni < kDegenerateNorm || no < kDegenerateNorm) {
      ++r.excluded_tokens;
      r.per_token.push_back(std::nan(""));
      continue;
    }
    const double c = std::clamp(in.row(t).dot(out.row(t)) / (ni * no), -1.0, 1.0);
    r.per_token.push_back(c);
    sum += c;
    ++used;
  }
  if (used == 0) throw AllTokensDegenerate(act.layer_index);
  r.mean = sum / static_cast<double>(used);
  return r;
}

inline double layer_cosine(const LayerActivations& act) { return layer_cosine_detail(act).mean; }

inline SaturationReport analyze_layers(std::vector<LayerActivations> layers) {
  std::sort(layers.begin(), layers.end(), [](const auto& a, const auto& b) { return a.layer_index < b.layer_index; });
  SaturationReport rep;
  for (const auto& l : layers) {
    auto c = layer_cosine_detail(l);
    rep.layers.push_back(l.layer_index);
    rep.scores.push_back(c.mean);
    rep.excluded_token_counts.push_back(c.excluded_tokens);
    rep.per_token.push_back(std::move(c.per_token));
  }
  return rep;
}

struct FractionSelect {
  double fraction;
};
struct ThresholdSelect {
  double threshold;
};
using SelectMode = std::variant<FractionSelect, ThresholdSelect>;

/// Fraction mode picks the ceil(f * L) highest-scoring layers; threshold
/// mode picks every layer with score >= tau. Equal scores at the cut go to
/// the deeper layer. Result is ascending by layer index.
inline std::vector<int> select_saturated(const SaturationReport& report, const SelectMode& mode) {
  const std::size_t L = report.scores.size();
  auto layer_at = [&](std::size_t i) { return report.layers.empty() ? static_cast<int>(i) : report.layers[i]; };
  std::vector<int> chosen;
  if (const auto* f = std::get_if<FractionSelect>(&mode)) {
    if (!(f->fraction > 0 && f->fraction <= 1)) throw std::invalid_argument("fraction must be in (0, 1]");
    // 1e-9 guards products like 0.25 * 64 that land a hair above an integer.
    const auto k = static_cast<std::size_t>(std::ceil(f->fraction * static_cast<double>(L) - 1e-9));
    std::vector<std::size_t> idx(L);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      if (report.scores[a] != report.scores[b]) return report.scores[a] > report.scores[b];
      return layer_at(a) > layer_at(b);
    });
    for (std::size_t i = 0; i < std::min(k, L); ++i) chosen.push_back(layer_at(idx[i]));
  } else {
    const double tau = std::get<ThresholdSelect>(mode).threshold;
    if (!(tau > -1 && tau <= 1)) throw std::invalid_argument("threshold must be in (-1, 1]");
    for (std::size_t i = 0; i < L; ++i)
      if (report.scores[i] >= tau) chosen.push_back(layer_at(i));
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

/// Identity order 0..L-1 with each duplicated layer repeated immediately
/// after itself.
inline UpscalePlan build_upscale_plan(int depth, const std::vector<int>& duplicated) {
  if (depth < 0) throw std::invalid_argument("depth must be non-negative");
  std::set<int> dup(duplicated.begin(), duplicated.end());
  for (int l : dup)
    if (l < 0 || l >= depth) throw std::out_of_range("layer " + std::to_string(l) + " outside 0.." + std::to_string(depth - 1));
  UpscalePlan plan;
  plan.original_depth = depth;
  plan.duplicated.assign(dup.begin(), dup.end());
  plan.sequence.reserve(static_cast<std::size_t>(depth) + dup.size());
  for (int l = 0; l < depth; ++l) {
    plan.sequence.push_back(l);
    if (dup.count(l)) plan.sequence.push_back(l);
  }
  return plan;
}

// ---- file formats -----------------------------------------------------------

inline Matrix read_csv_matrix(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path.string() + ": no rows");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

// Manifest: {"layers": [{"index": 0, "input": "l0_in.csv", "output": "l0_out.csv"}, ...]}
// with paths relative to the manifest. Total depth defaults to the number
// of listed layers unless "depth" is given.
struct Manifest {
  int depth = 0;
  std::vector<LayerActivations> layers;
};

inline Manifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw std::runtime_error("cannot open manifest " + manifest_path.string());
  const auto j = nlohmann::json::parse(f);
  const auto base = manifest_path.parent_path();
  Manifest m;
  int pos = 0;
  for (const auto& lj : j.at("layers")) {
    LayerActivations a;
    a.layer_index = lj.value("index", pos);
    a.input_repr = read_csv_matrix(base / lj.at("input").get<std::string>());
    a.output_repr = read_csv_matrix(base / lj.at("output").get<std::string>());
    m.layers.push_back(std::move(a));
    ++pos;
  }
  m.depth = j.value("depth", static_cast<int>(m.layers.size()));
  return m;
}

inline nlohmann::ordered_json to_json(const SaturationReport& r, bool verbose) {
  nlohmann::ordered_json j;
  j["layers"] = r.layers;
  j["scores"] = r.scores;
  j["excluded_token_counts"] = r.excluded_token_counts;
  if (verbose) {
    auto pt = nlohmann::ordered_json::array();
    for (const auto& row : r.per_token) {
      auto a = nlohmann::ordered_json::array();
      for (double v : row) a.push_back(std::isnan(v) ? nlohmann::ordered_json() : nlohmann::ordered_json(v));
      pt.push_back(std::move(a));
    }
    j["per_token"] = std::move(pt);
  }
  return j;
}

inline nlohmann::ordered_json to_json(const UpscalePlan& p) {
  nlohmann::ordered_json j;
  j["original_depth"] = p.original_depth;
  j["duplicated"] = p.duplicated;
  j["sequence"] = p.sequence;
  j["new_depth"] = p.sequence.size();
  return j;
}

}  // namespace autothink::upscale
