#include "metaclust/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <Eigen/Dense>

#include "metaclust/error.hpp"

namespace metaclust::data {
namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& field, std::size_t line) {
  if (field.empty()) throw ParseError("empty numeric field", line);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw ParseError("not a number: '" + field + "'", line);
  }
  if (used != field.size()) throw ParseError("not a number: '" + field + "'", line);
  if (!std::isfinite(v)) throw ParseError("non-finite value '" + field + "'", line);
  return v;
}

using Rng = std::mt19937_64;

Eigen::MatrixXd random_rotation(std::size_t d, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::MatrixXd a(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR();
  for (std::size_t j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

double default_half_width(const SyntheticSpec& s) {
  return s.separation *
         (0.5 * std::pow(static_cast<double>(s.categories), 1.0 / static_cast<double>(s.dim)) + 0.5);
}

}  // namespace

std::vector<std::vector<std::size_t>> LabeledDataset::category_index() const {
  std::vector<std::vector<std::size_t>> out(categories());
  for (std::size_t i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(y[i])].push_back(i);
  return out;
}

LabeledDataset load_csv(const std::filesystem::path& path, bool require_label) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string(), 0);

  LabeledDataset data;
  data.name = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_fields(line);
      break;
    }
  }
  if (header.empty()) throw ParseError(path.string() + ": empty file", 0);

  std::ptrdiff_t label_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "label") {
      if (label_col >= 0) throw ParseError("duplicate label column", line_no);
      label_col = static_cast<std::ptrdiff_t>(c);
    } else {
      data.feature_names.push_back(header[c]);
    }
  }
  if (label_col < 0 && require_label) throw ParseError("no 'label' column in header", line_no);
  if (data.feature_names.empty()) throw ParseError("no feature columns", line_no);

  std::map<std::string, int> label_ids;
  std::vector<double> values;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ParseError("expected " + std::to_string(header.size()) + " fields, found " +
                           std::to_string(fields.size()),
                       line_no);
    for (std::size_t c = 0; c < fields.size(); ++c) {
      if (static_cast<std::ptrdiff_t>(c) == label_col) {
        if (fields[c].empty()) throw ParseError("empty label", line_no);
        auto [it, inserted] = label_ids.try_emplace(fields[c], static_cast<int>(label_ids.size()));
        if (inserted) data.label_names.push_back(fields[c]);
        data.y.push_back(it->second);
      } else {
        values.push_back(parse_double(fields[c], line_no));
      }
    }
    ++rows;
  }
  if (rows == 0) throw ParseError(path.string() + ": no data rows", line_no);
  data.x = Tensor({rows, data.feature_names.size()}, std::move(values));
  return data;
}

void save_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ostringstream out;
  for (std::size_t c = 0; c < data.dim(); ++c) {
    if (c) out << ',';
    out << (c < data.feature_names.size() ? data.feature_names[c] : "x" + std::to_string(c));
  }
  if (data.labeled()) out << ",label";
  out << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t c = 0; c < data.dim(); ++c) {
      if (c) out << ',';
      out << format_double(data.x(i, c));
    }
    if (data.labeled()) out << ',' << data.label_names[static_cast<std::size_t>(data.y[i])];
    out << '\n';
  }
  write_text_file(path, out.str());
}

LabeledDataset subset_by_categories(const LabeledDataset& data, const std::vector<int>& labels,
                                    std::string name) {
  std::vector<int> remap(data.categories(), -1);
  LabeledDataset out;
  out.name = std::move(name);
  out.feature_names = data.feature_names;
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= data.categories())
      throw ContractError("subset_by_categories: unknown label " + std::to_string(l));
    remap[static_cast<std::size_t>(l)] = static_cast<int>(out.label_names.size());
    out.label_names.push_back(data.label_names[static_cast<std::size_t>(l)]);
  }
  std::vector<double> values;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int id = remap[static_cast<std::size_t>(data.y[i])];
    if (id < 0) continue;
    out.y.push_back(id);
    for (std::size_t c = 0; c < data.dim(); ++c) values.push_back(data.x(i, c));
  }
  out.x = Tensor({out.y.size(), data.dim()}, std::move(values));
  return out;
}

Split split_by_category(const LabeledDataset& data, const SplitSpec& spec) {
  if (!data.labeled()) throw ContractError("split_by_category: dataset has no labels");
  for (double f : {spec.train, spec.validation, spec.test})
    if (!(f >= 0.0)) throw ContractError("split_by_category: negative fraction");
  if (std::fabs(spec.train + spec.validation + spec.test - 1.0) > 1e-9)
    throw ContractError("split_by_category: fractions must sum to 1");

  const std::size_t k = data.categories();
  const auto n_val = static_cast<std::size_t>(std::floor(spec.validation * k + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(spec.test * k + 1e-9));
  if (n_val == 0 || n_test == 0 || n_val + n_test >= k)
    throw ContractError("split_by_category: " + std::to_string(k) +
                        " categories cannot fill every split");

  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<int> val(order.begin(), order.begin() + n_val);
  std::vector<int> test(order.begin() + n_val, order.begin() + n_val + n_test);
  std::vector<int> train(order.begin() + n_val + n_test, order.end());
  for (auto* part : {&val, &test, &train}) std::sort(part->begin(), part->end());

  Split s;
  s.train = subset_by_categories(data, train, data.name + ".train");
  s.validation = subset_by_categories(data, val, data.name + ".validation");
  s.test = subset_by_categories(data, test, data.name + ".test");
  json cats = json::object();
  for (int l : train) cats[data.label_names[l]] = "train";
  for (int l : val) cats[data.label_names[l]] = "validation";
  for (int l : test) cats[data.label_names[l]] = "test";
  s.manifest = {{"seed", spec.seed},
                {"fractions", {{"train", spec.train}, {"validation", spec.validation},
                               {"test", spec.test}}},
                {"categories", cats}};
  return s;
}

void SyntheticSpec::validate() const {
  if (categories < 1) throw ConfigError("synthetic: categories must be >= 1");
  if (instances_per_category < 1) throw ConfigError("synthetic: instances_per_category must be >= 1");
  if (dim < 2) throw ConfigError("synthetic: dim must be >= 2");
  if (!(separation > 0.0) || !std::isfinite(separation))
    throw ConfigError("synthetic: separation must be finite and > 0");
  if (!(box_half_width >= 0.0) || !std::isfinite(box_half_width))
    throw ConfigError("synthetic: box_half_width must be finite and >= 0");
}

json to_json(const SyntheticSpec& s) {
  return {{"family", s.family == Family::Blobs ? "blobs" : "scrambled_blobs"},
          {"categories", s.categories},
          {"instances_per_category", s.instances_per_category},
          {"dim", s.dim},
          {"separation", s.separation},
          {"scramble_seed", s.scramble_seed},
          {"box_half_width", s.box_half_width}};
}

void update_from_json(SyntheticSpec& s, const json& j) {
  if (!j.is_object()) throw ConfigError("synthetic: expected an object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "family") {
        const auto name = v.get<std::string>();
        if (name == "blobs") s.family = Family::Blobs;
        else if (name == "scrambled_blobs") s.family = Family::ScrambledBlobs;
        else throw ConfigError("synthetic: unknown family '" + name + "'");
      } else if (key == "categories") s.categories = json_count(v, "synthetic.categories");
      else if (key == "instances_per_category") s.instances_per_category = json_count(v, "synthetic.instances_per_category");
      else if (key == "dim") s.dim = json_count(v, "synthetic.dim");
      else if (key == "separation") s.separation = v.get<double>();
      else if (key == "scramble_seed") s.scramble_seed = json_u64(v, "synthetic.scramble_seed");
      else if (key == "box_half_width") s.box_half_width = v.get<double>();
      else throw ConfigError("synthetic: unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic: ") + e.what());
  }
  s.validate();
}

LabeledDataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t k = spec.categories, d = spec.dim, m = spec.instances_per_category;
  const double h = spec.box_half_width > 0.0 ? spec.box_half_width : default_half_width(spec);

  Rng rng(seed);
  std::uniform_real_distribution<double> box(-h, h);
  std::normal_distribution<double> normal;

  constexpr std::size_t kMaxAttempts = 100000;
  // A partial configuration can leave no room for the next mean; start over
  // after this many consecutive rejections.
  constexpr std::size_t kStallLimit = 1000;
  std::vector<std::vector<double>> means;
  std::size_t attempts = 0, stalled = 0;
  while (means.size() < k) {
    if (stalled == kStallLimit) {
      means.clear();
      stalled = 0;
    }
    if (++attempts > kMaxAttempts)
      throw InfeasibleSpecError("cannot place " + std::to_string(k) + " means at separation " +
                                format_double(spec.separation) + " in a box of half-width " +
                                format_double(h) + " after " + std::to_string(kMaxAttempts) +
                                " attempts");
    std::vector<double> c(d);
    for (auto& v : c) v = box(rng);
    const bool ok = std::all_of(means.begin(), means.end(), [&](const auto& o) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (c[j] - o[j]) * (c[j] - o[j]);
      return std::sqrt(s) >= spec.separation;
    });
    if (ok) {
      means.push_back(std::move(c));
      stalled = 0;
    } else {
      ++stalled;
    }
  }

  LabeledDataset out;
  out.name = spec.family == Family::Blobs ? "blobs" : "scrambled_blobs";
  for (std::size_t j = 0; j < d; ++j) out.feature_names.push_back("x" + std::to_string(j));
  for (std::size_t c = 0; c < k; ++c) out.label_names.push_back("c" + std::to_string(c));
  out.x = Tensor(k * m, d);
  for (std::size_t c = 0; c < k; ++c)
    for (std::size_t i = 0; i < m; ++i) {
      out.y.push_back(static_cast<int>(c));
      for (std::size_t j = 0; j < d; ++j) out.x(c * m + i, j) = means[c][j] + normal(rng);
    }

  if (spec.family == Family::ScrambledBlobs) {
    Rng srng(spec.scramble_seed);
    const Eigen::MatrixXd q1 = random_rotation(d, srng);
    const Eigen::MatrixXd q2 = random_rotation(d, srng);
    Eigen::VectorXd v(d);
    for (std::size_t i = 0; i < out.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) v(j) = out.x(i, j) / h;
      Eigen::VectorXd u = q1 * v;
      for (std::size_t j = 0; j < d; ++j) u(j) = u(j) * u(j) * u(j);
      const Eigen::VectorXd w = q2 * u;
      for (std::size_t j = 0; j < d; ++j) out.x(i, j) = h * w(j);
    }
  }
  return out;
}

Standardizer Standardizer::fit(const Tensor& x) {
  if (x.rows() == 0) throw ContractError("Standardizer::fit: empty matrix");
  const std::size_t n = x.rows(), d = x.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
  for (auto& m : s.mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) s.scale[j] += (x(i, j) - s.mean[j]) * (x(i, j) - s.mean[j]);
  for (auto& v : s.scale) {
    const double sd = std::sqrt(v / static_cast<double>(n));
    v = sd > 1e-12 ? 1.0 / sd : 0.0;
  }
  return s;
}

Tensor Standardizer::apply(const Tensor& x) const {
  if (x.cols() != mean.size())
    throw ShapeError("Standardizer: fitted on " + std::to_string(mean.size()) + " features, got " +
                     std::to_string(x.cols()));
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) * scale[j];
  return out;
}

LabeledDataset Standardizer::apply(LabeledDataset data) const {
  data.x = apply(data.x);
  return data;
}

PcaProjection pca_fit(const Tensor& train, std::size_t dims) {
  const std::size_t n = train.rows(), d = train.cols();
  if (n < 2) throw ContractError("pca_fit: need at least two rows");
  if (dims < 1 || dims > std::min(n, d))
    throw ContractError("pca_fit: dims must lie in [1, " + std::to_string(std::min(n, d)) + "]");
  Eigen::MatrixXd x(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) x(i, j) = train(i, j);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  x.rowwise() -= mu;
  const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("pca_fit: eigendecomposition failed");

  PcaProjection p;
  p.mean.assign(mu.data(), mu.data() + d);
  p.components = Tensor(dims, d);
  // Eigenvalues come in ascending order.
  for (std::size_t c = 0; c < dims; ++c) {
    const auto col = static_cast<Eigen::Index>(d - 1 - c);
    Eigen::VectorXd v = eig.eigenvectors().col(col);
    Eigen::Index big = 0;
    v.cwiseAbs().maxCoeff(&big);
    if (v(big) < 0) v = -v;  // deterministic sign
    for (std::size_t j = 0; j < d; ++j) p.components(c, j) = v(static_cast<Eigen::Index>(j));
    p.explained.push_back(std::max(0.0, eig.eigenvalues()(col)));
  }
  return p;
}

Tensor PcaProjection::project(const Tensor& x) const {
  const std::size_t d = mean.size();
  if (x.cols() != d)
    throw ShapeError("pca project: expected " + std::to_string(d) + " features, got " +
                     std::to_string(x.cols()));
  Tensor out(x.rows(), components.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < components.rows(); ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (x(i, j) - mean[j]) * components(c, j);
      out(i, c) = s;
    }
  return out;
}

Tensor PcaProjection::reconstruct(const Tensor& projected) const {
  const std::size_t d = mean.size();
  Tensor out(projected.rows(), d);
  for (std::size_t i = 0; i < projected.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = mean[j];
      for (std::size_t c = 0; c < components.rows(); ++c) s += projected(i, c) * components(c, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace metaclust::data
