#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "metaclust/json_io.hpp"
#include "metaclust/tensor.hpp"

namespace metaclust::data {

struct LabeledDataset {
  std::string name;
  Tensor x;                               // N x D
  std::vector<int> y;                     // empty for unlabeled data
  std::vector<std::string> label_names;   // label id -> original label text
  std::vector<std::string> feature_names;

  std::size_t size() const { return x.rows(); }
  std::size_t dim() const { return x.cols(); }
  bool labeled() const { return !y.empty(); }
  std::size_t categories() const { return label_names.size(); }
  // Row ids of every category, indexed by label id.
  std::vector<std::vector<std::size_t>> category_index() const;
};

// Header row required; the column named "label" holds categories (mapped to
// contiguous ids in order of first appearance). With require_label = false a
// missing label column yields an unlabeled dataset.
LabeledDataset load_csv(const std::filesystem::path& path, bool require_label = true);
void save_csv(const LabeledDataset& data, const std::filesystem::path& path);

// Rows with the given labels, relabelled contiguously in the given order.
LabeledDataset subset_by_categories(const LabeledDataset& data, const std::vector<int>& labels,
                                    std::string name);

struct SplitSpec {
  double train = 0.6;
  double validation = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
};

struct Split {
  LabeledDataset train, validation, test;
  json manifest;  // {"seed", "fractions", "categories": {label: split}}
};

// Categories are shuffled by seed and partitioned by count; validation and
// test receive floor(fraction * K) categories, train the remainder.
Split split_by_category(const LabeledDataset& data, const SplitSpec& spec);

enum class Family { Blobs, ScrambledBlobs };

struct SyntheticSpec {
  Family family = Family::Blobs;
  std::size_t categories = 10;
  std::size_t instances_per_category = 20;
  std::size_t dim = 2;
  double separation = 10.0;
  std::uint64_t scramble_seed = 7;
  // Half-width of the hypercube holding category means; 0 picks
  // separation * (0.5 * categories^(1/dim) + 0.5).
  double box_half_width = 0.0;

  void validate() const;
};

json to_json(const SyntheticSpec& s);
void update_from_json(SyntheticSpec& s, const json& j);

// blobs: means uniform in the hypercube with pairwise distance >= separation
// (rejection sampling, InfeasibleSpecError after 1e5 attempts), unit-variance
// Gaussian instances. scrambled_blobs: the same points pushed through a fixed
// invertible map x -> h Q2 cube(Q1 x / h), Q1, Q2 random rotations.
LabeledDataset gen_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 0 for constant features

  static Standardizer fit(const Tensor& x);
  Tensor apply(const Tensor& x) const;
  LabeledDataset apply(LabeledDataset data) const;
};

struct PcaProjection {
  std::vector<double> mean;       // D
  Tensor components;              // dims x D, rows are unit principal directions
  std::vector<double> explained;  // variance along each component, descending

  Tensor project(const Tensor& x) const;
  Tensor reconstruct(const Tensor& projected) const;
};

// Principal directions of the centred training matrix.
PcaProjection pca_fit(const Tensor& train, std::size_t dims);

}  // namespace metaclust::data
