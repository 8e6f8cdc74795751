#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dsel/types.hpp"

namespace dsel {

// Similarity tier of a synthetic source pool relative to the target.
enum class HierarchyTier { kSimilar, kMedium, kDissimilar, kOOD };

inline constexpr HierarchyTier kAllTiers[] = {HierarchyTier::kSimilar, HierarchyTier::kMedium,
                                              HierarchyTier::kDissimilar, HierarchyTier::kOOD};

std::string_view to_string(HierarchyTier tier);
HierarchyTier tier_from_string(std::string_view name);

/// Dense n x dim feature matrix with optional dense 0-based category labels.
///
/// Instances are immutable after construction; `create` validates every
/// invariant (finite values, dim >= 1, every category id in range occurs).
class EmbeddingSet {
 public:
  EmbeddingSet() = default;

  static EmbeddingSet create(Matrix features, std::optional<std::vector<int>> labels = std::nullopt,
                             std::vector<std::string> category_names = {},
                             std::vector<std::string> source_tags = {});

  const Matrix& features() const { return features_; }
  std::size_t size() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(features_.cols()); }
  bool has_labels() const { return labels_.has_value(); }
  const std::vector<int>& labels() const;
  int label(std::size_t i) const { return labels()[i]; }
  int n_categories() const { return n_categories_; }
  const std::vector<std::string>& category_names() const { return category_names_; }
  // Per-instance origin pool; empty when the set carries no provenance.
  const std::vector<std::string>& source_tags() const { return source_tags_; }

  // Rows in ascending index order; labels and tags follow.
  EmbeddingSet subset(std::span<const std::size_t> rows) const;
  // Drops labels (and category names) but keeps provenance.
  EmbeddingSet without_labels() const;

 private:
  Matrix features_;
  std::optional<std::vector<int>> labels_;
  int n_categories_ = 0;
  std::vector<std::string> category_names_;
  std::vector<std::string> source_tags_;
};

enum class EmbeddingFormat { kBinary, kCsv };

EmbeddingFormat format_from_path(const std::filesystem::path& path);

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format);
void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                     EmbeddingFormat format);

// Concatenates labeled sets and reindexes categories into one dense range.
// Category names become "<source>/<name>"; each instance is tagged with its source.
EmbeddingSet merge_sources(std::span<const EmbeddingSet> sets,
                           std::span<const std::string> source_names = {});

/// Per-category weight; instances inherit the weight of their category.
struct WeightAssignment {
  std::map<int, double> category_weights;

  static WeightAssignment all_ones(int n_categories);
  void validate() const;
};

// omega_i = omega^{label(i)}. Missing categories throw unless default_missing_to_one.
std::vector<double> instance_weights(const WeightAssignment& weights, const EmbeddingSet& labeled,
                                     bool default_missing_to_one = false);

// JSON object mapping category-id string to number.
WeightAssignment load_weights(const std::filesystem::path& path);
void save_weights(const WeightAssignment& weights, const std::filesystem::path& path);
std::string weights_to_json_string(const WeightAssignment& weights);
WeightAssignment weights_from_json_string(const std::string& text);

}  // namespace dsel
