#include "dsel/data_model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

namespace dsel {

namespace {

constexpr std::array<char, 4> kMagic = {'D', 'S', 'E', 'L'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kMissingFile, "no such file: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

EmbeddingSet load_binary(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  const auto* bytes = reinterpret_cast<const unsigned char*>(raw.data());
  constexpr std::size_t kHeader = 4 + 4 + 4 + 4 + 1;
  if (raw.size() < kHeader || !std::equal(kMagic.begin(), kMagic.end(), raw.begin())) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": missing DSEL magic");
  }
  if (get_u32(bytes + 4) != kVersion) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": unsupported version");
  }
  const std::uint32_t n = get_u32(bytes + 8);
  const std::uint32_t dim = get_u32(bytes + 12);
  const std::uint8_t has_labels = bytes[16];
  if (dim == 0 || has_labels > 1) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": bad dim or label flag");
  }
  const std::size_t expected = kHeader + std::size_t{n} * dim * 4 + (has_labels ? std::size_t{n} * 4 : 0);
  if (raw.size() != expected) {
    throw Error(ErrorCode::kDimensionMismatch,
                path.string() + ": payload has " + std::to_string(raw.size()) +
                    " bytes, header implies " + std::to_string(expected));
  }
  Matrix features(n, dim);
  const unsigned char* p = bytes + kHeader;
  for (std::uint32_t i = 0; i < n; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j, p += 4) {
      features(i, j) = static_cast<double>(std::bit_cast<float>(get_u32(p)));
    }
  }
  std::optional<std::vector<int>> labels;
  if (has_labels) {
    labels.emplace(n);
    for (std::uint32_t i = 0; i < n; ++i, p += 4) {
      const std::uint32_t v = get_u32(p);
      if (v > static_cast<std::uint32_t>(std::numeric_limits<int>::max())) {
        throw Error(ErrorCode::kLabelOutOfRange, path.string() + ": label too large");
      }
      (*labels)[i] = static_cast<int>(v);
    }
  }
  return EmbeddingSet::create(std::move(features), std::move(labels));
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

EmbeddingSet load_csv(const std::filesystem::path& path) {
  const std::string raw = read_file(path);
  std::istringstream in(raw);
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kMalformedHeader, path.string() + ": empty file");
  }
  const auto header = split_commas(trim(line));
  bool has_labels = false;
  std::size_t dim = header.size();
  if (!header.empty() && trim(header.back()) == "label") {
    has_labels = true;
    --dim;
  }
  if (dim == 0) throw Error(ErrorCode::kMalformedHeader, path.string() + ": no feature columns");
  for (std::size_t j = 0; j < dim; ++j) {
    if (trim(header[j]) != "dim" + std::to_string(j)) {
      throw Error(ErrorCode::kMalformedHeader,
                  path.string() + ": expected column dim" + std::to_string(j));
    }
  }

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    const std::string_view body = trim(line);
    if (body.empty()) continue;
    const auto cells = split_commas(body);
    const std::size_t want = dim + (has_labels ? 1 : 0);
    if (cells.size() != want) {
      throw Error(ErrorCode::kDimensionMismatch, path.string() + ": row " + std::to_string(row) +
                                                     " has " + std::to_string(cells.size()) +
                                                     " columns, expected " + std::to_string(want));
    }
    for (std::size_t j = 0; j < dim; ++j) {
      const std::string_view cell = trim(cells[j]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        // from_chars accepts "inf"/"nan"; anything else unparsable is malformed.
        throw Error(ErrorCode::kMalformedHeader,
                    path.string() + ": cannot parse '" + std::string(cell) + "'");
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::kNonFinite, path.string() + ": non-finite value in row " +
                                               std::to_string(row));
      }
      values.push_back(v);
    }
    if (has_labels) {
      const std::string_view cell = trim(cells[dim]);
      long long v = 0;
      const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || ptr != cell.data() + cell.size()) {
        throw Error(ErrorCode::kMalformedHeader,
                    path.string() + ": bad label '" + std::string(cell) + "'");
      }
      if (v < 0 || v > std::numeric_limits<int>::max()) {
        throw Error(ErrorCode::kLabelOutOfRange,
                    path.string() + ": label out of range in row " + std::to_string(row));
      }
      labels.push_back(static_cast<int>(v));
    }
    ++row;
  }
  Matrix features(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(dim));
  std::copy(values.begin(), values.end(), features.data());
  std::optional<std::vector<int>> opt_labels;
  if (has_labels) opt_labels = std::move(labels);
  return EmbeddingSet::create(std::move(features), std::move(opt_labels));
}

}  // namespace

std::string_view to_string(HierarchyTier tier) {
  switch (tier) {
    case HierarchyTier::kSimilar: return "Similar";
    case HierarchyTier::kMedium: return "Medium";
    case HierarchyTier::kDissimilar: return "Dissimilar";
    case HierarchyTier::kOOD: return "OOD";
  }
  return "?";
}

HierarchyTier tier_from_string(std::string_view name) {
  for (HierarchyTier t : kAllTiers) {
    if (to_string(t) == name) return t;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown tier: " + std::string(name));
}

EmbeddingSet EmbeddingSet::create(Matrix features, std::optional<std::vector<int>> labels,
                                  std::vector<std::string> category_names,
                                  std::vector<std::string> source_tags) {
  if (features.cols() < 1) {
    throw Error(ErrorCode::kDimensionMismatch, "embedding dimension must be >= 1");
  }
  if (!features.allFinite()) {
    throw Error(ErrorCode::kNonFinite, "embedding contains non-finite values");
  }
  const auto n = static_cast<std::size_t>(features.rows());
  EmbeddingSet set;
  if (labels) {
    if (labels->size() != n) {
      throw Error(ErrorCode::kDimensionMismatch, "label count does not match instance count");
    }
    int max_label = -1;
    for (int l : *labels) {
      if (l < 0) throw Error(ErrorCode::kLabelOutOfRange, "negative label");
      max_label = std::max(max_label, l);
    }
    std::vector<bool> seen(static_cast<std::size_t>(max_label + 1), false);
    for (int l : *labels) seen[static_cast<std::size_t>(l)] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw Error(ErrorCode::kLabelOutOfRange, "labels are not dense: some category id in [0, " +
                                                   std::to_string(max_label) + "] never occurs");
    }
    set.n_categories_ = max_label + 1;
    if (!category_names.empty() &&
        category_names.size() != static_cast<std::size_t>(set.n_categories_)) {
      throw Error(ErrorCode::kInvalidArgument, "category_names does not match category count");
    }
    set.category_names_ = std::move(category_names);
  } else if (!category_names.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "category_names given without labels");
  }
  if (!source_tags.empty() && source_tags.size() != n) {
    throw Error(ErrorCode::kInvalidArgument, "source_tags must be per-instance");
  }
  set.features_ = std::move(features);
  set.labels_ = std::move(labels);
  set.source_tags_ = std::move(source_tags);
  return set;
}

const std::vector<int>& EmbeddingSet::labels() const {
  if (!labels_) throw Error(ErrorCode::kUnlabeled, "embedding set has no labels");
  return *labels_;
}

EmbeddingSet EmbeddingSet::subset(std::span<const std::size_t> rows) const {
  Matrix f(static_cast<Eigen::Index>(rows.size()), features_.cols());
  std::vector<std::string> tags;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    f.row(static_cast<Eigen::Index>(r)) = features_.row(static_cast<Eigen::Index>(rows[r]));
    if (!source_tags_.empty()) tags.push_back(source_tags_[rows[r]]);
  }
  if (!labels_) return create(std::move(f), std::nullopt, {}, std::move(tags));
  // Re-densify: a subset may drop whole categories.
  std::vector<int> raw;
  raw.reserve(rows.size());
  for (std::size_t r : rows) raw.push_back((*labels_)[r]);
  std::vector<int> remap(static_cast<std::size_t>(n_categories_), -1);
  std::set<int> present(raw.begin(), raw.end());
  int next = 0;
  std::vector<std::string> names;
  for (int c : present) {
    remap[static_cast<std::size_t>(c)] = next++;
    if (!category_names_.empty()) names.push_back(category_names_[static_cast<std::size_t>(c)]);
  }
  for (int& l : raw) l = remap[static_cast<std::size_t>(l)];
  return create(std::move(f), std::move(raw), std::move(names), std::move(tags));
}

EmbeddingSet EmbeddingSet::without_labels() const {
  return create(features_, std::nullopt, {}, source_tags_);
}

EmbeddingFormat format_from_path(const std::filesystem::path& path) {
  return path.extension() == ".csv" ? EmbeddingFormat::kCsv : EmbeddingFormat::kBinary;
}

EmbeddingSet load_embeddings(const std::filesystem::path& path, EmbeddingFormat format) {
  return format == EmbeddingFormat::kBinary ? load_binary(path) : load_csv(path);
}

void save_embeddings(const EmbeddingSet& set, const std::filesystem::path& path,
                     EmbeddingFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  const Matrix& f = set.features();
  if (format == EmbeddingFormat::kBinary) {
    out.write(kMagic.data(), kMagic.size());
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(set.size()));
    put_u32(out, static_cast<std::uint32_t>(set.dim()));
    const char flag = set.has_labels() ? 1 : 0;
    out.write(&flag, 1);
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      for (Eigen::Index j = 0; j < f.cols(); ++j) {
        put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(f(i, j))));
      }
    }
    if (set.has_labels()) {
      for (int l : set.labels()) put_u32(out, static_cast<std::uint32_t>(l));
    }
  } else {
    for (Eigen::Index j = 0; j < f.cols(); ++j) out << (j ? "," : "") << "dim" << j;
    if (set.has_labels()) out << ",label";
    out << '\n';
    char buf[32];
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      for (Eigen::Index j = 0; j < f.cols(); ++j) {
        std::snprintf(buf, sizeof buf, "%.9g", f(i, j));
        out << (j ? "," : "") << buf;
      }
      if (set.has_labels()) out << ',' << set.label(static_cast<std::size_t>(i));
      out << '\n';
    }
  }
  if (!out) throw Error(ErrorCode::kIo, "write failed for " + path.string());
}

EmbeddingSet merge_sources(std::span<const EmbeddingSet> sets,
                           std::span<const std::string> source_names) {
  if (sets.empty()) throw Error(ErrorCode::kInvalidArgument, "merge_sources needs at least one set");
  if (!source_names.empty() && source_names.size() != sets.size()) {
    throw Error(ErrorCode::kInvalidArgument, "one source name per set");
  }
  const std::size_t dim = sets.front().dim();
  std::size_t total = 0;
  for (const auto& s : sets) {
    if (!s.has_labels()) throw Error(ErrorCode::kUnlabeled, "merge_sources requires labeled sets");
    if (s.dim() != dim) throw Error(ErrorCode::kDimensionMismatch, "merge_sources: dim mismatch");
    total += s.size();
  }
  Matrix f(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(dim));
  std::vector<int> labels;
  std::vector<std::string> names;
  std::vector<std::string> tags;
  labels.reserve(total);
  tags.reserve(total);
  Eigen::Index row = 0;
  int offset = 0;
  for (std::size_t s = 0; s < sets.size(); ++s) {
    const auto& set = sets[s];
    const std::string source = source_names.empty() ? "source" + std::to_string(s) : source_names[s];
    f.middleRows(row, static_cast<Eigen::Index>(set.size())) = set.features();
    row += static_cast<Eigen::Index>(set.size());
    for (int l : set.labels()) labels.push_back(l + offset);
    for (std::size_t i = 0; i < set.size(); ++i) {
      tags.push_back(set.source_tags().empty() ? source : set.source_tags()[i]);
    }
    for (int c = 0; c < set.n_categories(); ++c) {
      const std::string base = set.category_names().empty()
                                   ? std::to_string(c)
                                   : set.category_names()[static_cast<std::size_t>(c)];
      names.push_back(source + "/" + base);
    }
    offset += set.n_categories();
  }
  return EmbeddingSet::create(std::move(f), std::move(labels), std::move(names), std::move(tags));
}

WeightAssignment WeightAssignment::all_ones(int n_categories) {
  WeightAssignment w;
  for (int c = 0; c < n_categories; ++c) w.category_weights[c] = 1.0;
  return w;
}

void WeightAssignment::validate() const {
  for (const auto& [c, v] : category_weights) {
    if (c < 0) throw Error(ErrorCode::kLabelOutOfRange, "negative category id in weights");
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::kInvalidArgument,
                  "weight for category " + std::to_string(c) + " must be finite and >= 0");
    }
  }
}

std::vector<double> instance_weights(const WeightAssignment& weights, const EmbeddingSet& labeled,
                                     bool default_missing_to_one) {
  weights.validate();
  std::vector<double> out;
  out.reserve(labeled.size());
  for (int l : labeled.labels()) {
    const auto it = weights.category_weights.find(l);
    if (it != weights.category_weights.end()) {
      out.push_back(it->second);
    } else if (default_missing_to_one) {
      out.push_back(1.0);
    } else {
      throw Error(ErrorCode::kMissingCategoryWeight,
                  "no weight for category " + std::to_string(l));
    }
  }
  return out;
}

std::string weights_to_json_string(const WeightAssignment& weights) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [c, v] : weights.category_weights) j[std::to_string(c)] = v;
  return j.dump(2);
}

WeightAssignment weights_from_json_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kMalformedHeader, std::string("weights JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(ErrorCode::kMalformedHeader, "weights JSON must be an object");
  WeightAssignment w;
  for (const auto& [key, value] : j.items()) {
    int c = 0;
    const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), c);
    if (ec != std::errc() || ptr != key.data() + key.size()) {
      throw Error(ErrorCode::kMalformedHeader, "weights JSON: bad category id '" + key + "'");
    }
    if (!value.is_number()) {
      throw Error(ErrorCode::kMalformedHeader, "weights JSON: value for '" + key + "' is not a number");
    }
    w.category_weights[c] = value.get<double>();
  }
  w.validate();
  return w;
}

WeightAssignment load_weights(const std::filesystem::path& path) {
  return weights_from_json_string(read_file(path));
}

void save_weights(const WeightAssignment& weights, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out << weights_to_json_string(weights) << '\n';
}

}  // namespace dsel
