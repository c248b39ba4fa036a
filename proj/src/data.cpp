#include "unreg/data.hpp"
#include "unreg/trace.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <random>
#include <sstream>

namespace unreg {

namespace {

std::string at(std::size_t line) { return "line " + std::to_string(line) + ": "; }

double parseReal(std::string_view text, std::size_t line) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw ParseError(at(line) + "not a number: '" + std::string(text) + "'");
  }
  return value;
}

std::vector<std::string_view> splitOn(std::string_view text, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = text.find(sep, start);
    out.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

bool blank(std::string_view line) {
  return line.find_first_not_of(" \t\r") == std::string_view::npos;
}

}  // namespace

Dataset Dataset::allTrain(RowMatrix<double> features, Vector<double> labels) {
  requireSameDim(features.rows(), labels.size(), "Dataset labels");
  Dataset ds;
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  ds.train.resize(ds.features.rows());
  for (Index i = 0; i < ds.features.rows(); ++i) ds.train[i] = i;
  return ds;
}

Dataset Dataset::rows(const std::vector<Index>& idx) const {
  RowMatrix<double> f(static_cast<Index>(idx.size()), dim());
  Vector<double> l(static_cast<Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    f.row(k) = features.row(idx[k]);
    l[k] = labels[idx[k]];
  }
  return allTrain(std::move(f), std::move(l));
}

DataFormat parseDataFormat(const std::string& name) {
  if (name == "libsvm") return DataFormat::libsvm;
  if (name == "csv") return DataFormat::csv;
  throw ConfigError("unknown data format '" + name + "' (expected libsvm or csv)");
}

Dataset parseLibsvm(std::istream& in) {
  std::vector<double> labels;
  std::vector<std::vector<std::pair<Index, double>>> rows;
  Index dim = 0;
  std::string line;
  std::size_t lineNo = 0;
  while (std::getline(in, line)) {
    ++lineNo;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    if (blank(view)) continue;
    std::istringstream tokens{std::string(view)};
    std::string token;
    tokens >> token;
    labels.push_back(parseReal(token, lineNo));
    auto& entries = rows.emplace_back();
    Index previous = 0;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos) throw ParseError(at(lineNo) + "expected index:value, got '" + token + "'");
      const double rawIndex = parseReal(std::string_view(token).substr(0, colon), lineNo);
      if (rawIndex < 1 || rawIndex != std::floor(rawIndex)) {
        throw ParseError(at(lineNo) + "feature indices are positive integers");
      }
      const auto index = static_cast<Index>(rawIndex);
      if (index <= previous) throw ParseError(at(lineNo) + "feature indices must increase");
      previous = index;
      entries.emplace_back(index - 1, parseReal(std::string_view(token).substr(colon + 1), lineNo));
      dim = std::max(dim, index);
    }
  }
  if (labels.empty()) throw ParseError("libsvm input contains no examples");
  if (dim == 0) throw ParseError("libsvm input contains no features");
  RowMatrix<double> features = RowMatrix<double>::Zero(static_cast<Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (const auto& [j, v] : rows[i]) features(static_cast<Index>(i), j) = v;
  }
  return Dataset::allTrain(std::move(features), Eigen::Map<Vector<double>>(labels.data(), labels.size()));
}

Dataset parseCsv(std::istream& in) {
  std::string line;
  std::size_t lineNo = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineNo;
    if (blank(line)) continue;
    for (auto cell : splitOn(line, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
      while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
      header.emplace_back(cell);
    }
    break;
  }
  if (header.empty()) throw ParseError("csv input is empty");
  const auto labelIt = std::find(header.begin(), header.end(), "label");
  if (labelIt == header.end()) throw ParseError(at(lineNo) + "no column named 'label'");
  const auto labelCol = static_cast<std::size_t>(labelIt - header.begin());
  const auto width = header.size();
  if (width < 2) throw ParseError(at(lineNo) + "need at least one feature column");

  std::vector<double> values;
  std::vector<double> labels;
  while (std::getline(in, line)) {
    ++lineNo;
    if (blank(line)) continue;
    const auto cells = splitOn(line, ',');
    if (cells.size() != width) {
      throw ParseError(at(lineNo) + "expected " + std::to_string(width) + " columns, found " +
                       std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < width; ++c) {
      const double v = parseReal(cells[c], lineNo);
      if (c == labelCol) {
        labels.push_back(v);
      } else {
        values.push_back(v);
      }
    }
  }
  if (labels.empty()) throw ParseError("csv input contains no examples");
  const auto n = static_cast<Index>(labels.size());
  const auto d = static_cast<Index>(width - 1);
  RowMatrix<double> features = Eigen::Map<RowMatrix<double>>(values.data(), n, d);
  return Dataset::allTrain(std::move(features), Eigen::Map<Vector<double>>(labels.data(), n));
}

Dataset loadDataset(const std::string& path, DataFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  try {
    return format == DataFormat::libsvm ? parseLibsvm(in) : parseCsv(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void writeCsv(std::ostream& out, const Dataset& ds) {
  for (Index j = 0; j < ds.dim(); ++j) out << 'f' << j << ',';
  out << "label\n";
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) out << formatReal(ds.features(i, j)) << ',';
    out << formatReal(ds.labels[i]) << '\n';
  }
}

void saveCsv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  writeCsv(out, ds);
}

Dataset rowNormalize(Dataset ds) {
  if (ds.train.empty()) throw ConfigError("rowNormalize: no training rows");
  double total = 0;
  for (Index i : ds.train) total += ds.features.row(i).norm();
  const double mean = total / double(ds.train.size());
  if (!(mean > 0)) throw ConfigError("rowNormalize: all training rows are zero");
  ds.features /= mean;
  return ds;
}

Dataset randomFourierFeatures(const Dataset& ds, Index outputDim, double bandwidth, std::uint64_t seed) {
  if (outputDim < 1) throw ConfigError("randomFourierFeatures: output dimension must be >= 1");
  if (!(bandwidth > 0)) throw ConfigError("randomFourierFeatures: bandwidth must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / bandwidth);
  std::uniform_real_distribution<double> phase(0.0, 2 * std::numbers::pi);
  Eigen::MatrixXd W(outputDim, ds.dim());
  for (Index r = 0; r < outputDim; ++r) {
    for (Index c = 0; c < ds.dim(); ++c) W(r, c) = normal(rng);
  }
  Vector<double> b(outputDim);
  for (Index r = 0; r < outputDim; ++r) b[r] = phase(rng);
  return randomFourierFeatures(ds, W, b);
}

Dataset randomFourierFeatures(const Dataset& ds, const Eigen::MatrixXd& W, const Vector<double>& b) {
  requireSameDim(ds.dim(), W.cols(), "randomFourierFeatures W");
  requireSameDim(W.rows(), b.size(), "randomFourierFeatures b");
  Dataset out = ds;
  RowMatrix<double> projected = ds.features * W.transpose();
  projected.rowwise() += b.transpose();
  out.features = std::sqrt(2.0 / double(W.rows())) * projected.array().cos().matrix();
  return out;
}

Dataset appendAffineFeature(Dataset ds) {
  if (ds.size() == 0) throw ConfigError("appendAffineFeature: empty dataset");
  RowMatrix<double> f(ds.size(), ds.dim() + 1);
  f.leftCols(ds.dim()) = ds.features;
  f.col(ds.dim()).setOnes();
  ds.features = std::move(f);
  return ds;
}

Dataset holdoutSplit(Dataset ds, double testFraction, std::uint64_t seed) {
  if (!(testFraction >= 0 && testFraction < 1)) throw ConfigError("holdoutSplit: fraction must lie in [0, 1)");
  std::vector<Index> rows = ds.train;
  std::mt19937_64 rng(seed);
  // Fisher-Yates with our own draws keeps the split identical across standard libraries
  for (std::size_t k = rows.size(); k > 1; --k) {
    const auto j = static_cast<std::size_t>(rng() % k);
    std::swap(rows[k - 1], rows[j]);
  }
  const auto held = static_cast<std::size_t>(std::floor(testFraction * double(rows.size())));
  ds.test.assign(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(held));
  ds.train.assign(rows.begin() + static_cast<std::ptrdiff_t>(held), rows.end());
  std::sort(ds.test.begin(), ds.test.end());
  std::sort(ds.train.begin(), ds.train.end());
  return ds;
}

}  // namespace unreg
