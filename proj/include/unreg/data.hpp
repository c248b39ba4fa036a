#pragma once

#include "unreg/types.hpp"

#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace unreg {

/// Malformed input file; the message carries the line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Features, labels and a train/test partition of the row indices.
struct Dataset {
  RowMatrix<double> features;
  Vector<double> labels;
  std::vector<Index> train;
  std::vector<Index> test;

  Index size() const { return features.rows(); }
  Index dim() const { return features.cols(); }

  /// Every row in the training split.
  static Dataset allTrain(RowMatrix<double> features, Vector<double> labels);
  /// Rows listed in idx, all marked as training rows.
  Dataset rows(const std::vector<Index>& idx) const;
  Dataset trainSet() const { return rows(train); }
  Dataset testSet() const { return rows(test); }
};

enum class DataFormat { libsvm, csv };

DataFormat parseDataFormat(const std::string& name);

Dataset parseLibsvm(std::istream& in);
/// Header row required; the label column is named "label".
Dataset parseCsv(std::istream& in);
Dataset loadDataset(const std::string& path, DataFormat format);

/// Header f0..f{d-1},label; values printed with 17 significant digits.
void writeCsv(std::ostream& out, const Dataset& ds);
void saveCsv(const std::string& path, const Dataset& ds);

/// Scales the whole matrix so the mean l2 norm of training rows is 1.
Dataset rowNormalize(Dataset ds);

/// z(x) = sqrt(2/D) cos(W x + b) with W ~ N(0, bandwidth^-2), b ~ U[0, 2 pi).
Dataset randomFourierFeatures(const Dataset& ds, Index outputDim, double bandwidth, std::uint64_t seed);
/// Same map with explicit W (D x d) and b.
Dataset randomFourierFeatures(const Dataset& ds, const Eigen::MatrixXd& W, const Vector<double>& b);

/// Appends a constant-one column.
Dataset appendAffineFeature(Dataset ds);

/// Random held-out test fraction of the current training rows.
Dataset holdoutSplit(Dataset ds, double testFraction, std::uint64_t seed);

}  // namespace unreg
