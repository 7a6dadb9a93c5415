#pragma once

#include <limits>
#include <string>
#include <vector>

#include "json.hpp"
#include "hyperfed/tensor.hpp"

namespace hyperfed {

// Returned by psnr() for identical images.
inline constexpr double kPsnrIdentical = std::numeric_limits<double>::infinity();

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double data_range = 1.0);

struct SsimOptions {
  int window_size = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double data_range = 1.0;
};

// Mean local SSIM over every window position fully inside the image
// (Gaussian weights, no padding). Inputs are 2-D.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& options = {});

template <typename T>
std::vector<T> line_profile(const Tensor<T>& image, int row);

// Minimum, quartiles (linear interpolation between order statistics) and
// maximum.
struct FiveNumberSummary {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};
FiveNumberSummary five_number_summary(std::vector<double> values);

struct SampleMetric {
  int institution_id = 0;
  int sample_index = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct InstitutionSummary {
  int institution_id = 0;
  int count = 0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  FiveNumberSummary psnr_box;
  FiveNumberSummary ssim_box;
};

struct MetricReport {
  std::vector<SampleMetric> samples;
  std::vector<InstitutionSummary> institutions;  // ascending id
  // Overall = mean over all samples.
  double overall_psnr = 0.0;
  double overall_ssim = 0.0;
  // Alternative overall: mean of the institution means.
  double overall_psnr_by_institution = 0.0;
  double overall_ssim_by_institution = 0.0;
  FiveNumberSummary overall_psnr_box;
  FiveNumberSummary overall_ssim_box;

  static MetricReport from_samples(std::vector<SampleMetric> samples);

  nlohmann::json to_json() const;
  // Rows: one per institution then "Overall"; columns institution,count,psnr,ssim.
  std::string to_csv() const;
  std::string samples_csv() const;
  // institution,metric,min,q1,median,q3,max
  std::string boxplot_csv() const;
};

// Fixed-precision formatting shared by every emitted table (round-trips
// doubles exactly; infinity prints as "inf").
std::string format_number(double value);
double parse_number(const std::string& text);
nlohmann::json number_to_json(double value);

}  // namespace hyperfed
