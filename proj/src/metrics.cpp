#include "hyperfed/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

namespace hyperfed {

template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double data_range) {
  require_same_shape(a, b, "psnr");
  if (!(data_range > 0)) throw ConfigError("psnr: data_range must be positive");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrIdentical;
  return 10.0 * std::log10(data_range * data_range / mse);
}

namespace {

// Valid-mode separable filtering of a row-major image with a 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t rows,
                                 std::size_t cols, const std::vector<double>& k) {
  const std::size_t w = k.size();
  const std::size_t out_c = cols - w + 1, out_r = rows - w + 1;
  std::vector<double> tmp(rows * out_c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < out_c; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w; ++i) acc += k[i] * img[r * cols + c + i];
      tmp[r * out_c + c] = acc;
    }
  }
  std::vector<double> out(out_r * out_c, 0.0);
  for (std::size_t r = 0; r < out_r; ++r) {
    for (std::size_t c = 0; c < out_c; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w; ++i) acc += k[i] * tmp[(r + i) * out_c + c];
      out[r * out_c + c] = acc;
    }
  }
  return out;
}

}  // namespace

template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, const SsimOptions& o) {
  require_same_shape(a, b, "ssim");
  if (a.rank() != 2) throw DimensionError("ssim: expected 2-D images, got " + shape_to_string(a.shape()));
  if (o.window_size <= 0 || !(o.sigma > 0) || !(o.data_range > 0)) {
    throw ConfigError("ssim: window_size, sigma and data_range must be positive");
  }
  const auto w = static_cast<std::size_t>(o.window_size);
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  if (w > rows || w > cols) {
    throw ConfigError("ssim: window " + std::to_string(w) + " larger than image " +
                      shape_to_string(a.shape()));
  }
  std::vector<double> k(w);
  double ksum = 0.0;
  const double centre = 0.5 * static_cast<double>(w - 1);
  for (std::size_t i = 0; i < w; ++i) {
    const double d = static_cast<double>(i) - centre;
    k[i] = std::exp(-d * d / (2.0 * o.sigma * o.sigma));
    ksum += k[i];
  }
  for (auto& v : k) v /= ksum;

  const std::size_t n = a.size();
  std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = static_cast<double>(a[i]);
    y[i] = static_cast<double>(b[i]);
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, rows, cols, k);
  const auto my = filter_valid(y, rows, cols, k);
  const auto mxx = filter_valid(xx, rows, cols, k);
  const auto myy = filter_valid(yy, rows, cols, k);
  const auto mxy = filter_valid(xy, rows, cols, k);
  const double c1 = (o.k1 * o.data_range) * (o.k1 * o.data_range);
  const double c2 = (o.k2 * o.data_range) * (o.k2 * o.data_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = mxx[i] - mx[i] * mx[i];
    const double vy = myy[i] - my[i] * my[i];
    const double cxy = mxy[i] - mx[i] * my[i];
    const double num = (2.0 * mx[i] * my[i] + c1) * (2.0 * cxy + c2);
    const double den = (mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2);
    total += num / den;
  }
  return total / static_cast<double>(mx.size());
}

template <typename T>
std::vector<T> line_profile(const Tensor<T>& image, int row) {
  if (image.rank() != 2) {
    throw DimensionError("line_profile: expected a 2-D image, got " + shape_to_string(image.shape()));
  }
  if (row < 0 || static_cast<std::size_t>(row) >= image.dim(0)) {
    throw IndexError("line_profile: row " + std::to_string(row) + " outside [0, " +
                     std::to_string(image.dim(0)) + ")");
  }
  const std::size_t cols = image.dim(1);
  const T* start = image.raw() + static_cast<std::size_t>(row) * cols;
  return std::vector<T>(start, start + cols);
}

FiveNumberSummary five_number_summary(std::vector<double> values) {
  if (values.empty()) return {};
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    if (frac == 0.0) return values[lo];
    return values[lo] + frac * (values[hi] - values[lo]);
  };
  return {values.front(), quantile(0.25), quantile(0.5), quantile(0.75), values.back()};
}

MetricReport MetricReport::from_samples(std::vector<SampleMetric> samples) {
  MetricReport r;
  r.samples = std::move(samples);
  std::map<int, std::vector<const SampleMetric*>> groups;
  for (const auto& s : r.samples) groups[s.institution_id].push_back(&s);
  std::vector<double> all_p, all_s;
  for (const auto& s : r.samples) {
    all_p.push_back(s.psnr);
    all_s.push_back(s.ssim);
  }
  for (const auto& [id, members] : groups) {
    InstitutionSummary inst;
    inst.institution_id = id;
    inst.count = static_cast<int>(members.size());
    std::vector<double> p, s;
    for (const auto* m : members) {
      p.push_back(m->psnr);
      s.push_back(m->ssim);
    }
    double sp = 0.0, ss = 0.0;
    for (double v : p) sp += v;
    for (double v : s) ss += v;
    inst.mean_psnr = sp / static_cast<double>(p.size());
    inst.mean_ssim = ss / static_cast<double>(s.size());
    inst.psnr_box = five_number_summary(p);
    inst.ssim_box = five_number_summary(s);
    r.institutions.push_back(inst);
  }
  if (!r.samples.empty()) {
    double sp = 0.0, ss = 0.0;
    for (double v : all_p) sp += v;
    for (double v : all_s) ss += v;
    r.overall_psnr = sp / static_cast<double>(all_p.size());
    r.overall_ssim = ss / static_cast<double>(all_s.size());
    double ip = 0.0, is = 0.0;
    for (const auto& inst : r.institutions) {
      ip += inst.mean_psnr;
      is += inst.mean_ssim;
    }
    r.overall_psnr_by_institution = ip / static_cast<double>(r.institutions.size());
    r.overall_ssim_by_institution = is / static_cast<double>(r.institutions.size());
  }
  r.overall_psnr_box = five_number_summary(all_p);
  r.overall_ssim_box = five_number_summary(all_s);
  return r;
}

std::string format_number(double value) {
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  if (std::isnan(value)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double parse_number(const std::string& text) {
  std::size_t used = 0;
  const double v = std::stod(text, &used);
  if (used != text.size()) throw FormatError("not a number: '" + text + "'");
  return v;
}

nlohmann::json number_to_json(double value) {
  if (!std::isfinite(value)) return format_number(value);
  return value;
}

namespace {

nlohmann::json box_json(const FiveNumberSummary& b) {
  return {{"min", number_to_json(b.min)},       {"q1", number_to_json(b.q1)},
          {"median", number_to_json(b.median)}, {"q3", number_to_json(b.q3)},
          {"max", number_to_json(b.max)}};
}

std::string box_row(const std::string& who, const char* metric, const FiveNumberSummary& b) {
  return who + "," + metric + "," + format_number(b.min) + "," + format_number(b.q1) + "," +
         format_number(b.median) + "," + format_number(b.q3) + "," + format_number(b.max) + "\n";
}

}  // namespace

nlohmann::json MetricReport::to_json() const {
  nlohmann::json j;
  j["overall"] = {{"psnr", number_to_json(overall_psnr)},
                  {"ssim", number_to_json(overall_ssim)},
                  {"psnr_mean_of_institutions", number_to_json(overall_psnr_by_institution)},
                  {"ssim_mean_of_institutions", number_to_json(overall_ssim_by_institution)},
                  {"samples", samples.size()},
                  {"psnr_box", box_json(overall_psnr_box)},
                  {"ssim_box", box_json(overall_ssim_box)}};
  nlohmann::json insts = nlohmann::json::array();
  for (const auto& i : institutions) {
    insts.push_back({{"id", i.institution_id},
                     {"count", i.count},
                     {"psnr", number_to_json(i.mean_psnr)},
                     {"ssim", number_to_json(i.mean_ssim)},
                     {"psnr_box", box_json(i.psnr_box)},
                     {"ssim_box", box_json(i.ssim_box)}});
  }
  j["institutions"] = insts;
  return j;
}

std::string MetricReport::to_csv() const {
  std::ostringstream out;
  out << "institution,count,psnr,ssim\n";
  for (const auto& i : institutions) {
    out << i.institution_id << ',' << i.count << ',' << format_number(i.mean_psnr) << ','
        << format_number(i.mean_ssim) << '\n';
  }
  out << "Overall," << samples.size() << ',' << format_number(overall_psnr) << ','
      << format_number(overall_ssim) << '\n';
  return out.str();
}

std::string MetricReport::samples_csv() const {
  std::ostringstream out;
  out << "institution,sample,psnr,ssim\n";
  for (const auto& s : samples) {
    out << s.institution_id << ',' << s.sample_index << ',' << format_number(s.psnr) << ','
        << format_number(s.ssim) << '\n';
  }
  return out.str();
}

std::string MetricReport::boxplot_csv() const {
  std::string out = "institution,metric,min,q1,median,q3,max\n";
  for (const auto& i : institutions) {
    out += box_row(std::to_string(i.institution_id), "psnr", i.psnr_box);
    out += box_row(std::to_string(i.institution_id), "ssim", i.ssim_box);
  }
  out += box_row("Overall", "psnr", overall_psnr_box);
  out += box_row("Overall", "ssim", overall_ssim_box);
  return out;
}

template double psnr<float>(const Tensor<float>&, const Tensor<float>&, double);
template double psnr<double>(const Tensor<double>&, const Tensor<double>&, double);
template double ssim<float>(const Tensor<float>&, const Tensor<float>&, const SsimOptions&);
template double ssim<double>(const Tensor<double>&, const Tensor<double>&, const SsimOptions&);
template std::vector<float> line_profile<float>(const Tensor<float>&, int);
template std::vector<double> line_profile<double>(const Tensor<double>&, int);

}  // namespace hyperfed
