#include "mopro/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mopro/error.hpp"

namespace mopro::plot {
namespace {

constexpr double kW = 640, kH = 400, kLeft = 64, kRight = 150, kTop = 40, kBottom = 48;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string f2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::string line_chart(const std::string& title, std::span<const double> x,
                       std::span<const Series> series, const std::string& y_label) {
  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
                    "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
                    "viewBox=\"0 0 640 400\">\n"
                    "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" + escape(title) + "</text>\n";

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (double v : x) {
    x0 = std::min(x0, v);
    x1 = std::max(x1, v);
  }
  for (const auto& s : series) {
    for (std::size_t i = 0; i < std::min(s.y.size(), x.size()); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (x.empty() || !std::isfinite(y0)) {
    svg += "<text x=\"320\" y=\"200\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"14\" fill=\"#888\">no data</text>\n</svg>\n";
    return svg;
  }
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double v) { return kLeft + (v - x0) / (x1 - x0) * pw; };
  auto py = [&](double v) { return kTop + (1.0 - (v - y0) / (y1 - y0)) * ph; };

  svg += "<g stroke=\"#444\" stroke-width=\"1\">\n";
  svg += "<line x1=\"" + f2(kLeft) + "\" y1=\"" + f2(kTop + ph) + "\" x2=\"" + f2(kLeft + pw) +
         "\" y2=\"" + f2(kTop + ph) + "\"/>\n";
  svg += "<line x1=\"" + f2(kLeft) + "\" y1=\"" + f2(kTop) + "\" x2=\"" + f2(kLeft) + "\" y2=\"" +
         f2(kTop + ph) + "\"/>\n</g>\n";
  svg += "<g font-family=\"sans-serif\" font-size=\"11\" fill=\"#222\">\n";
  for (int t = 0; t <= 4; ++t) {
    const double yv = y0 + (y1 - y0) * t / 4.0;
    const double xv = x0 + (x1 - x0) * t / 4.0;
    svg += "<text x=\"" + f2(kLeft - 6) + "\" y=\"" + f2(py(yv) + 4) + "\" text-anchor=\"end\">" +
           tick(yv) + "</text>\n";
    svg += "<text x=\"" + f2(px(xv)) + "\" y=\"" + f2(kTop + ph + 16) +
           "\" text-anchor=\"middle\">" + tick(xv) + "</text>\n";
  }
  svg += "<text x=\"" + f2(kLeft + pw / 2) + "\" y=\"" + f2(kH - 10) +
         "\" text-anchor=\"middle\">epoch</text>\n";
  svg += "<text x=\"14\" y=\"" + f2(kTop + ph / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 14 " +
         f2(kTop + ph / 2) + ")\">" + escape(y_label) + "</text>\n</g>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kColors[si % std::size(kColors)];
    std::string pts;
    auto flush = [&] {
      if (!pts.empty()) {
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
      }
      pts.clear();
    };
    for (std::size_t i = 0; i < std::min(s.y.size(), x.size()); ++i) {
      if (!std::isfinite(s.y[i])) {
        flush();
        continue;
      }
      pts += (pts.empty() ? "" : " ") + f2(px(x[i])) + "," + f2(py(s.y[i]));
      svg += "<circle cx=\"" + f2(px(x[i])) + "\" cy=\"" + f2(py(s.y[i])) + "\" r=\"1.8\" fill=\"" +
             color + "\"/>\n";
    }
    flush();
    const double ly = kTop + 14 + 18 * static_cast<double>(si);
    svg += "<line x1=\"" + f2(kW - kRight + 12) + "\" y1=\"" + f2(ly - 4) + "\" x2=\"" +
           f2(kW - kRight + 32) + "\" y2=\"" + f2(ly - 4) + "\" stroke=\"" + color +
           "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + f2(kW - kRight + 38) + "\" y=\"" + f2(ly) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + escape(s.name) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::vector<std::filesystem::path> write_training_plots(
    std::span<const evalkit::EpochMetrics> records, const std::filesystem::path& dir) {
  std::vector<double> x;
  Series ce{"l_ce", {}}, pro{"l_pro", {}}, ins{"l_ins", {}}, total{"total", {}};
  Series acc{"pseudo_acc", {}}, knn{"knn_acc", {}};
  Series rec{"ood_recall", {}}, prec{"ood_precision", {}};
  for (const auto& m : records) {
    x.push_back(static_cast<double>(m.epoch));
    ce.y.push_back(m.l_ce);
    pro.y.push_back(m.l_pro);
    ins.y.push_back(m.l_ins);
    total.y.push_back(m.total);
    acc.y.push_back(m.pseudo_acc);
    knn.y.push_back(m.knn_acc);
    rec.y.push_back(m.ood_recall);
    prec.y.push_back(m.ood_precision);
  }
  const std::vector<Series> losses = {total, ce, pro, ins}, accs = {acc, knn}, ood = {rec, prec};
  const std::vector<std::pair<std::string, std::string>> files = {
      {"losses.svg", line_chart("Training losses", x, losses, "loss")},
      {"pseudo_acc.svg", line_chart("Pseudo-label accuracy", x, accs, "accuracy")},
      {"ood.svg", line_chart("OOD detection", x, ood, "rate")},
  };
  std::vector<std::filesystem::path> written;
  for (const auto& [name, body] : files) {
    const auto path = dir / name;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write plot '" + path.string() + "'");
    f << body;
    written.push_back(path);
  }
  return written;
}

}  // namespace mopro::plot
