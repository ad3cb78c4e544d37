#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mopro/evalkit.hpp"

namespace mopro::plot {

struct Series {
  std::string name;
  std::vector<double> y;  // NaN entries leave a gap
};

/// Standalone SVG line chart over x = epoch. Deterministic output; an empty
/// x range renders a "no data" placeholder.
std::string line_chart(const std::string& title, std::span<const double> x,
                       std::span<const Series> series, const std::string& y_label);

/// Writes losses.svg, pseudo_acc.svg and ood.svg into `dir`. Returns the
/// paths written.
std::vector<std::filesystem::path> write_training_plots(
    std::span<const evalkit::EpochMetrics> records, const std::filesystem::path& dir);

}  // namespace mopro::plot
