#pragma once

#include <string>
#include <vector>

#include "survfuse/survival.hpp"

namespace survfuse {

struct PlotCurve {
    std::string label;
    SurvivalCurve curve;
};

// two columns `time,probability`, one row per curve point
void write_curve_csv(const std::string& path, const SurvivalCurve& curve);

// Standalone SVG step plot: axes drawn as <line> elements and exactly one
// <path> per curve.
void write_step_svg(const std::string& path, const std::vector<PlotCurve>& curves,
                    const std::string& title = "");

}  // namespace survfuse
