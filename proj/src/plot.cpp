#include "survfuse/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "survfuse/errors.hpp"

namespace survfuse {

namespace {

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(6);
    os << v;
    return os.str();
}

}  // namespace

void write_curve_csv(const std::string& path, const SurvivalCurve& curve) {
    if (curve.times.size() != curve.probabilities.size())
        throw DataError("curve times and probabilities differ in length");
    std::ofstream file(path);
    if (!file) throw DataError("cannot write curve csv: " + path);
    file << "time,probability\n";
    file.precision(17);
    for (std::size_t i = 0; i < curve.times.size(); ++i)
        file << curve.times[i] << "," << curve.probabilities[i] << "\n";
}

void write_step_svg(const std::string& path, const std::vector<PlotCurve>& curves,
                    const std::string& title) {
    if (curves.empty()) throw DataError("no curves to plot");
    const double width = 640.0, height = 480.0;
    const double left = 60.0, right = 20.0, top = 40.0, bottom = 50.0;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;

    double t_max = 0.0;
    for (const auto& pc : curves) {
        if (pc.curve.times.empty() || pc.curve.times.size() != pc.curve.probabilities.size())
            throw DataError("malformed curve: " + pc.label);
        t_max = std::max(t_max, pc.curve.times.back());
    }
    if (t_max <= 0.0) t_max = 1.0;

    auto sx = [&](double t) { return left + plot_w * (t / t_max); };
    auto sy = [&](double p) { return top + plot_h * (1.0 - p); };

    static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    const std::size_t ncolors = sizeof(palette) / sizeof(palette[0]);

    std::ofstream file(path);
    if (!file) throw DataError("cannot write svg: " + path);
    file << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
    file << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
         << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
    file << "  <rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
         << "\" fill=\"white\"/>\n";
    if (!title.empty())
        file << "  <text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
             << "font-family=\"sans-serif\" font-size=\"16\">" << xml_escape(title) << "</text>\n";

    // axes
    file << "  <line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w
         << "\" y2=\"" << top + plot_h << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    file << "  <line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
         << top + plot_h << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        const double frac = static_cast<double>(i) / 5.0;
        const double x = left + plot_w * frac;
        const double y = top + plot_h * (1.0 - frac);
        file << "  <line x1=\"" << x << "\" y1=\"" << top + plot_h << "\" x2=\"" << x << "\" y2=\""
             << top + plot_h + 5 << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        file << "  <text x=\"" << x << "\" y=\"" << top + plot_h + 20
             << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
             << fmt(t_max * frac) << "</text>\n";
        file << "  <line x1=\"" << left - 5 << "\" y1=\"" << y << "\" x2=\"" << left << "\" y2=\""
             << y << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        file << "  <text x=\"" << left - 9 << "\" y=\"" << y + 4
             << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(frac)
             << "</text>\n";
    }
    file << "  <text x=\"" << left + plot_w / 2 << "\" y=\"" << height - 10
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">time</text>\n";
    file << "  <text x=\"16\" y=\"" << top + plot_h / 2
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         << "transform=\"rotate(-90 16 " << top + plot_h / 2 << ")\">survival</text>\n";

    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const auto& c = curves[ci].curve;
        std::ostringstream d;
        d << "M " << fmt(sx(c.times[0])) << " " << fmt(sy(c.probabilities[0]));
        for (std::size_t i = 1; i < c.times.size(); ++i) {
            d << " H " << fmt(sx(c.times[i]));
            d << " V " << fmt(sy(c.probabilities[i]));
        }
        d << " H " << fmt(sx(t_max));
        file << "  <path d=\"" << d.str() << "\" fill=\"none\" stroke=\"" << palette[ci % ncolors]
             << "\" stroke-width=\"1.5\"/>\n";
    }

    // legend
    for (std::size_t ci = 0; ci < curves.size(); ++ci) {
        const double y = top + 14.0 + 16.0 * static_cast<double>(ci);
        file << "  <rect x=\"" << left + plot_w - 150 << "\" y=\"" << y - 9
             << "\" width=\"12\" height=\"4\" fill=\"" << palette[ci % ncolors] << "\"/>\n";
        file << "  <text x=\"" << left + plot_w - 133 << "\" y=\"" << y
             << "\" font-family=\"sans-serif\" font-size=\"11\">" << xml_escape(curves[ci].label)
             << "</text>\n";
    }
    file << "</svg>\n";
}

}  // namespace survfuse
