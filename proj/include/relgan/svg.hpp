#pragma once

// Flat scatter SVG: real points gray, generated points colored, fixed
// [-3,3]^2 viewport. Display only.

#include <fstream>
#include <string>

#include "relgan/tensor.hpp"

namespace relgan {

inline void write_scatter_svg(const std::string& path, const Tensor& real, const Tensor& generated) {
    if (real.rank() != 2 || real.dim(1) != 2 || generated.rank() != 2 || generated.dim(1) != 2)
        throw ShapeError("write_scatter_svg: point sets must be [m x 2]");
    std::ofstream f(path);
    if (!f) throw ConfigError("write_scatter_svg: cannot open " + path);
    const int size = 600;
    const double lo = -3.0, hi = 3.0;
    auto px = [&](double x) { return (x - lo) / (hi - lo) * size; };
    auto py = [&](double y) { return size - (y - lo) / (hi - lo) * size; };
    f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
      << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n";
    f << "<rect width=\"" << size << "\" height=\"" << size << "\" fill=\"white\"/>\n";
    auto dots = [&](const Tensor& pts, const char* color, double r) {
        for (int i = 0; i < pts.dim(0); ++i) {
            const double x = pts.at(i, 0), y = pts.at(i, 1);
            if (x < lo || x > hi || y < lo || y > hi) continue;
            f << "<circle cx=\"" << px(x) << "\" cy=\"" << py(y) << "\" r=\"" << r << "\" fill=\"" << color
              << "\" fill-opacity=\"0.5\"/>\n";
        }
    };
    dots(real, "#9e9e9e", 2.0);
    dots(generated, "#d62728", 2.0);
    f << "</svg>\n";
}

}  // namespace relgan
