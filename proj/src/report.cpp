#include "tcrl/report.hpp"

#include "tcrl/streamio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace tcrl {

namespace {

nlohmann::json matrix_json(const Matrix& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

nlohmann::json lag_json(const LagError& e) {
    return {{"max_abs", e.max_abs}, {"frobenius", e.frobenius}, {"f1", e.f1}};
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '&': out += "&amp;"; break;
            default: out += c;
        }
    }
    return out;
}

std::string num(double v) {
    std::ostringstream ss;
    ss.imbue(std::locale::classic());
    ss.precision(4);
    ss << v;
    return ss.str();
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::string report_json(const EvalReport& r, double threshold) {
    nlohmann::json j;
    j["mcc"] = r.mcc;
    j["permutation"] = r.permutation;
    j["scaling"] = r.scaling;
    j["degenerate_latents"] = r.degenerate;
    j["degenerate_features"] = r.degenerate_features;
    j["aligned"] = r.aligned;
    j["edge_threshold"] = threshold;
    nlohmann::json b = nlohmann::json::array();
    for (const auto& e : r.b_error) b.push_back(lag_json(e));
    j["b_error"] = b;
    j["m_error"] = lag_json(r.m_error);
    nlohmann::json rel = nlohmann::json::array();
    for (const auto& s : r.relation_scores) rel.push_back({{"i", s.i}, {"j", s.j}, {"score", s.score}});
    j["relation_scores"] = rel;
    j["relation_score_sigma"] = "population std over all entries of the lag-aggregated aligned matrix";
    j["corr"] = matrix_json(r.corr);
    return j.dump(2) + "\n";
}

std::string csv_table(const std::vector<std::string>& header, const std::vector<std::vector<double>>& rows) {
    std::string out;
    for (std::size_t k = 0; k < header.size(); ++k) out += (k ? "," : "") + header[k];
    out += '\n';
    for (const auto& row : rows) {
        for (std::size_t k = 0; k < row.size(); ++k) out += (k ? "," : "") + format_double(row[k]);
        out += '\n';
    }
    return out;
}

std::string matrix_csv(const Matrix& m) {
    std::vector<std::string> header;
    for (Eigen::Index j = 0; j < m.cols(); ++j) header.push_back("c" + std::to_string(j));
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
    return csv_table(header, rows);
}

std::string svg_line_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                          const std::vector<Series>& series, bool log_y) {
    const double w = 640, h = 400, left = 70, right = 20, top = 40, bottom = 50;
    double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
    auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
    for (const auto& s : series)
        for (std::size_t k = 0; k < s.x.size() && k < s.y.size(); ++k) {
            if (log_y && !(s.y[k] > 0.0)) continue;
            if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
            x0 = std::min(x0, s.x[k]);
            x1 = std::max(x1, s.x[k]);
            y0 = std::min(y0, ty(s.y[k]));
            y1 = std::max(y1, ty(s.y[k]));
        }
    if (!(x0 <= x1)) x0 = 0, x1 = 1;
    if (!(y0 <= y1)) y0 = 0, y1 = 1;
    if (x0 == x1) x0 -= 0.5, x1 += 0.5;
    if (y0 == y1) y0 -= 0.5, y1 += 0.5;
    auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (w - left - right); };
    auto py = [&](double y) { return h - bottom - (ty(y) - y0) / (y1 - y0) * (h - top - bottom); };

    std::ostringstream o;
    o.imbue(std::locale::classic());
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title) << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - right << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << h - bottom << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4.0;
        const double yv = y0 + (y1 - y0) * k / 4.0;
        const double yp = h - bottom - (yv - y0) / (y1 - y0) * (h - top - bottom);
        o << "<text x=\"" << px(xv) << "\" y=\"" << h - bottom + 16 << "\" text-anchor=\"middle\">" << num(xv) << "</text>\n";
        o << "<text x=\"" << left - 6 << "\" y=\"" << yp + 4 << "\" text-anchor=\"end\">"
          << (log_y ? "1e" + num(yv) : num(yv)) << "</text>\n";
    }
    o << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">" << escape(x_label) << "</text>\n";
    o << "<text x=\"16\" y=\"" << (top + h - bottom) / 2 << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
      << (top + h - bottom) / 2 << ")\">" << escape(y_label) << "</text>\n";
    for (std::size_t s = 0; s < series.size(); ++s) {
        const char* color = kPalette[s % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < series[s].x.size() && k < series[s].y.size(); ++k) {
            if (log_y && !(series[s].y[k] > 0.0)) continue;
            if (!std::isfinite(series[s].y[k])) continue;
            o << px(series[s].x[k]) << "," << py(series[s].y[k]) << " ";
        }
        o << "\"/>\n";
        if (series[s].x.size() <= 32)
            for (std::size_t k = 0; k < series[s].x.size() && k < series[s].y.size(); ++k)
                if (!(log_y && !(series[s].y[k] > 0.0)) && std::isfinite(series[s].y[k]))
                    o << "<circle cx=\"" << px(series[s].x[k]) << "\" cy=\"" << py(series[s].y[k]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
        o << "<text x=\"" << w - right - 4 << "\" y=\"" << top + 14 * (s + 1) << "\" text-anchor=\"end\" fill=\"" << color << "\">"
          << escape(series[s].label) << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::string svg_heatmap(const std::string& title, const Matrix& m) {
    const double cell = std::clamp(480.0 / std::max<Eigen::Index>(1, std::max(m.rows(), m.cols())), 2.0, 60.0);
    const double left = 40, top = 40;
    const double w = left + cell * m.cols() + 20, h = top + cell * m.rows() + 20;
    const double scale = m.size() ? std::max(1e-300, m.cwiseAbs().maxCoeff()) : 1.0;
    std::ostringstream o;
    o.imbue(std::locale::classic());
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << w / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(title) << " (|max| "
      << num(scale) << ")</text>\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            const double v = std::clamp(m(i, j) / scale, -1.0, 1.0);
            const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(v))));
            const int r = v >= 0 ? 255 : fade, b = v >= 0 ? fade : 255;
            o << "<rect x=\"" << left + j * cell << "\" y=\"" << top + i * cell << "\" width=\"" << cell << "\" height=\"" << cell
              << "\" fill=\"rgb(" << r << "," << fade << "," << b << ")\"/>\n";
            if (cell >= 28)
                o << "<text x=\"" << left + (j + 0.5) * cell << "\" y=\"" << top + (i + 0.5) * cell + 4
                  << "\" text-anchor=\"middle\">" << num(m(i, j)) << "</text>\n";
        }
    o << "</svg>\n";
    return o.str();
}

std::string loss_plot(const std::vector<LossRecord>& curve) {
    Series recon{"recon", {}, {}}, noise{"noise", {}, {}}, total{"total", {}, {}};
    for (const auto& r : curve) {
        const double s = static_cast<double>(r.step);
        recon.x.push_back(s), recon.y.push_back(r.losses.recon);
        noise.x.push_back(s), noise.y.push_back(r.losses.noise);
        total.x.push_back(s), total.y.push_back(r.losses.total);
    }
    return svg_line_plot("training loss", "step", "loss", {total, recon, noise}, true);
}

}  // namespace tcrl
