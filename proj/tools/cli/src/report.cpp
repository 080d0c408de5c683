// Table and figure rendering from the CSV artifacts of earlier stages. The
// CSV files are authoritative; the SVGs are plain hand-built drawings.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "ehrcvd/errors.hpp"
#include "ehrcvd/evaluator.hpp"
#include "ehrcvd/metrics.hpp"
#include "ehrcvd_cli/artifacts.hpp"
#include "ehrcvd_cli/stages.hpp"

namespace ehrcvd::cli {

namespace fs = std::filesystem;

namespace {

using Row = std::map<std::string, std::string>;

std::vector<Row> parse_csv(const std::string& text, const fs::path& source) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty CSV " + source.string());
  std::vector<std::string> header;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) header.push_back(cell);
  }
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != header.size()) {
      throw DataError("malformed row in " + source.string() + ": " + line);
    }
    Row r;
    for (std::size_t i = 0; i < header.size(); ++i) r[header[i]] = cells[i];
    rows.push_back(std::move(r));
  }
  return rows;
}

double number(const Row& r, const std::string& key) {
  const auto it = r.find(key);
  if (it == r.end()) throw DataError("CSV lacks column '" + key + "'");
  if (it->second.empty()) return std::nan("");
  try {
    return std::stod(it->second);
  } catch (const std::exception&) {
    throw DataError("non-numeric '" + key + "' value: " + it->second);
  }
}

std::string escape_xml(const std::string& s) {
  std::string out;
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

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string svg_open(int w, int h) {
  return fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"{0}\" height=\"{1}\" fill=\"white\"/>\n",
      w, h);
}

struct Summary {
  std::size_t n = 0;
  MetricSummary auc, sensitivity, precision, f1;
};

MetricSummary summarise(const std::vector<double>& v) { return {mean_of(v), sample_sd(v)}; }

// (model, horizon) in first-seen order.
std::vector<std::pair<std::string, std::string>> keys_in_order(const std::vector<Row>& rows) {
  std::vector<std::pair<std::string, std::string>> keys;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : rows) {
    auto k = std::pair{r.at("model"), r.at("horizon")};
    if (seen.insert(k).second) keys.push_back(std::move(k));
  }
  return keys;
}

std::string render_table(const std::vector<Row>& rows, std::string& csv_out) {
  const auto keys = keys_in_order(rows);
  std::vector<std::string> models, horizons;
  for (const auto& [m, h] : keys) {
    if (std::find(models.begin(), models.end(), m) == models.end()) models.push_back(m);
    if (std::find(horizons.begin(), horizons.end(), h) == horizons.end()) horizons.push_back(h);
  }
  std::map<std::pair<std::string, std::string>, Summary> table;
  for (const auto& key : keys) {
    std::vector<double> auc, sens, prec, f1;
    for (const auto& r : rows) {
      if (r.at("model") != key.first || r.at("horizon") != key.second) continue;
      const double a = number(r, "auc");
      if (std::isnan(a)) continue;
      auc.push_back(a);
      sens.push_back(number(r, "sensitivity"));
      prec.push_back(number(r, "precision"));
      f1.push_back(number(r, "f1"));
    }
    if (auc.empty()) continue;
    table[key] = {auc.size(), summarise(auc), summarise(sens), summarise(prec), summarise(f1)};
  }

  csv_out = "model,horizon,n_folds,auc_mean,auc_sd,sensitivity_mean,sensitivity_sd,"
            "precision_mean,precision_sd,f1_mean,f1_sd\n";
  for (const auto& key : keys) {
    const auto it = table.find(key);
    if (it == table.end()) continue;
    const auto& s = it->second;
    csv_out += fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}\n",
                           key.first, key.second, s.n, s.auc.mean, s.auc.sd, s.sensitivity.mean,
                           s.sensitivity.sd, s.precision.mean, s.precision.sd, s.f1.mean, s.f1.sd);
  }

  std::string text;
  std::size_t width = 12;
  for (const auto& m : models) width = std::max(width, m.size() + 2);
  for (const char* metric : {"AUC", "Sensitivity", "Precision", "F1"}) {
    text += fmt::format("{}\n{:<{}}", metric, "horizon", width);
    for (const auto& m : models) text += fmt::format("{:>{}}", m, std::max<std::size_t>(width, 16));
    text += "\n";
    for (const auto& h : horizons) {
      text += fmt::format("{:<{}}", h, width);
      for (const auto& m : models) {
        const auto it = table.find({m, h});
        std::string cell = "-";
        if (it != table.end()) {
          const auto& s = it->second;
          const MetricSummary& v = std::string(metric) == "AUC"           ? s.auc
                                   : std::string(metric) == "Sensitivity" ? s.sensitivity
                                   : std::string(metric) == "Precision"   ? s.precision
                                                                          : s.f1;
          cell = fmt::format("{:.3f} ± {:.3f}", v.mean, v.sd);
        }
        // The ± sign is two bytes but one column wide.
        const std::size_t col = std::max<std::size_t>(width, 16) + (cell == "-" ? 0 : 1);
        text += fmt::format("{:>{}}", cell, col);
      }
      text += "\n";
    }
    text += "\n";
  }
  return text;
}

std::map<std::string, std::string> render_roc(const std::vector<Row>& rows) {
  std::map<std::string, std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>>
      by_horizon;
  for (const auto& r : rows) {
    auto& curves = by_horizon[r.at("horizon")];
    if (curves.empty() || curves.back().first != r.at("model")) curves.push_back({r.at("model"), {}});
    curves.back().second.emplace_back(number(r, "fpr"), number(r, "tpr"));
  }
  std::map<std::string, std::string> out;
  constexpr int kSize = 420, kPad = 50;
  const double span = kSize - 2 * kPad;
  for (const auto& [horizon, curves] : by_horizon) {
    std::string svg = svg_open(kSize + 140, kSize);
    svg += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">ROC, horizon {}</text>\n",
                       kSize / 2, escape_xml(horizon));
    svg += fmt::format("<rect x=\"{0}\" y=\"{0}\" width=\"{1}\" height=\"{1}\" fill=\"none\" stroke=\"black\"/>\n",
                       kPad, span);
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{1}\" y2=\"{0}\" stroke=\"#aaa\" stroke-dasharray=\"4 4\"/>\n",
                       kPad, kPad + span);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">false positive rate</text>\n",
                       kSize / 2, kSize - 12);
    svg += fmt::format("<text x=\"14\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {0})\">"
                       "true positive rate</text>\n",
                       kSize / 2);
    for (std::size_t c = 0; c < curves.size(); ++c) {
      const char* colour = kPalette[c % std::size(kPalette)];
      std::string pts;
      for (const auto& [fpr, tpr] : curves[c].second) {
        pts += fmt::format("{:.2f},{:.2f} ", kPad + fpr * span, kPad + (1.0 - tpr) * span);
      }
      svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
                         colour, pts);
      svg += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">{}</text>\n", kSize - 30,
                         kPad + 16 * static_cast<int>(c), colour, escape_xml(curves[c].first));
    }
    svg += "</svg>\n";
    // ">365d" becomes "gt365d".
    std::string file;
    for (char ch : horizon) {
      if (ch == '>') {
        file += "gt";
      } else {
        file += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
      }
    }
    out["roc_" + file + ".svg"] = std::move(svg);
  }
  return out;
}

std::string render_importance(const std::vector<Row>& rows) {
  struct Bar {
    std::string feature;
    double mean, sd, p;
  };
  std::vector<Bar> bars;
  for (const auto& r : rows) {
    bars.push_back({r.at("feature"), number(r, "mean_delta_f1"), number(r, "sd"), number(r, "p_value")});
  }
  std::stable_sort(bars.begin(), bars.end(), [](const Bar& a, const Bar& b) { return a.mean > b.mean; });
  if (bars.size() > 25) bars.resize(25);
  double extent = 1e-6;
  for (const auto& b : bars) extent = std::max(extent, std::abs(b.mean) + (std::isnan(b.sd) ? 0 : b.sd));
  constexpr int kLabel = 260, kPlot = 360, kRow = 18;
  const int height = 60 + kRow * static_cast<int>(bars.size());
  std::string svg = svg_open(kLabel + kPlot + 40, height);
  svg += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
                     "Permutation importance (mean ΔF1, * p &lt; 0.05)</text>\n",
                     (kLabel + kPlot) / 2);
  const double zero = kLabel + kPlot / 2.0;
  const double scale = (kPlot / 2.0) / extent;
  svg += fmt::format("<line x1=\"{0}\" y1=\"36\" x2=\"{0}\" y2=\"{1}\" stroke=\"black\"/>\n", zero, height - 10);
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const auto& b = bars[i];
    const double y = 40 + kRow * static_cast<double>(i);
    const double x0 = std::min(zero, zero + b.mean * scale);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}{}</text>\n", kLabel - 6, y + 12,
                       escape_xml(b.feature), b.p < 0.05 ? " *" : "");
    svg += fmt::format("<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{}\" fill=\"{}\"/>\n", x0,
                       y + 2, std::abs(b.mean) * scale, kRow - 4, b.mean >= 0 ? kPalette[0] : kPalette[1]);
    if (!std::isnan(b.sd)) {
      svg += fmt::format("<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"black\"/>\n",
                         zero + (b.mean - b.sd) * scale, y + kRow / 2.0, zero + (b.mean + b.sd) * scale,
                         y + kRow / 2.0);
    }
  }
  svg += "</svg>\n";
  return svg;
}

std::string render_attention(const std::vector<Row>& rows) {
  // Heat map: one row per patient (first 30), columns are the patient's
  // observation days aligned to the index day on the right.
  std::vector<std::string> order;
  std::map<std::string, std::vector<double>> weights;
  for (const auto& r : rows) {
    const auto& id = r.at("patient_id");
    if (!weights.count(id)) {
      if (order.size() == 30) continue;
      order.push_back(id);
    }
    weights[id].push_back(number(r, "weight"));
  }
  std::size_t cols = 1;
  double top = 1e-12;
  for (const auto& id : order) {
    cols = std::max(cols, weights[id].size());
    for (double w : weights[id]) top = std::max(top, w);
  }
  constexpr int kLabel = 90, kCell = 12;
  const int width = kLabel + kCell * static_cast<int>(cols) + 20;
  const int height = 50 + kCell * static_cast<int>(order.size());
  std::string svg = svg_open(width, height);
  svg += fmt::format("<text x=\"{}\" y=\"22\" font-size=\"14\">Attention per observation day "
                     "(index day on the right)</text>\n",
                     kLabel);
  for (std::size_t p = 0; p < order.size(); ++p) {
    const auto& w = weights[order[p]];
    const double y = 36 + kCell * static_cast<double>(p);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-size=\"9\">{}</text>\n", kLabel - 4,
                       y + 9, escape_xml(order[p]));
    for (std::size_t d = 0; d < w.size(); ++d) {
      const double x = kLabel + kCell * static_cast<double>(cols - w.size() + d);
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - w[d] / top)));
      svg += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"rgb(255,{},{})\"/>\n", x,
                         y, kCell, kCell, shade, shade);
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace

void stage_report(const StageOptions& options) {
  const fs::path metrics_path = options.out_dir / "evaluate" / "metrics.csv";
  if (!fs::exists(metrics_path)) {
    throw DataError("missing metrics artifact: " + metrics_path.string() + " (run `evaluate` first)");
  }
  StageWriter w(options.out_dir / "report", "report");
  const std::string metrics_csv = read_text(metrics_path);
  w.add_input("evaluate/metrics.csv", sha256_hex(metrics_csv));
  std::string table_csv;
  w.write("table.txt", render_table(parse_csv(metrics_csv, metrics_path), table_csv));
  w.write("table.csv", table_csv);

  const fs::path roc_path = options.out_dir / "evaluate" / "roc.csv";
  if (fs::exists(roc_path)) {
    const std::string text = read_text(roc_path);
    w.add_input("evaluate/roc.csv", sha256_hex(text));
    for (const auto& [name, svg] : render_roc(parse_csv(text, roc_path))) w.write(name, svg);
  }
  const fs::path imp_path = options.out_dir / "importance" / "importance.csv";
  if (fs::exists(imp_path)) {
    const std::string text = read_text(imp_path);
    w.add_input("importance/importance.csv", sha256_hex(text));
    w.write("importance.svg", render_importance(parse_csv(text, imp_path)));
  }
  const fs::path att_path = options.out_dir / "attention" / "attention.csv";
  if (fs::exists(att_path)) {
    const std::string text = read_text(att_path);
    w.add_input("attention/attention.csv", sha256_hex(text));
    w.write("attention.svg", render_attention(parse_csv(text, att_path)));
  }
  w.finish();
}

}  // namespace ehrcvd::cli
