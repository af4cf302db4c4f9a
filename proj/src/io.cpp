#include "senscap/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace senscap {

using nlohmann::json;

std::string format_double(double v) {
  char buf[40];
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// JSON: types

json type_to_json(const TypeHistogram& g) {
  json j;
  j["order"] = g.order;
  j["alphabet"] = g.alphabet;
  j["circular"] = g.circular;
  j["denominator"] = g.denominator ? json(*g.denominator) : json(nullptr);
  j["probs"] = g.probs;
  return j;
}

TypeHistogram type_from_json(const json& j) {
  TypeHistogram g;
  g.order = j.at("order").get<int>();
  g.alphabet = j.at("alphabet").get<int>();
  g.circular = j.value("circular", true);
  if (j.contains("denominator") && !j.at("denominator").is_null())
    g.denominator = j.at("denominator").get<long long>();
  g.probs = j.at("probs").get<std::vector<double>>();
  g.validate(1e-9);
  return g;
}

json joint_type_to_json(const JointType& l) {
  json j;
  j["order"] = l.order;
  j["alphabet"] = l.alphabet;
  j["circular"] = l.circular;
  j["denominator"] = l.denominator ? json(*l.denominator) : json(nullptr);
  j["probs"] = l.probs;
  return j;
}

JointType joint_type_from_json(const json& j) {
  JointType l;
  l.order = j.at("order").get<int>();
  l.alphabet = j.at("alphabet").get<int>();
  l.circular = j.value("circular", true);
  if (j.contains("denominator") && !j.at("denominator").is_null())
    l.denominator = j.at("denominator").get<long long>();
  l.probs = j.at("probs").get<std::vector<double>>();
  return l;
}

// ---------------------------------------------------------------------------
// JSON: models

namespace {

json psi_to_json(const SensingFunction& f) {
  json j;
  switch (f.kind) {
    case PsiKind::sum: j["kind"] = "sum"; break;
    case PsiKind::weighted_sum:
      j["kind"] = "weighted_sum";
      j["weights"] = f.weights;
      break;
    case PsiKind::lookup: {
      j["kind"] = "lookup";
      std::vector<double> values(f.pattern_output.size());
      for (std::size_t i = 0; i < values.size(); ++i)
        values[i] = f.output_values[static_cast<std::size_t>(f.pattern_output[i])];
      j["values"] = values;
      break;
    }
  }
  return j;
}

SensingFunction psi_from_json(const json& j, int range, int alphabet) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "sum") return SensingFunction::sum(range, alphabet);
  if (kind == "weighted_sum") {
    auto w = j.at("weights").get<std::vector<double>>();
    require(static_cast<int>(w.size()) == range, errc::invalid_argument,
            "psi.weights length must equal the sensing range");
    return SensingFunction::weighted_sum(std::move(w), alphabet);
  }
  if (kind == "lookup")
    return SensingFunction::lookup(j.at("values").get<std::vector<double>>(), range, alphabet);
  fail(errc::invalid_argument, "psi.kind must be sum, weighted_sum, or lookup");
}

json noise_to_json(const NoiseSpec& s) {
  json j;
  if (s.kind == NoiseSpec::Kind::exponential) {
    j["kind"] = "exponential";
    j["p"] = s.p;
    j["decay"] = s.decay;
  } else {
    j["kind"] = "matrix";
    j["rows"] = s.rows;
  }
  return j;
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec s;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "exponential") {
    s.kind = NoiseSpec::Kind::exponential;
    s.p = j.at("p").get<double>();
    s.decay = j.value("decay", 4.0);
  } else if (kind == "matrix") {
    s.kind = NoiseSpec::Kind::matrix;
    s.rows = j.at("rows").get<std::vector<std::vector<double>>>();
  } else {
    fail(errc::invalid_argument, "noise.kind must be exponential or matrix");
  }
  return s;
}

SensorClass class_from_json(const json& j, Discipline disc, int alphabet) {
  SensorClass c;
  c.alpha = j.value("alpha", 1.0);
  if (disc == Discipline::contiguous2d) {
    c.radius = j.at("c").get<double>();
    c.stencil = coverage_stencil(c.radius);
    c.range = static_cast<int>(c.stencil.size());
  } else {
    c.range = j.at("c").get<int>();
  }
  c.psi = psi_from_json(j.at("psi"), disc == Discipline::contiguous2d
                                          ? static_cast<int>(c.stencil.size())
                                          : c.range,
                        alphabet);
  c.noise_spec = noise_from_json(j.at("noise"));
  c.noise = build_noise(c.noise_spec, c.psi.num_outputs());
  return c;
}

json class_to_json(const SensorClass& c, Discipline disc) {
  json j;
  j["alpha"] = c.alpha;
  j["c"] = disc == Discipline::contiguous2d ? json(c.radius) : json(c.range);
  j["psi"] = psi_to_json(c.psi);
  j["noise"] = noise_to_json(c.noise_spec);
  return j;
}

}  // namespace

json model_to_json(const ModelSpec& m) {
  json j;
  switch (m.discipline) {
    case Discipline::arbitrary: j["discipline"] = "arbitrary"; break;
    case Discipline::contiguous1d: j["discipline"] = "contiguous1d"; break;
    case Discipline::contiguous2d: j["discipline"] = "contiguous2d"; break;
  }
  j["alphabet"] = m.alphabet;
  j["prior"] = m.prior ? json(*m.prior) : json(nullptr);
  if (m.has_mixture()) {
    json mix = json::array();
    for (const auto& c : m.classes) mix.push_back(class_to_json(c, m.discipline));
    j["mixture"] = mix;
  } else {
    const json c = class_to_json(m.cls(), m.discipline);
    j["c"] = c.at("c");
    j["psi"] = c.at("psi");
    j["noise"] = c.at("noise");
    j["mixture"] = nullptr;
  }
  return j;
}

ModelSpec model_from_json(const json& j) {
  ModelSpec m;
  const std::string disc = j.at("discipline").get<std::string>();
  if (disc == "arbitrary") m.discipline = Discipline::arbitrary;
  else if (disc == "contiguous1d") m.discipline = Discipline::contiguous1d;
  else if (disc == "contiguous2d") m.discipline = Discipline::contiguous2d;
  else fail(errc::invalid_argument, "discipline must be arbitrary, contiguous1d, or contiguous2d");

  m.alphabet = j.value("alphabet", 2);
  if (j.contains("prior") && !j.at("prior").is_null())
    m.prior = j.at("prior").get<std::vector<double>>();

  if (j.contains("mixture") && !j.at("mixture").is_null()) {
    for (const auto& cj : j.at("mixture"))
      m.classes.push_back(class_from_json(cj, m.discipline, m.alphabet));
  } else {
    m.classes.push_back(class_from_json(j, m.discipline, m.alphabet));
  }
  m.validate();
  return m;
}

ModelSpec load_model(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(errc::io_error, "model file '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// JSON: results

json bound_result_to_json(const BoundResult& r) {
  json j;
  j["clb"] = r.clb;
  j["D"] = r.distortion;
  j["variant"] = variant_name(r.variant);
  j["lambda_star"] = joint_type_to_json(r.minimizer);
  j["numerator"] = r.numerator;
  j["denominator"] = r.denominator;
  j["diagnostics"] = {{"evaluations", r.diag.evaluations},
                      {"final_cell", r.diag.final_cell},
                      {"grid_gap", r.diag.grid_gap},
                      {"grad_norm", r.diag.grad_norm},
                      {"bracket_lo", r.diag.bracket_lo},
                      {"bracket_hi", r.diag.bracket_hi},
                      {"starts", r.diag.starts},
                      {"converged_starts", r.diag.converged_starts},
                      {"inconclusive_steps", r.diag.inconclusive_steps},
                      {"method", r.diag.method}};
  return j;
}

json exponent_result_to_json(const ExponentResult& r) {
  json j;
  j["rho"] = r.rho;
  j["E"] = r.E_value;
  j["Er"] = r.Er_value;
  j["gamma"] = type_to_json(r.gamma);
  j["lambda"] = joint_type_to_json(r.lambda);
  return j;
}

json replication_to_json(const ReplicationResult& r) {
  json j;
  j["factor"] = r.factor;
  j["p_eff"] = r.p_eff;
  j["rate_direct"] = r.rate_direct;
  j["rate_replicated"] = r.rate_replicated;
  j["direct"] = bound_result_to_json(r.direct);
  j["replicated"] = bound_result_to_json(r.replicated);
  return j;
}

std::string trial_record_to_ndjson(const TrialRecord& r) {
  json j;
  j["seed"] = r.seed;
  j["v"] = r.truth;
  j["x"] = r.codeword;
  j["y"] = r.observation;
  j["decoded"] = r.decoded;
  j["distortion"] = r.distortion;
  j["error"] = r.error;
  j["bp_iters"] = r.bp_iters;
  j["bp_converged"] = r.bp_converged;
  return j.dump();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(errc::io_error, "cannot open '" + path + "' for writing");
  out << content;
  if (!out) fail(errc::io_error, "write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// CSV

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += header[i];
  }
  buf_ += '\n';
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  require(cells.size() == columns_, errc::invalid_argument, "csv row width mismatch");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) buf_ += ',';
    buf_ += cells[i];
  }
  buf_ += '\n';
}

void CsvWriter::row_values(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_double(v));
  row(cells);
}

std::string CsvWriter::finish() const {
  std::string out = buf_;
  if (interrupt_flag().load()) out += "#truncated\n";
  return out;
}

// ---------------------------------------------------------------------------
// SVG

namespace {

constexpr int kWidth = 840;
constexpr int kHeight = 560;
constexpr int kMarginL = 72, kMarginR = 24, kMarginT = 40, kMarginB = 56;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string esc(const std::string& s) {
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

std::string fmt_coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

// round limits outward to a tidy step
void nice_axis(double lo, double hi, double& out_lo, double& out_hi, double& out_step) {
  if (!(hi > lo)) hi = lo + 1.0;
  const double span = hi - lo;
  const double raw = span / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 2.5, 5.0, 10.0}) {
    if (mag * m >= raw) {
      step = mag * m;
      break;
    }
  }
  out_lo = std::floor(lo / step) * step;
  out_hi = std::ceil(hi / step) * step;
  out_step = step;
}

}  // namespace

std::string render_svg_plot(const std::string& title, const std::string& xlabel,
                            const std::string& ylabel, const std::vector<PlotSeries>& series,
                            const std::vector<PlotVLine>& vlines,
                            const std::vector<PlotAnnotation>& notes) {
  double xmin = kInf, xmax = -kInf, ymin = kInf, ymax = -kInf;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymin = std::min(ymin, y);
      ymax = std::max(ymax, y);
    }
  }
  for (const auto& v : vlines) {
    xmin = std::min(xmin, v.x);
    xmax = std::max(xmax, v.x);
  }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  double xlo, xhi, xstep, ylo, yhi, ystep;
  nice_axis(xmin, xmax, xlo, xhi, xstep);
  nice_axis(ymin, ymax, ylo, yhi, ystep);

  const double px0 = kMarginL, px1 = kWidth - kMarginR;
  const double py0 = kHeight - kMarginB, py1 = kMarginT;
  auto sx = [&](double x) { return px0 + (x - xlo) / (xhi - xlo) * (px1 - px0); };
  auto sy = [&](double y) { return py0 + (y - ylo) / (yhi - ylo) * (py1 - py0); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(kWidth) +
         "\" height=\"" + std::to_string(kHeight) + "\" viewBox=\"0 0 " + std::to_string(kWidth) +
         " " + std::to_string(kHeight) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + std::to_string(kWidth / 2) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">" +
         esc(title) + "</text>\n";

  // gridlines and ticks
  for (double t = xlo; t <= xhi + 1e-9; t += xstep) {
    const double x = sx(t);
    svg += "<line x1=\"" + fmt_coord(x) + "\" y1=\"" + fmt_coord(py0) + "\" x2=\"" + fmt_coord(x) +
           "\" y2=\"" + fmt_coord(py1) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt_coord(x) + "\" y=\"" + fmt_coord(py0 + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" +
           format_double(t) + "</text>\n";
  }
  for (double t = ylo; t <= yhi + 1e-9; t += ystep) {
    const double y = sy(t);
    svg += "<line x1=\"" + fmt_coord(px0) + "\" y1=\"" + fmt_coord(y) + "\" x2=\"" + fmt_coord(px1) +
           "\" y2=\"" + fmt_coord(y) + "\" stroke=\"#e0e0e0\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt_coord(px0 - 6) + "\" y=\"" + fmt_coord(y + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" + format_double(t) +
           "</text>\n";
  }
  svg += "<rect x=\"" + fmt_coord(px0) + "\" y=\"" + fmt_coord(py1) + "\" width=\"" +
         fmt_coord(px1 - px0) + "\" height=\"" + fmt_coord(py0 - py1) +
         "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg += "<text x=\"" + std::to_string((kMarginL + kWidth - kMarginR) / 2) + "\" y=\"" +
         std::to_string(kHeight - 12) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">" + esc(xlabel) +
         "</text>\n";
  svg += "<text x=\"18\" y=\"" + std::to_string((kMarginT + kHeight - kMarginB) / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" transform=\"rotate(-90 18 " +
         std::to_string((kMarginT + kHeight - kMarginB) / 2) + ")\">" + esc(ylabel) + "</text>\n";

  for (const auto& v : vlines) {
    const double x = sx(v.x);
    svg += "<line x1=\"" + fmt_coord(x) + "\" y1=\"" + fmt_coord(py0) + "\" x2=\"" + fmt_coord(x) +
           "\" y2=\"" + fmt_coord(py1) +
           "\" stroke=\"#444444\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
    if (!v.label.empty()) {
      svg += "<text x=\"" + fmt_coord(x + 4) + "\" y=\"" + fmt_coord(py1 + 14) +
             "\" font-family=\"sans-serif\" font-size=\"11\">" + esc(v.label) + "</text>\n";
    }
  }

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(kPalette[0]))];
    std::string pts;
    for (const auto& [x, y] : series[i].points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!pts.empty()) pts += ' ';
      pts += fmt_coord(sx(x)) + "," + fmt_coord(sy(y));
    }
    svg += "<polyline fill=\"none\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    // legend
    const double ly = kMarginT + 16 + 18 * static_cast<double>(i);
    svg += "<line x1=\"" + fmt_coord(px1 - 150) + "\" y1=\"" + fmt_coord(ly) + "\" x2=\"" +
           fmt_coord(px1 - 126) + "\" y2=\"" + fmt_coord(ly) + "\" stroke=\"";
    svg += color;
    svg += "\" stroke-width=\"2\"/>\n";
    svg += "<text x=\"" + fmt_coord(px1 - 120) + "\" y=\"" + fmt_coord(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + esc(series[i].name) + "</text>\n";
  }

  for (const auto& n : notes) {
    svg += "<text x=\"" + fmt_coord(sx(n.x) + 5) + "\" y=\"" + fmt_coord(sy(n.y) - 5) +
           "\" font-family=\"sans-serif\" font-size=\"11\" fill=\"#333333\">" + esc(n.text) +
           "</text>\n";
  }

  svg += "</svg>\n";
  return svg;
}

}  // namespace senscap
